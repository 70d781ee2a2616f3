"""Privacy-loss accounting for SafeTab.

Covers the Renyi curve of the geometric mechanism, sequential and generalized
parallel composition, RDP/zCDP to (epsilon, delta) conversion, and the
end-to-end losses of SafeTab under pure DP, RDP and zCDP.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

import numpy as np

from safetab.errors import InvalidConfigurationError, InvalidParameterError


class Mechanism(str, enum.Enum):
    GEOMETRIC = "Geometric"
    DISCRETE_GAUSSIAN = "DiscreteGaussian"

    @classmethod
    def parse(cls, text: str) -> Mechanism:
        key = text.replace("-", "").replace("_", "").replace(" ", "").lower()
        for member in cls:
            if member.value.lower() == key or member.name.replace("_", "").lower() == key:
                return member
        if key in {"dgauss", "gaussian", "dg"}:
            return cls.DISCRETE_GAUSSIAN
        if key in {"geo", "laplace", "discretelaplace"}:
            return cls.GEOMETRIC
        raise InvalidConfigurationError(f"unknown mechanism {text!r}")


@dataclass(frozen=True)
class Budget:
    """Privacy parameter whose meaning depends on the mechanism.

    ``value`` is a pure-DP epsilon for the geometric mechanism and a zCDP rho
    for the discrete Gaussian.
    """

    mechanism: Mechanism
    value: float | Fraction

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value > 0):
            raise InvalidParameterError(f"budget must be positive and finite, got {self.value!r}")


@dataclass(frozen=True)
class RdpPoint:
    alpha: float
    tau: float

    def __post_init__(self):
        if not self.alpha > 1:
            raise InvalidParameterError(f"alpha must exceed 1, got {self.alpha}")


@dataclass(frozen=True)
class ApproxDp:
    """An (epsilon, delta) guarantee; ``alpha`` records the optimising order, if any."""

    epsilon: float
    delta: float
    alpha: float | None = None

    def __post_init__(self):
        if not self.epsilon >= 0 or not 0 <= self.delta < 1:
            raise InvalidParameterError(f"invalid (epsilon, delta) = ({self.epsilon}, {self.delta})")


@dataclass(frozen=True)
class LevelBudget:
    """Budget of one population-group level.

    ``budget.value`` is the level total rho_i; ``stability`` is the maximum
    number of groups at the level one record can fall into; ``gamma`` the
    Step-1 share; ``total_only`` whether every group at the level is TotalOnly.
    """

    budget: Budget
    stability: int
    gamma: float | Fraction
    total_only: bool = False

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise InvalidParameterError(f"gamma must lie in (0, 1), got {self.gamma}")
        if int(self.stability) != self.stability or self.stability < 1:
            raise InvalidParameterError(f"stability must be a positive integer, got {self.stability}")

    @property
    def rho(self):
        return self.budget.value

    @property
    def mechanism(self) -> Mechanism:
        return self.budget.mechanism


def _default_alphas() -> tuple[float, ...]:
    return tuple(i / 100 for i in range(101, 1001))


@dataclass(frozen=True)
class AlphaGrid:
    """Renyi orders to minimise over; defaults to 1.01, 1.02, ..., 10.0."""

    values: tuple[float, ...] = field(default_factory=_default_alphas)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidParameterError("alpha grid is empty")
        if any(v <= 1 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvalidParameterError("alpha grid must be strictly increasing and > 1")
        object.__setattr__(self, "values", vals)

    @classmethod
    def linear(cls, start: float, stop: float, step: float) -> AlphaGrid:
        n = int(round((stop - start) / step))
        return cls(tuple(round(start + i * step, 12) for i in range(n + 1)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


# --- Renyi divergence of the geometric mechanism --------------------------------


def tau_geometric(alpha, eps):
    """RDP curve of the geometric mechanism at privacy parameter ``eps``.

    Closed form used for SafeTab accounting::

        1/(a-1) * ln[ tanh(e/2) * ( 2a/(e(2a-1)) e^{(a-1)e}
                                    + 2(a-1)/(e(2a-1)) e^{-a e} ) ]

    Evaluated with log-sum-exp so large ``alpha * eps`` does not overflow.
    Accepts scalars or numpy arrays for ``alpha``.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a <= 1):
        raise InvalidParameterError("alpha must exceed 1")
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    eps = float(eps)
    log_pref = math.log(math.tanh(eps / 2.0))
    log_scale = np.log(2.0 / (eps * (2.0 * a - 1.0)))
    first = log_scale + np.log(a) + (a - 1.0) * eps
    second = log_scale + np.log(a - 1.0) - a * eps
    out = (log_pref + np.logaddexp(first, second)) / (a - 1.0)
    return out if out.ndim else float(out)


def renyi_geometric_discrete(alpha, eps):
    """Exact Renyi divergence between ``L_Z(1/eps)`` and its unit shift.

    Splitting the sum at x <= 0 (likelihood ratio e^eps) and x >= 1 (ratio
    e^-eps) gives ``1/(a-1) ln[ e^e/(e^e+1) (e^{(a-1)e} + e^{-a e}) ]``.
    """
    a = np.asarray(alpha, dtype=np.float64)
    eps = float(eps)
    log_pref = eps - np.logaddexp(0.0, eps)
    out = (log_pref + np.logaddexp((a - 1.0) * eps, -a * eps)) / (a - 1.0)
    return out if out.ndim else float(out)


def renyi_geometric_bruteforce(alpha: float, eps: float, radius: int = 400, shift: int = 1) -> float:
    """Renyi divergence by direct summation over ``[-radius, radius]``.

    Independent of the closed forms: sums ``p(x)^a q(x)^{1-a}`` with ``p`` the
    ``L_Z(1/eps)`` PMF and ``q`` the same PMF shifted by ``shift``. Raises if
    the dropped tail could exceed 1e-10 of the sum.
    """
    if not alpha > 1:
        raise InvalidParameterError("alpha must exceed 1")
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    log_c = math.log(math.tanh(eps / 2.0))
    log_p = log_c - np.abs(x) * eps
    log_q = log_c - np.abs(x - shift) * eps
    terms = alpha * log_p + (1.0 - alpha) * log_q
    top = terms.max()
    log_sum = top + math.log(math.fsum(np.exp(terms - top)))
    # beyond the window each term is p(x) * e^{+-(a-1) eps |shift|}
    log_tail = (
        math.log(2.0) + log_c + (alpha - 1.0) * eps * abs(shift)
        - (radius + 1 - abs(shift)) * eps - math.log(-math.expm1(-eps))
    )
    if log_tail - log_sum > math.log(1e-10):
        raise InvalidParameterError(f"radius {radius} too small for eps={eps}, alpha={alpha}")
    return log_sum / (alpha - 1.0)


# --- conversions ----------------------------------------------------------------


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise InvalidParameterError(f"delta must lie in (0, 1), got {delta}")


def _conversion_offset(alpha, delta: float):
    a = np.asarray(alpha, dtype=np.float64)
    return (math.log(1.0 / delta) + (a - 1.0) * np.log1p(-1.0 / a) - np.log(a)) / (a - 1.0)


def renyi_to_approx_dp(point: RdpPoint, delta: float) -> ApproxDp:
    """(epsilon, delta)-DP implied by (alpha, tau)-RDP."""
    _check_delta(delta)
    eps = point.tau + float(_conversion_offset(point.alpha, delta))
    # a negative value still certifies epsilon = 0
    return ApproxDp(max(eps, 0.0), delta, point.alpha)


def zcdp_to_approx_dp_analytic(rho: float, delta: float) -> ApproxDp:
    """``epsilon = rho + sqrt(4 rho ln(1/delta))``."""
    _check_delta(delta)
    rho = float(rho)
    return ApproxDp(rho + math.sqrt(4.0 * rho * math.log(1.0 / delta)), delta)


def _minimise(alphas: np.ndarray, eps: np.ndarray, delta: float) -> ApproxDp:
    i = int(np.argmin(eps))
    return ApproxDp(max(float(eps[i]), 0.0), delta, float(alphas[i]))


def zcdp_to_approx_dp_grid(rho: float, delta: float, grid: AlphaGrid | None = None) -> ApproxDp:
    """Minimise the RDP conversion of ``tau = rho * alpha`` over ``grid``."""
    _check_delta(delta)
    alphas = (grid or AlphaGrid()).as_array()
    return _minimise(alphas, float(rho) * alphas + _conversion_offset(alphas, delta), delta)


# --- composition ----------------------------------------------------------------


def compose_sequential(losses: Iterable):
    """Sum of losses; exact when every loss is rational (int or Fraction)."""
    losses = list(losses)
    if any(x < 0 for x in losses):
        raise InvalidParameterError("losses must be non-negative")
    if all(isinstance(x, Rational) for x in losses):
        return sum(losses, Fraction(0))
    return math.fsum(losses)


def compose_parallel_generalized(per_set_loss, degree: int):
    """Loss of running one mechanism per set of a family with maximum degree ``degree``."""
    if per_set_loss < 0:
        raise InvalidParameterError("loss must be non-negative")
    if int(degree) != degree or degree < 1:
        raise InvalidParameterError(f"degree must be a positive integer, got {degree}")
    return degree * per_set_loss


# --- SafeTab end-to-end ---------------------------------------------------------


def _require(levels: Sequence[LevelBudget], mechanism: Mechanism) -> None:
    if not levels:
        raise InvalidConfigurationError("no levels given")
    other = {lv.mechanism for lv in levels} - {mechanism}
    if other:
        raise InvalidConfigurationError(
            f"expected only {mechanism.value} levels, found {sorted(m.value for m in other)}"
        )


def safetab_pure_dp_loss(levels: Sequence[LevelBudget]):
    """Pure-DP epsilon of SafeTab[Geometric]: sum of level budgets."""
    _require(levels, Mechanism.GEOMETRIC)
    return compose_sequential(lv.rho for lv in levels)


def safetab_zcdp_loss(levels: Sequence[LevelBudget]):
    """zCDP rho of SafeTab[Discrete Gaussian]: sum of level budgets."""
    _require(levels, Mechanism.DISCRETE_GAUSSIAN)
    return compose_sequential(lv.rho for lv in levels)


def _level_rdp(alpha, level: LevelBudget, tight_total_only: bool):
    s = level.stability
    per_group = float(level.rho) / s
    single = tau_geometric(alpha, per_group)
    if tight_total_only and level.total_only:
        return s * single
    g = float(level.gamma)
    split = tau_geometric(alpha, g * per_group) + tau_geometric(alpha, (1.0 - g) * per_group)
    return s * np.maximum(split, single)


def safetab_rdp_loss(alpha, levels: Sequence[LevelBudget], *, tight_total_only: bool = False):
    """RDP bound ``f(alpha)`` of SafeTab[Geometric].

    Each level contributes ``s * max(tau(g rho/s) + tau((1-g) rho/s), tau(rho/s))``.
    With ``tight_total_only`` a level made only of TotalOnly groups contributes
    just ``s * tau(rho/s)``.
    """
    _require(levels, Mechanism.GEOMETRIC)
    total = sum(_level_rdp(alpha, lv, tight_total_only) for lv in levels)
    return total if np.ndim(total) else float(total)


def safetab_rdp_to_approx_dp(
    levels: Sequence[LevelBudget],
    delta: float,
    grid: AlphaGrid | None = None,
    *,
    tight_total_only: bool = False,
) -> ApproxDp:
    """Best (epsilon, delta) over the grid from the SafeTab[Geometric] RDP curve."""
    _check_delta(delta)
    alphas = (grid or AlphaGrid()).as_array()
    f = safetab_rdp_loss(alphas, levels, tight_total_only=tight_total_only)
    return _minimise(alphas, f + _conversion_offset(alphas, delta), delta)


def safetab_rdp_discrete_to_approx_dp(
    levels: Sequence[LevelBudget], delta: float, grid: AlphaGrid | None = None
) -> ApproxDp:
    """Same analysis with the exact discrete divergence in place of the closed form.

    Diagnostic only; reported next to the main RDP figure.
    """
    _check_delta(delta)
    _require(levels, Mechanism.GEOMETRIC)
    alphas = (grid or AlphaGrid()).as_array()
    f = np.zeros_like(alphas)
    for lv in levels:
        s, per_group, g = lv.stability, float(lv.rho) / lv.stability, float(lv.gamma)
        split = renyi_geometric_discrete(alphas, g * per_group) + renyi_geometric_discrete(
            alphas, (1 - g) * per_group
        )
        f += s * np.maximum(split, renyi_geometric_discrete(alphas, per_group))
    return _minimise(alphas, f + _conversion_offset(alphas, delta), delta)
