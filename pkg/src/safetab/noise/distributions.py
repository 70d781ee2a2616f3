"""Two-sided geometric and discrete Gaussian noise.

PMFs and tail bounds are evaluated in floating point in the log domain.
Sampling is exact: scales are turned into rationals and every random decision
is an integer comparison against uniformly drawn integers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Union

import numpy as np

from safetab.errors import InvalidParameterError
from safetab.noise import _backend

Real = Union[int, float, Fraction]

# Float scales whose binary expansion needs a larger denominator are rounded
# up to a multiple of 2**-32 before sampling (more noise, never less).
_MAX_DENOMINATOR = 1 << 32
_LN20 = math.log(20.0)
_LN40 = math.log(40.0)


def _check_positive(name: str, value: Real) -> None:
    try:
        ok = math.isfinite(value) and value > 0
    except TypeError:
        ok = False
    if not ok:
        raise InvalidParameterError(f"{name} must be positive and finite, got {value!r}")


def rational_scale(value: Real) -> Fraction:
    """Exact rational used by the samplers for a noise scale ``value``."""
    frac = Fraction(value)
    if frac.denominator <= _MAX_DENOMINATOR:
        return frac
    return Fraction(math.ceil(frac * _MAX_DENOMINATOR), _MAX_DENOMINATOR)


@dataclass(frozen=True)
class GeometricScale:
    """Scale ``b`` of the two-sided geometric distribution (``b = 1/epsilon``)."""

    b: Real

    def __post_init__(self):
        _check_positive("b", self.b)

    @classmethod
    def from_epsilon(cls, epsilon: Real) -> GeometricScale:
        _check_positive("epsilon", epsilon)
        if isinstance(epsilon, (int, Fraction)):
            return cls(1 / Fraction(epsilon))
        return cls(1.0 / epsilon)

    @property
    def epsilon(self) -> float:
        return 1.0 / float(self.b)


@dataclass(frozen=True)
class GaussianScale:
    """Variance ``sigma2`` of the discrete Gaussian (``sigma2 = 1/(2 rho)``)."""

    sigma2: Real

    def __post_init__(self):
        _check_positive("sigma2", self.sigma2)

    @classmethod
    def from_rho(cls, rho: Real) -> GaussianScale:
        _check_positive("rho", rho)
        if isinstance(rho, (int, Fraction)):
            return cls(1 / (2 * Fraction(rho)))
        return cls(1.0 / (2.0 * rho))

    @property
    def sigma(self) -> float:
        return math.sqrt(float(self.sigma2))


class RandomSource:
    """Seedable source of raw 64-bit words for the exact samplers.

    Backed by numpy's PCG64 seeded through ``SeedSequence``. For a given
    numpy release the seed-to-stream mapping is fixed; it is not promised to
    be stable across releases of this package. Not thread-safe: give each
    concurrent task its own source.
    """

    def __init__(self, seed: int | list[int]):
        seeds = seed if isinstance(seed, list) else [seed]
        for s in seeds:
            if not isinstance(s, (int, np.integer)) or s < 0:
                raise InvalidParameterError(f"seed must be a non-negative integer, got {s!r}")
        if not isinstance(seed, list) and seed >= 1 << 64:
            raise InvalidParameterError("seed must fit in 64 bits")
        self.bit_generator = np.random.PCG64(np.random.SeedSequence(seeds))

    @classmethod
    def derive(cls, seed: int, *key) -> RandomSource:
        """Independent stream for ``key`` under ``seed``; independent of call order."""
        text = "\x1f".join(str(part) for part in key).encode()
        digest = hashlib.blake2b(text, digest_size=16).digest()
        return cls([seed, int.from_bytes(digest, "little")])


# --- probability mass functions -------------------------------------------------


def geometric_pmf(x, scale: GeometricScale):
    """``P[X = x]`` for ``X ~ L_Z(b)``: ``tanh(1/2b) * exp(-|x|/b)``."""
    inv_b = 1.0 / float(scale.b)
    # (e^{1/b} - 1) / (e^{1/b} + 1) == tanh(1/(2b))
    log_norm = math.log(math.tanh(inv_b / 2.0))
    return np.exp(log_norm - np.abs(x) * inv_b)


@lru_cache(maxsize=512)
def _dgauss_log_normalizer(sigma2: float) -> float:
    # Truncated at R = ceil(20 sigma) + 1. The dropped mass is below
    # 2 sum_{y>R} exp(-y^2/2sigma^2) <= 2 e^{-200} * (1 + sigma), relative
    # error far under 1e-80.
    radius = math.ceil(20.0 * math.sqrt(sigma2)) + 1
    y = np.arange(1, radius + 1, dtype=np.float64)
    tail = math.fsum(np.exp(-(y * y) / (2.0 * sigma2)))
    return math.log1p(2.0 * tail)


def dgauss_pmf(x, scale: GaussianScale):
    """``P[X = x]`` for ``X ~ N_Z(sigma2)`` with a truncated normaliser."""
    sigma2 = float(scale.sigma2)
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-(x * x) / (2.0 * sigma2) - _dgauss_log_normalizer(sigma2))
    return out if out.ndim else float(out)


# --- tails and margins of error -------------------------------------------------


def geometric_tail(y: float, scale: GeometricScale) -> float:
    """Upper bound ``e^{-ceil(y)/b} / (1 + e^{-1/b})`` on ``P[Y >= y]``."""
    inv_b = 1.0 / float(scale.b)
    return math.exp(-math.ceil(y) * inv_b) / (1.0 + math.exp(-inv_b))


def moe_geometric(scale: GeometricScale) -> int:
    """Integral 95% MOE ``floor(b ln(40 / (1 + e^{1/b})))``, clamped at 0."""
    b = float(scale.b)
    inv_b = 1.0 / b
    # ln(1 + e^{1/b}) without overflow for tiny b
    log_denom = inv_b + math.log1p(math.exp(-inv_b))
    value = b * (_LN40 - log_denom)
    return max(0, math.floor(value))


def moe_dgauss(scale: GaussianScale) -> int:
    """Integral 95% MOE ``floor(1.96 sigma)``."""
    return math.floor(1.96 * math.sqrt(float(scale.sigma2)))


def _check_moe(moe: Real) -> int:
    try:
        ok = math.isfinite(moe) and moe >= 1
    except TypeError:
        ok = False
    if not ok:
        raise InvalidParameterError(f"MOE must be >= 1, got {moe!r}")
    return math.floor(moe)


def epsilon_from_moe(moe: Real) -> float:
    """Pure-DP epsilon whose geometric noise has MOE at most ``moe``."""
    return _LN20 / (_check_moe(moe) + 1)


def rho_from_moe(moe: Real) -> float:
    """zCDP rho whose discrete Gaussian noise has MOE at most ``moe``."""
    m = _check_moe(moe)
    return 1.92 / (m * m)


def geometric_interval_mass(moe: int, scale: GeometricScale) -> float:
    """Exact ``P[|Y| <= moe]``; uses ``P[Y >= k] = q^k / (1 + q)`` for ``k >= 1``."""
    q = math.exp(-1.0 / float(scale.b))
    return 1.0 - 2.0 * q ** (math.floor(moe) + 1) / (1.0 + q)


def dgauss_interval_mass(moe: int, scale: GaussianScale) -> float:
    """``P[|X| <= moe]`` summed from the PMF."""
    x = np.arange(-math.floor(moe), math.floor(moe) + 1)
    return math.fsum(dgauss_pmf(x, scale))


# --- samplers -------------------------------------------------------------------


def _laplace_params(scale: GeometricScale) -> tuple[int, int]:
    b = rational_scale(scale.b)
    return b.numerator, b.denominator


def _gaussian_params(scale: GaussianScale) -> tuple[int, int]:
    s2 = rational_scale(scale.sigma2)
    return s2.numerator, s2.denominator


def sample_geometric(scale: GeometricScale, rng: RandomSource, *, backend=None) -> int:
    """One exact draw from ``L_Z(b)``."""
    num, den = _laplace_params(scale)
    return _backend.laplace(num, den, rng.bit_generator, backend=backend)


def sample_dgauss(scale: GaussianScale, rng: RandomSource, *, backend=None) -> int:
    """One exact draw from ``N_Z(sigma2)``."""
    num, den = _gaussian_params(scale)
    return _backend.gaussian(num, den, rng.bit_generator, backend=backend)


def sample_geometric_many(
    scale: GeometricScale, rng: RandomSource, size: int, *, backend=None
) -> np.ndarray:
    num, den = _laplace_params(scale)
    return _backend.laplace(num, den, rng.bit_generator, size=size, backend=backend)


def sample_dgauss_many(
    scale: GaussianScale, rng: RandomSource, size: int, *, backend=None
) -> np.ndarray:
    num, den = _gaussian_params(scale)
    return _backend.gaussian(num, den, rng.bit_generator, size=size, backend=backend)
