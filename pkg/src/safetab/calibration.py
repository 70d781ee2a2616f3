"""MOE targets to SafeTab budgets, and the privacy-loss summaries built on them.

A level's MOE target fixes the Step-2 noise of every group at that level. The
per-group base budget comes from :func:`safetab.noise.epsilon_from_moe` or
:func:`safetab.noise.rho_from_moe`; dividing by ``1 - gamma`` adds the Step-1
share and multiplying by the stability ``s`` aggregates over the groups a
record can reach.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from safetab import accounting as acc
from safetab.accounting import AlphaGrid, ApproxDp, Budget, LevelBudget, Mechanism
from safetab.errors import InvalidConfigurationError, InvalidParameterError
from safetab.noise import epsilon_from_moe
from safetab.tabulation.model import DEFAULT_THRESHOLDS, LevelPlan

DEFAULT_GAMMA = Fraction(1, 10)
DEFAULT_STABILITY = 9
DEFAULT_DELTA = 1e-10
SWEEP_MOES = tuple(range(5, 12))
NATION_STATE_DETAILED = ("(Nation, Detailed)", "(State, Detailed)")


@dataclass(frozen=True)
class LevelTemplate:
    name: str
    geo_level: str
    tier: str
    moe: int


# The seven population-group levels of the production operating point.
DEFAULT_LEVELS: tuple[LevelTemplate, ...] = (
    LevelTemplate("(Nation, Detailed)", "Nation", "Detailed", 6),
    LevelTemplate("(State, Detailed)", "State", "Detailed", 6),
    LevelTemplate("(County, Detailed)", "County", "Detailed", 11),
    LevelTemplate("(AIANNH, Detailed)", "AIANNH", "Detailed", 11),
    LevelTemplate("(Nation, Regional)", "Nation", "Regional", 50),
    LevelTemplate("(State, Regional)", "State", "Regional", 50),
    LevelTemplate("(County, Regional)", "County", "Regional", 50),
)

# Published Step-2 value for the MOE-50 geometric rows; the formula gives
# 9 ln(20) / 51 = 0.5287. Reported next to the computed value, never used.
PUBLISHED_GEOMETRIC_STEP2_MOE50 = 0.531


@dataclass(frozen=True)
class MoeTargetRow:
    level: str
    moe_target: int
    mechanism: Mechanism

    def __post_init__(self):
        if int(self.moe_target) != self.moe_target or self.moe_target < 1:
            raise InvalidParameterError(f"MOE target must be a positive integer, got {self.moe_target!r}")


@dataclass(frozen=True)
class CalibrationRow:
    """Budgets of one level; ``total_loss`` is the level input ``rho_i``."""

    level: str
    moe_target: int
    mechanism: Mechanism
    step2_loss: float | Fraction
    total_loss: float | Fraction


def _as_fraction(x) -> Fraction:
    # 0.1 given as a float means one tenth, not its binary approximation
    return x if isinstance(x, Fraction) else Fraction(str(x))


def _base_budget(moe: int, mechanism: Mechanism):
    if mechanism is Mechanism.GEOMETRIC:
        return epsilon_from_moe(moe)
    if int(moe) != moe or moe < 1:
        raise InvalidParameterError(f"MOE must be a positive integer, got {moe!r}")
    # same value as rho_from_moe, kept rational so budgets compose exactly
    return Fraction(192, 100) / (int(moe) ** 2)


def calibrate_level(
    moe: int,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
    mechanism: Mechanism = Mechanism.GEOMETRIC,
    level: str = "",
) -> CalibrationRow:
    """Step-2 and total budget of a level from its MOE target.

    The geometric budgets are floats (they involve ``ln 20``); discrete
    Gaussian budgets are exact fractions.

    Args:
        moe: Target margin of error for Step-2 counts.
        gamma: Step-1 share of each group's budget.
        s: Stability of the level.
        mechanism: Base noise mechanism.
        level: Label carried into the row.

    Returns:
        A :class:`CalibrationRow` with ``step2 = s * base`` and
        ``total = s * base / (1 - gamma)``.
    """
    mechanism = Mechanism(mechanism)
    g = _as_fraction(gamma)
    if not 0 < g < 1:
        raise InvalidParameterError(f"gamma must lie in (0, 1), got {gamma}")
    if int(s) != s or s < 1:
        raise InvalidParameterError(f"stability must be a positive integer, got {s}")
    base = _base_budget(moe, mechanism)
    if isinstance(base, Fraction):
        step2 = s * base
        total = step2 / (1 - g)
    else:
        step2 = s * base
        total = step2 / float(1 - g)
    return CalibrationRow(level, int(moe), mechanism, step2, total)


def _resolve_moes(moe_overrides: Mapping[str, int] | None) -> list[tuple[LevelTemplate, int]]:
    overrides = dict(moe_overrides or {})
    known = {t.name for t in DEFAULT_LEVELS}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise InvalidConfigurationError(f"unknown level name(s) {unknown}; expected one of {sorted(known)}")
    return [(t, overrides.get(t.name, t.moe)) for t in DEFAULT_LEVELS]


def nation_state_override(moe: int | None) -> dict[str, int]:
    """Overrides setting both Nation and State detailed levels to ``moe``."""
    return {} if moe is None else {name: moe for name in NATION_STATE_DETAILED}


def calibration_table(
    moe_overrides: Mapping[str, int] | None = None,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
) -> list[tuple[CalibrationRow, CalibrationRow]]:
    """(geometric, discrete Gaussian) calibration rows for every default level."""
    out = []
    for tmpl, moe in _resolve_moes(moe_overrides):
        out.append(
            (
                calibrate_level(moe, gamma, s, Mechanism.GEOMETRIC, tmpl.name),
                calibrate_level(moe, gamma, s, Mechanism.DISCRETE_GAUSSIAN, tmpl.name),
            )
        )
    return out


def build_paper_config(
    moe_overrides: Mapping[str, int] | None = None,
    mechanism: Mechanism = Mechanism.GEOMETRIC,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
) -> list[LevelBudget]:
    """Level budgets of the seven-level operating point.

    ``moe_overrides`` maps level names (as in :data:`DEFAULT_LEVELS`) to
    replacement MOE targets; unknown names raise.
    """
    mechanism = Mechanism(mechanism)
    levels = []
    for tmpl, moe in _resolve_moes(moe_overrides):
        row = calibrate_level(moe, gamma, s, mechanism, tmpl.name)
        levels.append(LevelBudget(Budget(mechanism, row.total_loss), s, _as_fraction(gamma)))
    return levels


# --- four-analysis summary ------------------------------------------------------


@dataclass(frozen=True)
class PrivacyReport:
    """Privacy loss of both SafeTab variants under the four analyses.

    Attributes:
        pure_dp: epsilon of SafeTab[Geometric] at delta = 0.
        rdp: best (epsilon, delta) from the RDP curve of SafeTab[Geometric].
        zcdp_rho: total rho of SafeTab[Discrete Gaussian].
        zcdp_analytic: closed-form zCDP to (epsilon, delta) conversion.
        zcdp_grid: grid-minimised zCDP conversion.
        rdp_discrete: the RDP analysis redone with the exact discrete divergence.
    """

    delta: float
    pure_dp: float
    rdp: ApproxDp
    zcdp_rho: float
    zcdp_analytic: ApproxDp
    zcdp_grid: ApproxDp
    rdp_discrete: ApproxDp

    @property
    def values(self) -> tuple[float, float, float, float]:
        return (self.pure_dp, self.rdp.epsilon, self.zcdp_analytic.epsilon, self.zcdp_grid.epsilon)

    @property
    def divergence_ratio(self) -> float:
        """RDP epsilon with the closed form over the one with the discrete sum."""
        return self.rdp.epsilon / self.rdp_discrete.epsilon


def privacy_report(
    moe_overrides: Mapping[str, int] | None = None,
    delta: float = DEFAULT_DELTA,
    grid: AlphaGrid | None = None,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
) -> PrivacyReport:
    """Evaluate the four analyses for the operating point with ``moe_overrides``."""
    grid = grid or AlphaGrid()
    geo = build_paper_config(moe_overrides, Mechanism.GEOMETRIC, gamma, s)
    dg = build_paper_config(moe_overrides, Mechanism.DISCRETE_GAUSSIAN, gamma, s)
    rho = float(acc.safetab_zcdp_loss(dg))
    return PrivacyReport(
        delta=delta,
        pure_dp=float(acc.safetab_pure_dp_loss(geo)),
        rdp=acc.safetab_rdp_to_approx_dp(geo, delta, grid),
        zcdp_rho=rho,
        zcdp_analytic=acc.zcdp_to_approx_dp_analytic(rho, delta),
        zcdp_grid=acc.zcdp_to_approx_dp_grid(rho, delta, grid),
        rdp_discrete=acc.safetab_rdp_discrete_to_approx_dp(geo, delta, grid),
    )


def moe_sweep(
    moes: Sequence[int] = SWEEP_MOES,
    delta: float = DEFAULT_DELTA,
    grid: AlphaGrid | None = None,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
) -> list[tuple[int, PrivacyReport]]:
    """Privacy reports with the Nation/State detailed MOE set to each of ``moes``."""
    return [(m, privacy_report(nation_state_override(m), delta, grid, gamma, s)) for m in moes]


# --- formatting -----------------------------------------------------------------

ANALYSES = ("Pure DP", "RDP", "zCDP (analytic)", "zCDP (grid)")


def _sig3(x) -> str:
    return f"{float(x):.3g}"


def _align(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header, *rows]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def format_calibration_table(table, fmt: str = "text") -> str:
    """MOE targets with Step-2 and total budgets for both mechanisms."""
    header = ["level", "moe", "geo_step2", "geo_total", "dg_step2", "dg_total"]
    if fmt == "csv":
        rows = [
            [g.level, g.moe_target, repr(float(g.step2_loss)), repr(float(g.total_loss)),
             repr(float(d.step2_loss)), repr(float(d.total_loss))]
            for g, d in table
        ]
        return _csv(header, rows)
    rows = [
        [g.level, str(g.moe_target), _sig3(g.step2_loss), _sig3(g.total_loss),
         _sig3(d.step2_loss), _sig3(d.total_loss)]
        for g, d in table
    ]
    text = _align(header, rows)
    notes = []
    for g, _ in table:
        if g.moe_target == 50:
            rel = float(g.step2_loss) / PUBLISHED_GEOMETRIC_STEP2_MOE50 - 1.0
            notes.append(
                f"note: {g.level} geometric step-2 budget {float(g.step2_loss):.4f} "
                f"vs published {PUBLISHED_GEOMETRIC_STEP2_MOE50} ({rel:+.2%})"
            )
            break
    return "\n".join([text, *notes])


def format_privacy_report(report: PrivacyReport, fmt: str = "text") -> str:
    """One row per analysis, with the optimising alpha where there is one."""
    entries = [
        (ANALYSES[0], report.pure_dp, 0.0, None),
        (ANALYSES[1], report.rdp.epsilon, report.delta, report.rdp.alpha),
        (ANALYSES[2], report.zcdp_analytic.epsilon, report.delta, None),
        (ANALYSES[3], report.zcdp_grid.epsilon, report.delta, report.zcdp_grid.alpha),
    ]
    header = ["analysis", "epsilon", "delta", "alpha"]
    if fmt == "csv":
        rows = [[a, repr(e), repr(d), "" if al is None else repr(al)] for a, e, d, al in entries]
        return _csv(header, rows)
    rows = [[a, f"{e:.1f}", f"{d:g}", "" if al is None else f"{al:.2f}"] for a, e, d, al in entries]
    diag = (
        f"zCDP rho total: {report.zcdp_rho:.6f}\n"
        f"RDP with exact discrete divergence: epsilon {report.rdp_discrete.epsilon:.3f} "
        f"(alpha {report.rdp_discrete.alpha:.2f}); closed-form/discrete ratio "
        f"{report.divergence_ratio:.4f}"
    )
    return _align(header, rows) + "\n" + diag


def format_sweep(sweep: Sequence[tuple[int, PrivacyReport]], fmt: str = "text") -> str:
    """Nation/State detailed MOE against the four analyses."""
    header = ["moe", "pure_dp", "rdp", "zcdp_analytic", "zcdp_grid"]
    if fmt == "csv":
        return _csv(header, [[m, *(repr(v) for v in r.values)] for m, r in sweep])
    return _align(header, [[str(m), *(f"{v:.1f}" for v in r.values)] for m, r in sweep])


def full_report(
    moe_overrides: Mapping[str, int] | None = None,
    delta: float = DEFAULT_DELTA,
    grid: AlphaGrid | None = None,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
    sweep: Sequence[int] = SWEEP_MOES,
    fmt: str = "text",
) -> str:
    """Budget table, four-analysis summary and MOE sweep as one document."""
    table = calibration_table(moe_overrides, gamma, s)
    report = privacy_report(moe_overrides, delta, grid, gamma, s)
    swept = moe_sweep(sweep, delta, grid, gamma, s) if sweep else []
    if fmt == "csv":
        parts = [
            "# budgets\n" + format_calibration_table(table, "csv"),
            "# privacy_loss\n" + format_privacy_report(report, "csv"),
        ]
        if swept:
            parts.append("# moe_sweep\n" + format_sweep(swept, "csv"))
        return "".join(parts)
    parts = [
        "MOE targets and level budgets (geometric: epsilon, discrete Gaussian: rho)",
        format_calibration_table(table),
        "",
        f"Privacy loss at delta = {delta:g}",
        format_privacy_report(report),
    ]
    if swept:
        parts += ["", "Nation/State detailed MOE sweep", format_sweep(swept)]
    return "\n".join(parts) + "\n"



def build_level_plans(
    moe_overrides: Mapping[str, int] | None = None,
    mechanism: Mechanism = Mechanism.GEOMETRIC,
    gamma=DEFAULT_GAMMA,
    s: int = DEFAULT_STABILITY,
    thresholds: tuple[int, int, int] | None = None,
):
    """Tabulation level plans (ids 1..7) for the operating point."""
    budgets = build_paper_config(moe_overrides, mechanism, gamma, s)
    return [
        LevelPlan(i, tmpl.geo_level, tmpl.tier, budget, thresholds or DEFAULT_THRESHOLDS, tmpl.name)
        for i, (tmpl, budget) in enumerate(zip(DEFAULT_LEVELS, budgets), start=1)
    ]
