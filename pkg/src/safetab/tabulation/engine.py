"""SafeTab: population-group mapping, stability, and the two-step tabulation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from safetab import accounting as acc
from safetab.accounting import Mechanism
from safetab.errors import InvalidConfigurationError, InvalidParameterError
from safetab.noise import (
    GaussianScale,
    GeometricScale,
    RandomSource,
    sample_dgauss_many,
    sample_geometric_many,
)
from safetab.tabulation.model import (
    DEFAULT_RACE_MULTIPLICITY,
    MAX_AGE,
    TOTAL_CELL,
    AgeBucketing,
    AgeScheme,
    Characteristic,
    GeoConfig,
    IterationConfig,
    LevelPlan,
    Mode,
    PersonRecord,
    PopulationGroup,
    Sex,
    TabulationOutput,
    TabulationRow,
    cell_label,
    default_bucketings,
    format_budget,
)

_SEXES = (Sex.MALE, Sex.FEMALE)
_N_AGES = MAX_AGE + 1


def iterations_at(tier, iters: Sequence[IterationConfig]) -> list[IterationConfig]:
    return [it for it in iters if it.tier is tier]


# --- g_i ------------------------------------------------------------------------


def map_to_groups(
    record: PersonRecord, level: LevelPlan, geo: GeoConfig, iters: Sequence[IterationConfig]
) -> set[PopulationGroup]:
    """Population groups at ``level`` that contain ``record``.

    Raises:
        IngestionError: ``record.block_id`` is not in ``geo``.
    """
    geos = geo.entities_of_block(record.block_id, level.geo_level)
    codes = [it.iteration_code for it in iterations_at(level.tier, iters) if it.matches(record)]
    return {PopulationGroup(g, c) for g in geos for c in codes}


# --- stability ------------------------------------------------------------------


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _max_race_matches(iters: Sequence[IterationConfig], multiplicity: int) -> int:
    # Codes contained in exactly the same iterations are interchangeable, and
    # a second code from a class already chosen changes nothing; so search over
    # sets of at most `multiplicity` distinct classes.
    members: dict[int, int] = {}
    for i, it in enumerate(iters):
        for c in it.code_set:
            members[c] = members.get(c, 0) | (1 << i)
    alone_mask = sum(1 << i for i, it in enumerate(iters) if it.mode is Mode.ALONE)
    classes = sorted(
        {(sig & ~alone_mask, sig & alone_mask) for sig in set(members.values())},
        key=lambda c: (-_popcount(c[0]), -_popcount(c[1])),
    )
    if not classes:
        return 0
    aic = [c[0] for c in classes]
    alone = [c[1] for c in classes]
    n = len(classes)
    best = max(_popcount(a) + _popcount(b) for a, b in classes)

    def bound(start: int, depth: int, aic_or: int, alone_and: int | None) -> int:
        gains = sorted((_popcount(aic[k] & ~aic_or) for k in range(start, n)), reverse=True)
        alone_ub = (
            max(_popcount(alone[k]) for k in range(start, n)) if alone_and is None
            else _popcount(alone_and)
        )
        return _popcount(aic_or) + sum(gains[: multiplicity - depth]) + alone_ub

    def search(start: int, depth: int, aic_or: int, alone_and: int | None) -> None:
        nonlocal best
        if alone_and is not None:
            best = max(best, _popcount(aic_or) + _popcount(alone_and))
        if depth == multiplicity:
            return
        for k in range(start, n):
            if bound(k, depth, aic_or, alone_and) <= best:
                break
            search(k + 1, depth + 1, aic_or | aic[k], alone[k] if alone_and is None else alone_and & alone[k])

    search(0, 0, 0, None)
    return best


def _max_ethnicity_matches(iters: Sequence[IterationConfig]) -> int:
    hits: dict[int, int] = {}
    for it in iters:
        for c in it.code_set:
            hits[c] = hits.get(c, 0) + 1
    return max(hits.values(), default=0)


def max_iterations_per_record(
    iters: Sequence[IterationConfig], race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY
) -> int:
    """Most iterations of ``iters`` a single record can belong to."""
    race = [it for it in iters if it.characteristic is Characteristic.RACE]
    eth = [it for it in iters if it.characteristic is Characteristic.ETHNICITY]
    return _max_race_matches(race, race_multiplicity) + _max_ethnicity_matches(eth)


def stability(
    level: LevelPlan,
    iters: Sequence[IterationConfig],
    geo: GeoConfig,
    race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY,
) -> int:
    """Exact ``max_r |g_i(r)|`` over every record the domain allows (at least 1)."""
    per_geo = max_iterations_per_record(iterations_at(level.tier, iters), race_multiplicity)
    return max(1, per_geo * geo.max_entities_per_block(level.geo_level))


# --- noisy counts and per-group tabulation ------------------------------------


def _draws(mechanism: Mechanism, budget, rng: RandomSource, size: int) -> np.ndarray:
    if mechanism is Mechanism.GEOMETRIC:
        return sample_geometric_many(GeometricScale.from_epsilon(budget), rng, size)
    return sample_dgauss_many(GaussianScale.from_rho(budget), rng, size)


def _check_budget(budget) -> None:
    try:
        ok = budget > 0 and float(budget) < float("inf")
    except TypeError:
        ok = False
    if not ok:
        raise InvalidParameterError(f"budget must be positive and finite, got {budget!r}")


def noisy_count(count: int, mechanism: Mechanism, budget, rng: RandomSource) -> int:
    """``count`` plus geometric noise with ``epsilon = budget`` or discrete
    Gaussian noise with ``rho = budget``."""
    _check_budget(budget)
    return int(count) + int(_draws(Mechanism(mechanism), budget, rng, 1)[0])


def _scale(x, factor):
    if isinstance(x, Fraction) and isinstance(factor, (int, Fraction)):
        return x * factor
    return float(x) * float(factor)


def _counts_from_records(records: Iterable[PersonRecord]) -> np.ndarray:
    counts = np.zeros((2, _N_AGES), dtype=np.int64)
    for r in records:
        counts[0 if r.sex is Sex.MALE else 1, r.age] += 1
    return counts


def _select_scheme(total: int, thresholds: tuple[int, int, int]) -> AgeScheme:
    t1, t2, t3 = thresholds
    if total < t1:
        return AgeScheme.AGE1
    if total < t2:
        return AgeScheme.AGE4
    if total < t3:
        return AgeScheme.AGE9
    return AgeScheme.AGE23


def _tabulate_counts(
    counts: np.ndarray,
    group: PopulationGroup,
    plan: LevelPlan,
    rng: RandomSource,
    total_only: bool,
    bucketings: Mapping[AgeScheme, AgeBucketing],
    instrument: bool,
) -> list[TabulationRow]:
    mech = plan.mechanism
    rho = _scale(plan.budget.rho, Fraction(1, plan.budget.stability))
    true_total = int(counts.sum())

    def row(cell: str, noisy: int, budget, true: int) -> TabulationRow:
        return TabulationRow(plan.level_id, group.geo_id, group.iteration_code, cell, int(noisy),
                             mech, budget, true if instrument else None)

    if total_only:
        return [row(TOTAL_CELL, true_total + _draws(mech, rho, rng, 1)[0], rho, true_total)]

    gamma = plan.budget.gamma
    step1 = true_total + int(_draws(mech, _scale(rho, gamma), rng, 1)[0])
    rho2 = _scale(rho, 1 - gamma)
    scheme = _select_scheme(step1, plan.thresholds)
    if scheme is AgeScheme.AGE1:
        return [row(TOTAL_CELL, true_total + _draws(mech, rho2, rng, 1)[0], rho2, true_total)]

    bucketing = bucketings[scheme]
    k = len(bucketing.boundaries)
    index = np.asarray(bucketing.bucket_of_ages())
    cells = np.zeros((2, k), dtype=np.int64)
    for s in range(2):
        cells[s] = np.bincount(index, weights=counts[s], minlength=k).astype(np.int64)
    noise = _draws(mech, rho2, rng, 2 * k).reshape(2, k)
    labels = bucketing.labels
    return [
        row(cell_label(sex, labels[b]), cells[s, b] + noise[s, b], rho2, int(cells[s, b]))
        for s, sex in enumerate(_SEXES)
        for b in range(k)
    ]


def tabulate_population_group(
    records: Iterable[PersonRecord],
    group: PopulationGroup,
    plan: LevelPlan,
    rng: RandomSource,
    *,
    total_only: bool = False,
    bucketings: Mapping[AgeScheme, AgeBucketing] | None = None,
    instrument: bool = False,
) -> list[TabulationRow]:
    """Released rows for one population group.

    ``records`` must already be the group's members. The group receives
    ``rho = rho_i / s``. A TotalOnly group gets one noisy total at ``rho``.
    Otherwise a Step-1 total at ``gamma * rho`` picks the granularity and every
    Step-2 cell (empty ones included) is released at ``(1 - gamma) * rho``.

    Args:
        records: Members of ``group``.
        group: The population group being tabulated.
        plan: Level plan holding budget, stability and thresholds.
        rng: Source of the group's noise.
        total_only: Whether the group's iteration is TotalOnly.
        bucketings: Age schemes; defaults to :func:`default_bucketings`.
        instrument: Fill ``true_count`` on each row (testing only).
    """
    return _tabulate_counts(
        _counts_from_records(records), group, plan, rng, total_only,
        bucketings or default_bucketings(), instrument,
    )


# --- full run -----------------------------------------------------------------


def _group_seed_key(plan: LevelPlan, group: PopulationGroup) -> tuple:
    return (plan.level_id, group.geo_id, group.iteration_code)


def validate_run(
    plans: Sequence[LevelPlan],
    geo: GeoConfig,
    iters: Sequence[IterationConfig],
    *,
    mechanism: Mechanism | None = None,
    gamma=None,
    race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY,
) -> None:
    """Reject inconsistent configurations before any noise is drawn."""
    if not plans:
        raise InvalidConfigurationError("no level plans")
    mechs = {p.mechanism for p in plans}
    if len(mechs) != 1:
        raise InvalidConfigurationError(f"level plans mix mechanisms {sorted(m.value for m in mechs)}")
    if mechanism is not None and Mechanism(mechanism) not in mechs:
        raise InvalidConfigurationError(f"plans use {mechs.pop().value}, run requested {Mechanism(mechanism).value}")
    ids = [p.level_id for p in plans]
    if len(set(ids)) != len(ids):
        raise InvalidConfigurationError("duplicate level ids")
    geo.validate()
    for p in plans:
        if gamma is not None and p.budget.gamma != gamma:
            raise InvalidConfigurationError(f"level {p.level_id} uses gamma {p.budget.gamma}, run requested {gamma}")
        tier_iters = iterations_at(p.tier, iters)
        if p.budget.total_only and not all(it.total_only for it in tier_iters):
            raise InvalidConfigurationError(f"level {p.level_id} is marked total_only but has non-TotalOnly iterations")
        actual = stability(p, iters, geo, race_multiplicity)
        if p.budget.stability < actual:
            raise InvalidConfigurationError(
                f"level {p.level_id} declares stability {p.budget.stability} but records can reach {actual} groups"
            )


def level_counts(
    records: Sequence[PersonRecord],
    plan: LevelPlan,
    geo: GeoConfig,
    iters: Sequence[IterationConfig],
) -> tuple[list[PopulationGroup], np.ndarray]:
    """Every configured group at the level with its (sex, age) count matrix."""
    tier_iters = iterations_at(plan.tier, iters)
    entities = geo.entities(plan.geo_level)
    n_it = len(tier_iters)
    geo_index = {g: i for i, g in enumerate(entities)}
    groups = [PopulationGroup(g, it.iteration_code) for g in entities for it in tier_iters]

    match_cache: dict[tuple, list[int]] = {}
    flat: list[int] = []
    for r in records:
        key = (r.race_codes, r.ethnicity_code)
        its = match_cache.get(key)
        if its is None:
            its = [i for i, it in enumerate(tier_iters) if it.matches(r)]
            match_cache[key] = its
        if not its:
            continue
        cell = (0 if r.sex is Sex.MALE else 1) * _N_AGES + r.age
        for g in geo.entities_of_block(r.block_id, plan.geo_level):
            base = geo_index[g] * n_it
            flat.extend((base + i) * 2 * _N_AGES + cell for i in its)
    counts = np.bincount(np.asarray(flat, dtype=np.int64), minlength=len(groups) * 2 * _N_AGES)
    return groups, counts.reshape(len(groups), 2, _N_AGES)


def safetab_run(
    records: Sequence[PersonRecord],
    plans: Sequence[LevelPlan],
    geo: GeoConfig,
    iters: Sequence[IterationConfig],
    seed: int,
    *,
    mechanism: Mechanism | None = None,
    gamma=None,
    bucketings: Mapping[AgeScheme, AgeBucketing] | None = None,
    race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY,
    instrument: bool = False,
) -> TabulationOutput:
    """Tabulate every configured population group of every level.

    Each group draws from its own stream keyed by (seed, level, geography,
    iteration), so the output does not depend on processing order.

    Raises:
        InvalidConfigurationError: plans, geography and iterations disagree.
        IngestionError: a record is invalid or names an unknown block.
    """
    validate_run(plans, geo, iters, mechanism=mechanism, gamma=gamma, race_multiplicity=race_multiplicity)
    for r in records:
        r.validate(race_multiplicity)
        geo.entities_of_block(r.block_id, plans[0].geo_level)
    bucketings = bucketings or default_bucketings()
    total_only = {it.iteration_code: it.total_only for it in iters}

    out = TabulationOutput()
    for plan in plans:
        groups, counts = level_counts(records, plan, geo, iters)
        for group, c in zip(groups, counts):
            rng = RandomSource.derive(seed, *_group_seed_key(plan, group))
            out.rows.extend(
                _tabulate_counts(c, group, plan, rng, total_only[group.iteration_code], bucketings, instrument)
            )
    return out


# --- budget ledger --------------------------------------------------------------


@dataclass(frozen=True)
class LedgerEntry:
    level_id: int
    rho: object
    stability: int
    per_group: object
    composed: object


@dataclass(frozen=True)
class BudgetLedger:
    """Loss of a run, composed level by level.

    Each level spends ``rho_i / s`` per group over groups of degree ``s``,
    which composes to ``rho_i``; levels then add up sequentially.
    """

    mechanism: Mechanism
    per_level: tuple[LedgerEntry, ...]
    total: object

    def to_json(self, delta: float | None = None) -> dict:
        data = {
            "mechanism": self.mechanism.value,
            "guarantee": "pure-DP epsilon" if self.mechanism is Mechanism.GEOMETRIC else "zCDP rho",
            "levels": [
                {"level_id": e.level_id, "rho_i": format_budget(e.rho), "stability": e.stability,
                 "per_group": format_budget(e.per_group), "composed": format_budget(e.composed)}
                for e in self.per_level
            ],
            "total": format_budget(self.total),
            "total_float": float(self.total),
        }
        if delta is not None and self.mechanism is Mechanism.DISCRETE_GAUSSIAN:
            data["approx_dp"] = {
                "delta": delta,
                "analytic": acc.zcdp_to_approx_dp_analytic(float(self.total), delta).epsilon,
                "grid": acc.zcdp_to_approx_dp_grid(float(self.total), delta).epsilon,
            }
        return data


def budget_ledger(plans: Sequence[LevelPlan]) -> BudgetLedger:
    entries = []
    for p in plans:
        s = p.budget.stability
        per = _scale(p.budget.rho, Fraction(1, s))
        entries.append(LedgerEntry(p.level_id, p.budget.rho, s, per, acc.compose_parallel_generalized(per, s)))
    total = acc.compose_sequential(e.composed for e in entries)
    return BudgetLedger(plans[0].mechanism, tuple(entries), total)
