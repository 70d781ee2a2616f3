"""Deterministic synthetic microdata shaped like the SafeTab inputs.

The generator produces a persons table, a geography and a catalogue of
characteristic iterations whose group sizes span every Step-2 branch under
the default thresholds. Detailed race groups get Zipf-like popularity, so a
few groups are large and many are small.

Code layout:

* Detailed race group ``j`` owns codes ``1000 + 100 j`` .. ``1099 + 100 j``.
* Regional group ``r`` is the union of a contiguous run of detailed groups.
* Ethnicity code 1 is the majority category; codes 2.. are the minority
  categories, each its own detailed iteration and jointly one regional one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from safetab.errors import InvalidParameterError
from safetab.tabulation.model import (
    MAX_AGE,
    Characteristic,
    GeoConfig,
    IterationConfig,
    Mode,
    PersonRecord,
    Sex,
    Tier,
    dump_json,
    iterations_to_json,
    write_persons,
)

CODE_BASE = 1000
CODES_PER_GROUP = 100


@dataclass(frozen=True)
class GenSpec:
    """Shape of the synthetic population.

    Attributes:
        n_persons: Number of person records.
        n_states: States under the nation.
        counties_per_state: Counties in each state.
        blocks_per_county: Blocks in each county.
        n_aiannh: Number of (disjoint) AIANNH areas.
        aiannh_fraction: Share of blocks placed inside some AIANNH area.
        n_detailed: Detailed race groups (at most 90).
        n_regional: Regional race groups.
        n_ethnicity: Ethnicity codes, including the majority code 1.
        zipf_exponent: Popularity exponent over detailed race groups.
        extra_race_rate: Chance of each additional race code beyond the first.
        race_multiplicity: Maximum race codes per person.
        seed: Seed of the generator.
    """

    n_persons: int = 20_000
    n_states: int = 3
    counties_per_state: int = 4
    blocks_per_county: int = 6
    n_aiannh: int = 3
    aiannh_fraction: float = 0.2
    n_detailed: int = 30
    n_regional: int = 5
    n_ethnicity: int = 6
    zipf_exponent: float = 1.2
    extra_race_rate: float = 0.12
    race_multiplicity: int = 8
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_persons", "n_states", "counties_per_state", "blocks_per_county",
                     "n_detailed", "n_regional", "n_ethnicity", "race_multiplicity"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.n_aiannh < 0:
            raise InvalidParameterError("n_aiannh must be non-negative")
        if self.n_detailed > 90:
            raise InvalidParameterError("n_detailed must be at most 90 (4-digit codes)")
        if self.n_regional > self.n_detailed:
            raise InvalidParameterError("n_regional cannot exceed n_detailed")
        if not 0 <= self.aiannh_fraction <= 1 or not 0 <= self.extra_race_rate < 1:
            raise InvalidParameterError("fractions must lie in [0, 1]")
        if self.zipf_exponent <= 0:
            raise InvalidParameterError("zipf_exponent must be positive")
        if self.seed < 0:
            raise InvalidParameterError("seed must be non-negative")


@dataclass
class GeneratedData:
    persons: list[PersonRecord]
    geo: GeoConfig
    iterations: list[IterationConfig]
    spec: GenSpec = field(default_factory=GenSpec)

    def write(self, outdir: str | Path) -> dict[str, Path]:
        """Write ``persons.csv``, ``geo.json`` and ``iterations.json``."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "persons": outdir / "persons.csv",
            "geo": outdir / "geo.json",
            "iterations": outdir / "iterations.json",
        }
        write_persons(paths["persons"], self.persons)
        dump_json(paths["geo"], self.geo.to_json())
        dump_json(paths["iterations"], iterations_to_json(self.iterations))
        return paths


def _zipf(n: int, exponent: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    return w / w.sum()


def _geography(spec: GenSpec, rng: np.random.Generator) -> GeoConfig:
    county_state, block_county = {}, {}
    for s in range(1, spec.n_states + 1):
        state = f"S{s:02d}"
        for c in range(1, spec.counties_per_state + 1):
            county = f"{state}C{c:02d}"
            county_state[county] = state
            for b in range(1, spec.blocks_per_county + 1):
                block_county[f"{county}B{b:03d}"] = county
    blocks = sorted(block_county)
    aiannh: dict[str, frozenset[str]] = {}
    if spec.n_aiannh:
        n_in = int(round(spec.aiannh_fraction * len(blocks)))
        chosen = rng.permutation(len(blocks))[:n_in]
        parts = np.array_split(np.sort(chosen), spec.n_aiannh)
        for a, part in enumerate(parts, start=1):
            if len(part):
                aiannh[f"A{a:02d}"] = frozenset(blocks[i] for i in part)
    return GeoConfig(block_county, county_state, aiannh)


def _region_of(spec: GenSpec) -> list[int]:
    return [j * spec.n_regional // spec.n_detailed for j in range(spec.n_detailed)]


def _detailed_codes(j: int) -> frozenset[int]:
    lo = CODE_BASE + CODES_PER_GROUP * j
    return frozenset(range(lo, lo + CODES_PER_GROUP))


def _iterations(spec: GenSpec) -> list[IterationConfig]:
    iters = []
    for j in range(spec.n_detailed):
        codes = _detailed_codes(j)
        iters.append(IterationConfig(f"D{j:02d}", codes, Mode.ALONE_OR_IN_COMBINATION, Tier.DETAILED))
        if j % 3 == 0:
            # every third group also has an Alone iteration; half of those are TotalOnly
            iters.append(IterationConfig(f"D{j:02d}A", codes, Mode.ALONE, Tier.DETAILED, total_only=j % 2 == 1))
    region = _region_of(spec)
    for r in range(spec.n_regional):
        codes = frozenset().union(*(_detailed_codes(j) for j in range(spec.n_detailed) if region[j] == r))
        iters.append(IterationConfig(f"R{r}", codes, Mode.ALONE_OR_IN_COMBINATION, Tier.REGIONAL))
        iters.append(IterationConfig(f"R{r}A", codes, Mode.ALONE, Tier.REGIONAL))
    eth = Characteristic.ETHNICITY
    for e in range(2, spec.n_ethnicity + 1):
        iters.append(IterationConfig(f"E{e}", frozenset({e}), Mode.ALONE, Tier.DETAILED, characteristic=eth))
    if spec.n_ethnicity > 1:
        iters.append(IterationConfig("EH", frozenset(range(2, spec.n_ethnicity + 1)), Mode.ALONE,
                                     Tier.REGIONAL, characteristic=eth))
    return iters


def generate(spec: GenSpec | None = None) -> GeneratedData:
    """Generate persons, geography and iterations; deterministic in ``spec.seed``."""
    spec = spec or GenSpec()
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    geo = _geography(spec, rng)
    iters = _iterations(spec)

    blocks = sorted(geo.block_county)
    # uneven state sizes so that county groups of very different sizes occur
    state_w = _zipf(spec.n_states, 1.0)
    block_w = np.array([state_w[int(b[1:3]) - 1] for b in blocks])
    block_w /= block_w.sum()
    n = spec.n_persons
    block_idx = rng.choice(len(blocks), size=n, p=block_w)

    group_p = _zipf(spec.n_detailed, spec.zipf_exponent)
    extra = np.minimum(rng.geometric(1 - spec.extra_race_rate, size=n) - 1, spec.race_multiplicity - 1)
    eth_p = np.concatenate([[0.8], np.full(spec.n_ethnicity - 1, 0.2 / max(1, spec.n_ethnicity - 1))])
    eth_p /= eth_p.sum()
    eth = rng.choice(spec.n_ethnicity, size=n, p=eth_p) + 1
    sex = rng.integers(0, 2, size=n)
    age = np.where(rng.random(n) < 0.02, rng.integers(100, MAX_AGE + 1, size=n), rng.integers(0, 100, size=n))

    persons = []
    for i in range(n):
        k = int(extra[i]) + 1
        groups = rng.choice(spec.n_detailed, size=k, p=group_p)
        offsets = rng.integers(0, CODES_PER_GROUP, size=k)
        codes = frozenset(int(CODE_BASE + CODES_PER_GROUP * g + o) for g, o in zip(groups, offsets))
        persons.append(
            PersonRecord(
                block_id=blocks[block_idx[i]],
                race_codes=codes,
                ethnicity_code=int(eth[i]),
                sex=Sex.MALE if sex[i] == 0 else Sex.FEMALE,
                age=int(age[i]),
            )
        )
    return GeneratedData(persons, geo, iters, spec)
