"""Domain model of the tabulation engine and its file formats."""

from __future__ import annotations

import bisect
import csv
import enum
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from safetab.accounting import Budget, LevelBudget, Mechanism
from safetab.errors import IngestionError, InvalidConfigurationError

MAX_AGE = 115
DEFAULT_RACE_MULTIPLICITY = 8
DEFAULT_THRESHOLDS = (50, 500, 5000)
NATION_ID = "US"


class Sex(str, enum.Enum):
    MALE = "M"
    FEMALE = "F"


class GeoLevel(str, enum.Enum):
    NATION = "Nation"
    STATE = "State"
    COUNTY = "County"
    AIANNH = "AIANNH"


class Tier(str, enum.Enum):
    DETAILED = "Detailed"
    REGIONAL = "Regional"


class Mode(str, enum.Enum):
    ALONE = "Alone"
    ALONE_OR_IN_COMBINATION = "AloneOrInCombination"


class Characteristic(str, enum.Enum):
    RACE = "race"
    ETHNICITY = "ethnicity"


# --- records --------------------------------------------------------------------


@dataclass(frozen=True)
class PersonRecord:
    block_id: str
    race_codes: frozenset[int]
    ethnicity_code: int
    sex: Sex
    age: int

    def validate(self, race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY) -> None:
        """Raise :class:`IngestionError` if the record breaks a domain rule."""
        if not 1 <= len(self.race_codes) <= race_multiplicity:
            raise IngestionError(
                f"record has {len(self.race_codes)} race codes; allowed 1..{race_multiplicity}"
            )
        if any(not 1000 <= c <= 9999 for c in self.race_codes):
            raise IngestionError(f"race codes must be 4-digit integers, got {sorted(self.race_codes)}")
        if not 0 <= self.age <= MAX_AGE:
            raise IngestionError(f"age {self.age} outside [0, {MAX_AGE}]")


PERSON_HEADER = ("block_id", "race_codes", "ethnicity_code", "sex", "age")


def write_persons(path: str | Path, records: Iterable[PersonRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PERSON_HEADER)
        for r in records:
            w.writerow([r.block_id, ";".join(str(c) for c in sorted(r.race_codes)),
                        r.ethnicity_code, r.sex.value, r.age])


def read_persons(
    path: str | Path, race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY
) -> list[PersonRecord]:
    """Parse a persons CSV, validating every row.

    Raises:
        IngestionError: the file is missing, the header is wrong, or a row is
            malformed; the message names the file and line.
    """
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise IngestionError(f"cannot read persons file {path}: {exc.strerror}") from exc
    out = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PERSON_HEADER:
            raise IngestionError(f"{path}: expected header {','.join(PERSON_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                block, races, eth, sex, age = row
                rec = PersonRecord(
                    block_id=block,
                    race_codes=frozenset(int(c) for c in races.split(";")),
                    ethnicity_code=int(eth),
                    sex=Sex(sex),
                    age=int(age),
                )
                rec.validate(race_multiplicity)
            except (ValueError, IngestionError) as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from exc
            out.append(rec)
    return out


# --- geography ------------------------------------------------------------------


@dataclass
class GeoConfig:
    """Block to county to state hierarchy plus an AIANNH overlay.

    ``aiannh`` maps area names to block sets; areas may overlap each other and
    need not respect county or state lines.
    """

    block_county: dict[str, str]
    county_state: dict[str, str]
    aiannh: dict[str, frozenset[str]] = field(default_factory=dict)
    nation: str = NATION_ID

    def __post_init__(self):
        self.aiannh = {k: frozenset(v) for k, v in self.aiannh.items()}
        self._block_areas: dict[str, tuple[str, ...]] = {}
        for name in sorted(self.aiannh):
            for b in self.aiannh[name]:
                self._block_areas.setdefault(b, ())
                self._block_areas[b] += (name,)

    def validate(self) -> None:
        for block, county in self.block_county.items():
            if county not in self.county_state:
                raise InvalidConfigurationError(f"block {block} maps to unknown county {county}")
        for name, blocks in self.aiannh.items():
            missing = sorted(blocks - self.block_county.keys())
            if missing:
                raise InvalidConfigurationError(f"AIANNH area {name} lists unknown blocks {missing[:5]}")

    def entities(self, level: GeoLevel) -> list[str]:
        """All geographic entities at ``level``, sorted."""
        level = GeoLevel(level)
        if level is GeoLevel.NATION:
            return [self.nation]
        if level is GeoLevel.STATE:
            return sorted(set(self.county_state.values()))
        if level is GeoLevel.COUNTY:
            return sorted(self.county_state)
        return sorted(self.aiannh)

    def entities_of_block(self, block_id: str, level: GeoLevel) -> tuple[str, ...]:
        try:
            county = self.block_county[block_id]
        except KeyError:
            raise IngestionError(f"unknown block_id {block_id!r}") from None
        if level is GeoLevel.NATION:
            return (self.nation,)
        if level is GeoLevel.STATE:
            return (self.county_state[county],)
        if level is GeoLevel.COUNTY:
            return (county,)
        return self._block_areas.get(block_id, ())

    def max_entities_per_block(self, level: GeoLevel) -> int:
        if GeoLevel(level) is not GeoLevel.AIANNH:
            return 1
        return max((len(v) for v in self._block_areas.values()), default=0)

    def to_json(self) -> dict:
        return {
            "nation": self.nation,
            "counties": dict(sorted(self.county_state.items())),
            "blocks": dict(sorted(self.block_county.items())),
            "aiannh": {k: sorted(v) for k, v in sorted(self.aiannh.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> GeoConfig:
        try:
            geo = cls(
                block_county={str(k): str(v) for k, v in data["blocks"].items()},
                county_state={str(k): str(v) for k, v in data["counties"].items()},
                aiannh={str(k): frozenset(map(str, v)) for k, v in data.get("aiannh", {}).items()},
                nation=str(data.get("nation", NATION_ID)),
            )
        except (KeyError, AttributeError, TypeError) as exc:
            raise InvalidConfigurationError(f"malformed geography config: {exc!r}") from exc
        geo.validate()
        return geo


# --- characteristic iterations --------------------------------------------------


def _compress(codes: Iterable[int]) -> list[list[int]]:
    ranges: list[list[int]] = []
    for c in sorted(codes):
        if ranges and c == ranges[-1][1] + 1:
            ranges[-1][1] = c
        else:
            ranges.append([c, c])
    return ranges


@dataclass(frozen=True)
class IterationConfig:
    """A race or ethnicity group with its Alone / Alone-or-in-Combination mode."""

    iteration_code: str
    code_set: frozenset[int]
    mode: Mode
    tier: Tier
    total_only: bool = False
    characteristic: Characteristic = Characteristic.RACE

    def __post_init__(self):
        if not self.code_set:
            raise InvalidConfigurationError(f"iteration {self.iteration_code} has an empty code set")
        object.__setattr__(self, "code_set", frozenset(self.code_set))

    def matches(self, record: PersonRecord) -> bool:
        if self.characteristic is Characteristic.ETHNICITY:
            return record.ethnicity_code in self.code_set
        if self.mode is Mode.ALONE:
            return record.race_codes <= self.code_set
        return not record.race_codes.isdisjoint(self.code_set)

    def to_json(self) -> dict:
        return {
            "code": self.iteration_code,
            "codes": _compress(self.code_set),
            "mode": self.mode.value,
            "tier": self.tier.value,
            "total_only": self.total_only,
            "characteristic": self.characteristic.value,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> IterationConfig:
        try:
            codes = set()
            for item in data["codes"]:
                lo, hi = (item, item) if isinstance(item, int) else item
                codes.update(range(int(lo), int(hi) + 1))
            return cls(
                iteration_code=str(data["code"]),
                code_set=frozenset(codes),
                mode=Mode(data.get("mode", Mode.ALONE_OR_IN_COMBINATION.value)),
                tier=Tier(data["tier"]),
                total_only=bool(data.get("total_only", False)),
                characteristic=Characteristic(data.get("characteristic", "race")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfigurationError(f"malformed iteration entry {data!r}: {exc}") from exc


def iterations_to_json(iters: Sequence[IterationConfig]) -> list[dict]:
    return [it.to_json() for it in iters]


def iterations_from_json(data: Sequence[Mapping]) -> list[IterationConfig]:
    iters = [IterationConfig.from_json(d) for d in data]
    codes = [it.iteration_code for it in iters]
    if len(set(codes)) != len(codes):
        raise InvalidConfigurationError("duplicate iteration codes")
    return iters


@dataclass(frozen=True)
class PopulationGroup:
    geo_id: str
    iteration_code: str


# --- age buckets ----------------------------------------------------------------


class AgeScheme(str, enum.Enum):
    AGE1 = "Age1"
    AGE4 = "Age4"
    AGE9 = "Age9"
    AGE23 = "Age23"


_BUCKET_COUNTS = {AgeScheme.AGE1: 1, AgeScheme.AGE4: 4, AgeScheme.AGE9: 9, AgeScheme.AGE23: 23}
_DEFAULT_BOUNDS = {
    AgeScheme.AGE1: (0,),
    AgeScheme.AGE4: (0, 18, 45, 65),
    AgeScheme.AGE9: (0, 5, 18, 25, 35, 45, 55, 65, 75),
    AgeScheme.AGE23: tuple(range(0, 111, 5)),
}


@dataclass(frozen=True)
class AgeBucketing:
    """Partition of ages ``0..115`` given by bucket lower bounds."""

    scheme: AgeScheme
    boundaries: tuple[int, ...] = ()

    def __post_init__(self):
        scheme = AgeScheme(self.scheme)
        bounds = tuple(self.boundaries) or _DEFAULT_BOUNDS[scheme]
        object.__setattr__(self, "scheme", scheme)
        object.__setattr__(self, "boundaries", bounds)
        if len(bounds) != _BUCKET_COUNTS[scheme]:
            raise InvalidConfigurationError(
                f"{scheme.value} needs {_BUCKET_COUNTS[scheme]} buckets, got {len(bounds)}"
            )
        if bounds[0] != 0 or any(b <= a for a, b in zip(bounds, bounds[1:])) or bounds[-1] > MAX_AGE:
            raise InvalidConfigurationError(f"bad age boundaries {bounds}")

    @property
    def labels(self) -> list[str]:
        ends = [b - 1 for b in self.boundaries[1:]] + [None]
        return [
            f"{lo}+" if hi is None else (str(lo) if lo == hi else f"{lo}-{hi}")
            for lo, hi in zip(self.boundaries, ends)
        ]

    def bucket(self, age: int) -> int:
        return bisect.bisect_right(self.boundaries, age) - 1

    def bucket_of_ages(self) -> list[int]:
        """Bucket index of every age ``0..MAX_AGE``."""
        return [self.bucket(a) for a in range(MAX_AGE + 1)]


def default_bucketings() -> dict[AgeScheme, AgeBucketing]:
    return {s: AgeBucketing(s) for s in AgeScheme}


# --- level plans ----------------------------------------------------------------


def budget_to_json(x):
    """Fractions become ``"p/q"`` strings; floats and ints stay JSON numbers."""
    if isinstance(x, Fraction):
        return str(x)
    return x


def budget_from_json(x):
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidConfigurationError(f"bad budget {x!r}") from exc
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InvalidConfigurationError(f"bad budget {x!r}")
    return x


@dataclass(frozen=True)
class LevelPlan:
    """One population-group level: where, which iterations, how much budget."""

    level_id: int
    geo_level: GeoLevel
    tier: Tier
    budget: LevelBudget
    thresholds: tuple[int, int, int] = DEFAULT_THRESHOLDS
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "geo_level", GeoLevel(self.geo_level))
        object.__setattr__(self, "tier", Tier(self.tier))
        t = tuple(int(x) for x in self.thresholds)
        if len(t) != 3 or not t[0] <= t[1] <= t[2]:
            raise InvalidConfigurationError(f"thresholds must satisfy t1 <= t2 <= t3, got {self.thresholds}")
        object.__setattr__(self, "thresholds", t)

    @property
    def mechanism(self) -> Mechanism:
        return self.budget.mechanism

    def to_json(self) -> dict:
        return {
            "level_id": self.level_id,
            "name": self.name,
            "geo_level": self.geo_level.value,
            "tier": self.tier.value,
            "rho": budget_to_json(self.budget.rho),
            "stability": self.budget.stability,
            "gamma": budget_to_json(self.budget.gamma),
            "total_only": self.budget.total_only,
            "thresholds": list(self.thresholds),
        }

    @classmethod
    def from_json(cls, data: Mapping, mechanism: Mechanism) -> LevelPlan:
        try:
            budget = LevelBudget(
                Budget(mechanism, budget_from_json(data["rho"])),
                int(data["stability"]),
                budget_from_json(data.get("gamma", "1/10")),
                bool(data.get("total_only", False)),
            )
            return cls(
                level_id=int(data["level_id"]),
                geo_level=GeoLevel(data["geo_level"]),
                tier=Tier(data["tier"]),
                budget=budget,
                thresholds=tuple(data.get("thresholds", DEFAULT_THRESHOLDS)),
                name=str(data.get("name", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfigurationError(f"malformed level plan {data!r}: {exc}") from exc


def plans_to_json(plans: Sequence[LevelPlan]) -> dict:
    mechs = {p.mechanism for p in plans}
    if len(mechs) != 1:
        raise InvalidConfigurationError("all level plans must share one mechanism")
    return {"mechanism": mechs.pop().value, "levels": [p.to_json() for p in plans]}


def plans_from_json(data: Mapping) -> list[LevelPlan]:
    try:
        mechanism = Mechanism.parse(str(data["mechanism"]))
        plans = [LevelPlan.from_json(d, mechanism) for d in data["levels"]]
    except (KeyError, TypeError) as exc:
        raise InvalidConfigurationError(f"malformed plans config: {exc!r}") from exc
    ids = [p.level_id for p in plans]
    if len(set(ids)) != len(ids):
        raise InvalidConfigurationError("duplicate level ids")
    return plans


def load_json(path: str | Path, what: str):
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot read {what} file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigurationError(f"{path}: invalid JSON ({exc})") from exc


def dump_json(path: str | Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


# --- output ---------------------------------------------------------------------

OUTPUT_HEADER = ("level_id", "geo_id", "iteration_code", "cell", "noisy_count", "mechanism", "budget")
TOTAL_CELL = "Total"


def format_budget(x) -> str:
    return str(x) if isinstance(x, Fraction) else repr(float(x))


@dataclass(frozen=True)
class TabulationRow:
    """One released count. ``true_count`` is filled only in instrumented runs."""

    level_id: int
    geo_id: str
    iteration_code: str
    cell: str
    noisy_count: int
    mechanism: Mechanism
    budget: float | Fraction
    true_count: int | None = None

    def as_csv(self) -> list[str]:
        return [str(self.level_id), self.geo_id, self.iteration_code, self.cell,
                str(self.noisy_count), self.mechanism.value, format_budget(self.budget)]


@dataclass
class TabulationOutput:
    rows: list[TabulationRow] = field(default_factory=list)

    def __iter__(self) -> Iterator[TabulationRow]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(OUTPUT_HEADER)
        w.writerows(r.as_csv() for r in self.rows)
        return buf.getvalue()

    def by_group(self) -> dict[tuple[int, str, str], list[TabulationRow]]:
        out: dict[tuple[int, str, str], list[TabulationRow]] = {}
        for r in self.rows:
            out.setdefault((r.level_id, r.geo_id, r.iteration_code), []).append(r)
        return out


def cell_label(sex: Sex, age_label: str) -> str:
    return f"{sex.value}|{age_label}"

