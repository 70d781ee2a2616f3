"""Tabulation engine: domain model, file formats and the SafeTab algorithm."""

from safetab.tabulation.engine import (
    BudgetLedger,
    LedgerEntry,
    budget_ledger,
    level_counts,
    map_to_groups,
    max_iterations_per_record,
    noisy_count,
    safetab_run,
    stability,
    tabulate_population_group,
    validate_run,
)
from safetab.tabulation.model import (
    DEFAULT_RACE_MULTIPLICITY,
    DEFAULT_THRESHOLDS,
    MAX_AGE,
    OUTPUT_HEADER,
    TOTAL_CELL,
    AgeBucketing,
    AgeScheme,
    Characteristic,
    GeoConfig,
    GeoLevel,
    IterationConfig,
    LevelPlan,
    Mode,
    PersonRecord,
    PopulationGroup,
    Sex,
    TabulationOutput,
    TabulationRow,
    Tier,
    default_bucketings,
    iterations_from_json,
    iterations_to_json,
    plans_from_json,
    plans_to_json,
    read_persons,
    write_persons,
)

__all__ = [name for name in dir() if not name.startswith("_")]
