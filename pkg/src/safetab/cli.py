"""Command-line interface: ``safetab {generate,tabulate,report,calibrate,account}``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from safetab import __version__
from safetab import accounting as acc
from safetab import calibration as cal
from safetab.accounting import AlphaGrid, Mechanism
from safetab.datagen import GenSpec, generate
from safetab.errors import IngestionError, InvalidConfigurationError, InvalidParameterError
from safetab.tabulation import (
    DEFAULT_RACE_MULTIPLICITY,
    DEFAULT_THRESHOLDS,
    GeoConfig,
    budget_ledger,
    iterations_from_json,
    plans_from_json,
    plans_to_json,
    read_persons,
    safetab_run,
)
from safetab.tabulation.model import dump_json, load_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


@dataclass(frozen=True)
class RunConfig:
    persons: Path
    geo: Path
    iterations: Path
    plans: Path
    out: Path
    seed: int
    delta: float = cal.DEFAULT_DELTA
    mechanism: Mechanism | None = None
    race_multiplicity: int = DEFAULT_RACE_MULTIPLICITY

    @property
    def ledger_path(self) -> Path:
        return self.out.with_name(self.out.name + ".ledger.json")


# --- argument types -------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return value


def _unit_interval(text: str):
    """Rational ("1/10") or decimal ("0.1") value in (0, 1), kept exact."""
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text}")
    return value


def _delta(text: str) -> float:
    return float(_unit_interval(text))


def _mechanism(text: str) -> Mechanism:
    try:
        return Mechanism.parse(text)
    except InvalidConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _thresholds(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    try:
        t = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}") from None
    if len(t) != 3 or not t[0] <= t[1] <= t[2]:
        raise argparse.ArgumentTypeError("thresholds must be three integers t1 <= t2 <= t3")
    return t


def _grid(args) -> AlphaGrid:
    return AlphaGrid.linear(args.alpha_min, args.alpha_max, args.alpha_step)


# --- helpers --------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require_file(path: Path, what: str, error=InvalidConfigurationError) -> None:
    if not path.is_file():
        raise error(f"{what} file not found: {path}")


# --- commands -------------------------------------------------------------------


def cmd_generate(args) -> int:
    spec = GenSpec(
        n_persons=args.n_persons,
        n_states=args.states,
        counties_per_state=args.counties_per_state,
        blocks_per_county=args.blocks_per_county,
        n_aiannh=args.aiannh,
        n_detailed=args.detailed_groups,
        race_multiplicity=args.race_multiplicity,
        seed=args.seed,
    )
    paths = generate(spec).write(args.out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return EXIT_OK


def cmd_tabulate(cfg: RunConfig) -> int:
    """Run SafeTab; write the noisy counts and a budget-ledger sidecar.

    Nothing is written unless the whole run succeeds.
    """
    _require_file(cfg.persons, "persons", IngestionError)
    for path, what in ((cfg.geo, "geography"), (cfg.iterations, "iterations"), (cfg.plans, "plans")):
        _require_file(path, what)
    geo = GeoConfig.from_json(load_json(cfg.geo, "geography"))
    iters = iterations_from_json(load_json(cfg.iterations, "iterations"))
    plans = plans_from_json(load_json(cfg.plans, "plans"))
    records = read_persons(cfg.persons, cfg.race_multiplicity)
    output = safetab_run(records, plans, geo, iters, cfg.seed, mechanism=cfg.mechanism,
                         race_multiplicity=cfg.race_multiplicity)
    ledger = budget_ledger(plans).to_json(cfg.delta)
    ledger.update(seed=cfg.seed, rows=len(output), persons=len(records))
    _atomic_write(cfg.out, output.to_csv())
    _atomic_write(cfg.ledger_path, json.dumps(ledger, indent=2) + "\n")
    print(f"wrote {len(output)} rows to {cfg.out}; total {ledger['guarantee']} {ledger['total_float']:.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    overrides = cal.nation_state_override(args.moe_nation_state)
    sweep = () if args.no_sweep else cal.SWEEP_MOES
    text = cal.full_report(overrides, args.delta, _grid(args), args.gamma, args.stability, sweep, args.format)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    overrides = cal.nation_state_override(args.moe_nation_state)
    plans = cal.build_level_plans(overrides, args.mechanism, args.gamma, args.stability, args.thresholds)
    print(cal.format_calibration_table(cal.calibration_table(overrides, args.gamma, args.stability), args.format))
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_json(path, plans_to_json(plans))
        print(f"plans: {path}")
    return EXIT_OK


def cmd_account(args) -> int:
    _require_file(Path(args.plans), "plans")
    plans = plans_from_json(load_json(args.plans, "plans"))
    levels = [p.budget for p in plans]
    ledger = budget_ledger(plans)
    grid = _grid(args)
    if ledger.mechanism is Mechanism.GEOMETRIC:
        rdp = acc.safetab_rdp_to_approx_dp(levels, args.delta, grid)
        print(f"pure DP epsilon: {float(ledger.total):.6f}")
        print(f"RDP -> ({rdp.epsilon:.6f}, {args.delta:g})-DP at alpha {rdp.alpha:.2f}")
    else:
        rho = float(ledger.total)
        print(f"zCDP rho: {rho:.6f}")
        print(f"analytic -> ({acc.zcdp_to_approx_dp_analytic(rho, args.delta).epsilon:.6f}, {args.delta:g})-DP")
        g = acc.zcdp_to_approx_dp_grid(rho, args.delta, grid)
        print(f"grid -> ({g.epsilon:.6f}, {args.delta:g})-DP at alpha {g.alpha:.2f}")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------


def _add_alpha_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha-min", type=float, default=1.01, help="smallest Renyi order (default 1.01)")
    p.add_argument("--alpha-max", type=float, default=10.0, help="largest Renyi order (default 10)")
    p.add_argument("--alpha-step", type=float, default=0.01, help="grid spacing (default 0.01)")


def _add_budget_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--moe-nation-state", type=_positive_int, default=None,
                   help="MOE target for the Nation and State detailed levels (default 6)")
    p.add_argument("--gamma", type=_unit_interval, default=cal.DEFAULT_GAMMA,
                   help="Step-1 budget share (default 1/10)")
    p.add_argument("--stability", type=_positive_int, default=cal.DEFAULT_STABILITY,
                   help="stability of every level (default 9)")
    p.add_argument("--format", choices=("text", "csv"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safetab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic persons, geography and iterations")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=_seed, default=0)
    g.add_argument("--n-persons", type=_positive_int, default=GenSpec.n_persons)
    g.add_argument("--states", type=_positive_int, default=GenSpec.n_states)
    g.add_argument("--counties-per-state", type=_positive_int, default=GenSpec.counties_per_state)
    g.add_argument("--blocks-per-county", type=_positive_int, default=GenSpec.blocks_per_county)
    g.add_argument("--aiannh", type=int, default=GenSpec.n_aiannh, help="number of AIANNH areas")
    g.add_argument("--detailed-groups", type=_positive_int, default=GenSpec.n_detailed)
    g.add_argument("--race-multiplicity", type=_positive_int, default=GenSpec.race_multiplicity)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("tabulate", help="run SafeTab on a persons file")
    t.add_argument("--persons", required=True)
    t.add_argument("--geo", required=True)
    t.add_argument("--iterations", required=True)
    t.add_argument("--plans", required=True, help="level plans JSON (see `calibrate --out`)")
    t.add_argument("--out", required=True, help="output CSV; the ledger goes to OUT.ledger.json")
    t.add_argument("--seed", type=_seed, required=True)
    t.add_argument("--mechanism", type=_mechanism, default=None,
                   help="fail unless the plans use this mechanism")
    t.add_argument("--delta", type=_delta, default=cal.DEFAULT_DELTA,
                   help="delta for the approximate-DP figures in the ledger")
    t.add_argument("--race-multiplicity", type=_positive_int, default=DEFAULT_RACE_MULTIPLICITY)
    t.set_defaults(func=lambda a: cmd_tabulate(RunConfig(
        persons=Path(a.persons), geo=Path(a.geo), iterations=Path(a.iterations), plans=Path(a.plans),
        out=Path(a.out), seed=a.seed, delta=a.delta, mechanism=a.mechanism,
        race_multiplicity=a.race_multiplicity)))

    r = sub.add_parser("report", help="budget table, four-analysis privacy loss and MOE sweep")
    _add_budget_flags(r)
    r.add_argument("--delta", type=_delta, default=cal.DEFAULT_DELTA)
    r.add_argument("--no-sweep", action="store_true", help="omit the Nation/State MOE sweep")
    _add_alpha_flags(r)
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("calibrate", help="turn MOE targets into level plans")
    _add_budget_flags(c)
    c.add_argument("--mechanism", type=_mechanism, default=Mechanism.GEOMETRIC)
    c.add_argument("--thresholds", type=_thresholds, default=DEFAULT_THRESHOLDS,
                   help="Step-2 thresholds t1,t2,t3 (default 50,500,5000)")
    c.add_argument("--out", default=None, help="write level plans JSON here")
    c.set_defaults(func=cmd_calibrate)

    a = sub.add_parser("account", help="privacy loss of a level plans file")
    a.add_argument("--plans", required=True)
    a.add_argument("--delta", type=_delta, default=cal.DEFAULT_DELTA)
    _add_alpha_flags(a)
    a.set_defaults(func=cmd_account)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IngestionError as exc:
        print(f"safetab: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidConfigurationError, InvalidParameterError) as exc:
        print(f"safetab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
