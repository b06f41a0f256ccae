"""Command-line interface: ``crra-alm solve|sweep|curve|simulate|verify``.

Exit codes: 0 ok, 1 verification failure, 2 invalid configuration,
3 no root in range, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from .duality import OptimalStrategy, SolverOptions, build_strategy, eval_h, optimal_pi, solve_kappa
from .errors import AlmError, DomainError, InvalidParams, NoRootInRange, NumericalFailure
from .model import ModelConfig, validate
from .simulate import (Consumption, McEstimate, Policy, SimulationSpec, estimate_objective,
                       simulate_wealth, write_path_dump)
from .verify import PerturbationGrid, run_verification

log = logging.getLogger("crra_alm")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NO_ROOT, EXIT_NUMERICAL = 0, 1, 2, 3, 4

SWEEP_COLUMNS = ["rho", "eta", "kappa_hat", "pi_hat", "pi_merton", "phi1", "h_at_zero",
                 "lambda_rate", "x_one", "mode", "status"]
SOLVE_COLUMNS = SWEEP_COLUMNS + ["residual", "iterations"]
CURVE_COLUMNS = ["rho", "eta", "kappa", "h"]
SUMMARY_COLUMNS = ["statistic", "value", "std_error"]
VERIFY_COLUMNS = ["check", "value", "threshold", "status", "detail"]


class ConfigError(AlmError):
    pass


@dataclass
class RunConfig:
    model: ModelConfig
    solver: SolverOptions = field(default_factory=SolverOptions)
    sim: SimulationSpec = field(default_factory=SimulationSpec)
    sweep: list[tuple[float, float]] | None = None
    curve_points: int = 200
    curve_kappa_max: float | None = None
    grid: PerturbationGrid = field(default_factory=PerturbationGrid)
    policy: Policy | None = None
    out_dir: Path = Path("out")
    stem: str = "run"


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def _section(doc, name, cls, rename=None):
    raw = dict(doc.get(name, {}))
    for old, new in (rename or {}).items():
        if old in raw:
            raw[new] = raw.pop(old)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def load_run_config(path, *, seed=None, mode=None, allow_negative=False, out=None) -> RunConfig:
    """Parse a TOML run configuration; command-line overrides win."""
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML in {path}: {exc}") from None

    model_doc = {k: doc.get(k) for k in ("market", "liability", "claims", "preferences")}
    if mode is not None and isinstance(model_doc["claims"], dict):
        model_doc["claims"] = {**model_doc["claims"], "truncation_mode": mode}
    model = validate(model_doc)

    solver = _section(doc, "solver", SolverOptions)
    if allow_negative:
        solver = replace(solver, allow_negative_kappa=True)
    sim_raw = dict(doc.get("sim", {}))
    if "snapshot_times" in sim_raw:
        sim_raw["snapshot_times"] = tuple(sim_raw["snapshot_times"])
    if seed is not None:
        sim_raw["seed"] = seed
    sim = _section({"sim": sim_raw}, "sim", SimulationSpec)

    sweep = None
    if "sweep" in doc:
        s = doc["sweep"]
        if "pairs" in s:
            sweep = [(float(r), float(e)) for r, e in s["pairs"]]
        else:
            sweep = [(float(r), float(e)) for r, e in itertools.product(s.get("rho", []), s.get("eta", []))]

    curve = doc.get("curve", {})
    grid_raw = {k: tuple(v) for k, v in doc.get("verify", {}).items()}
    grid = _section({"verify": grid_raw}, "verify", PerturbationGrid)
    policy = _section(doc, "policy", Policy) if "policy" in doc else None
    output = doc.get("output", {})
    return RunConfig(
        model=model, solver=solver, sim=sim, sweep=sweep,
        curve_points=int(curve.get("points", 200)), curve_kappa_max=curve.get("kappa_max"),
        grid=grid, policy=policy,
        out_dir=Path(out if out is not None else output.get("dir", "out")),
        stem=str(output.get("stem", Path(path).stem)),
    )


def _write_csv(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
    return path


def _pairs(rc: RunConfig):
    if rc.sweep is None:
        return [(rc.model.liability.rho, rc.model.preferences.eta)]
    return rc.sweep


def _strategy_row(cfg: ModelConfig, report=None, status="ok") -> dict:
    row = {"rho": cfg.liability.rho, "eta": cfg.preferences.eta,
           "pi_merton": optimal_pi(cfg, 0.0).pi_merton, "mode": cfg.claims.mode.value,
           "status": status}
    if report is not None:
        s = report.strategy
        row.update(kappa_hat=s.kappa, pi_hat=s.pi, phi1=s.controls.phi1, h_at_zero=s.h_at_zero,
                   lambda_rate=s.dual_rate, x_one=s.x_one, residual=report.residual,
                   iterations=report.iterations)
    return row


# -- subcommands ----------------------------------------------------------------


def cmd_solve(rc: RunConfig) -> int:
    report = solve_kappa(rc.model, rc.solver)
    s = report.strategy
    print(f"kappa_hat = {s.kappa:.9g}")
    print(f"pi_hat    = {s.pi:.9g}  (Merton {s.pi_merton:.9g} + hedge {s.pi - s.pi_merton:.9g})")
    print(f"h(0) = {s.h_at_zero:.9g}  residual = {report.residual:.3g}  iterations = {report.iterations}")
    print(f"phi1 = {s.controls.phi1:.9g}  Lambda = {s.dual_rate:.9g}  X(1) = {s.x_one:.9g}")
    path = _write_csv(rc.out_dir / f"{rc.stem}_solve.csv", SOLVE_COLUMNS, [_strategy_row(rc.model, report)])
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_sweep(rc: RunConfig) -> int:
    rows = []
    for rho, eta in _pairs(rc):
        cfg = rc.model.with_(rho=rho, eta=eta)
        try:
            rows.append(_strategy_row(cfg, solve_kappa(cfg, rc.solver)))
        except NoRootInRange as exc:
            row = _strategy_row(cfg, status="no_root")
            row["h_at_zero"] = exc.h_at_zero
            rows.append(row)
        except NumericalFailure as exc:
            log.warning("rho=%g eta=%g: %s", rho, eta, exc)
            rows.append(_strategy_row(cfg, status="numerical_failure"))
    path = _write_csv(rc.out_dir / f"{rc.stem}_sweep.csv", SWEEP_COLUMNS, rows)
    print(f"{len(rows)} row(s) written to {path}")
    return EXIT_OK


def cmd_curve(rc: RunConfig) -> int:
    c = rc.model.claims.limit
    kmax = rc.curve_kappa_max if rc.curve_kappa_max is not None else 1.0 / c - 1e-6
    if kmax * c >= 1.0:
        raise DomainError(f"curve grid reaches kappa = {kmax!r} >= 1/c = {1.0 / c!r}")
    kappas = np.linspace(0.0, kmax, rc.curve_points)
    rows = []
    for rho, eta in _pairs(rc):
        cfg = rc.model.with_(rho=rho, eta=eta)
        rows.extend({"rho": rho, "eta": eta, "kappa": k, "h": eval_h(cfg, float(k))} for k in kappas)
    path = _write_csv(rc.out_dir / f"{rc.stem}_curve.csv", CURVE_COLUMNS, rows)
    print(f"{len(rows)} point(s) written to {path}")
    return EXIT_OK


def _resolve_policy(rc: RunConfig):
    """The configured policy if any, else the solved optimum."""
    cfg = rc.model
    if rc.policy is not None:
        needs = rc.policy.consumption in (Consumption.DUAL_OPTIMAL, Consumption.FEEDBACK)
        strategy = solve_kappa(cfg, rc.solver).strategy if needs else None
        return rc.policy, strategy
    strategy = solve_kappa(cfg, rc.solver).strategy
    rule = Consumption.LOG_OPTIMAL if cfg.preferences.eta == 1.0 else Consumption.DUAL_OPTIMAL
    return Policy.optimal(strategy, rule), strategy


def cmd_simulate(rc: RunConfig) -> int:
    cfg = rc.model
    policy, strategy = _resolve_policy(rc)
    ens = simulate_wealth(cfg, policy, rc.sim, strategy)
    x = cfg.preferences.initial_wealth
    vt = ens.terminal_wealth
    rows = [
        {"statistic": "pi", "value": policy.pi},
        {"statistic": "kappa", "value": policy.kappa},
        {"statistic": "consumption_rule", "value": policy.consumption.value},
        {"statistic": "n_paths", "value": ens.n_paths},
    ]

    def est(name, e: McEstimate):
        rows.append({"statistic": name, "value": e.mean, "std_error": e.std_error})

    est("terminal_wealth_mean", McEstimate.from_samples(vt, ens.antithetic))
    for q in (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99):
        rows.append({"statistic": f"terminal_wealth_q{int(round(q * 100)):02d}", "value": float(np.quantile(vt, q))})
    est("jump_count_mean", McEstimate.from_samples(ens.jump_counts.astype(float), ens.antithetic))
    est("deflator_terminal_mean", McEstimate.from_samples(ens.deflator_terminal, ens.antithetic))
    est("budget_residual", McEstimate.from_samples(ens.budget_accumulator - x, ens.antithetic))
    est("objective_J", estimate_objective(cfg, ens))
    path = _write_csv(rc.out_dir / f"{rc.stem}_simulate.csv", SUMMARY_COLUMNS, rows)
    if ens.recorded is not None:
        write_path_dump(ens, rc.out_dir / f"{rc.stem}_paths.csv")
    for row in rows:
        se = row.get("std_error")
        print(f"{row['statistic']:>24} = {fmt(row['value'])}" + (f" +/- {fmt(se)}" if se is not None else ""))
    log.info("wrote %s", path)
    return EXIT_OK


def _strategy_from_file(cfg: ModelConfig, path) -> OptimalStrategy:
    """Candidate strategy from a solve CSV (columns ``kappa_hat`` and ``pi_hat``)."""
    try:
        with open(path, newline="") as fh:
            row = next(csv.DictReader(fh))
        kappa, pi = float(row["kappa_hat"]), float(row["pi_hat"])
    except (OSError, StopIteration, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read strategy file {path}: {exc}") from None
    return build_strategy(cfg, kappa, pi=pi)


def cmd_verify(rc: RunConfig, strategy_file=None) -> int:
    cfg = rc.model
    if strategy_file is not None:
        strategy = _strategy_from_file(cfg, strategy_file)
    else:
        strategy = solve_kappa(cfg, rc.solver).strategy
    report = run_verification(cfg, strategy, rc.sim, rc.grid)
    path = _write_csv(rc.out_dir / f"{rc.stem}_verify.csv", VERIFY_COLUMNS, report.rows())
    print(report.summary())
    log.info("wrote %s", path)
    return EXIT_OK if report.passed else EXIT_VERIFY


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "curve": cmd_curve,
            "simulate": cmd_simulate, "verify": cmd_verify}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crra-alm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (overrides [output].dir)")
        p.add_argument("--seed", type=int, help="simulation seed (overrides [sim].seed)")
        p.add_argument("--mode", choices=["atom", "restriction", "renormalized"],
                       help="claim truncation mode (overrides [claims].truncation_mode)")
        p.add_argument("--allow-negative-kappa", action="store_true",
                       help="search kappa < 0 when h(0) <= 0 (no optimality claim there)")
        if name == "sweep":
            p.add_argument("--rho", type=_floats, help="comma-separated rho values (product with --eta)")
            p.add_argument("--eta", type=_floats, help="comma-separated eta values")
        if name == "curve":
            p.add_argument("--points", type=int, help="number of kappa grid points")
            p.add_argument("--kappa-max", type=float, help="right end of the kappa grid")
        if name == "verify":
            p.add_argument("--strategy", help="solve CSV with a candidate (kappa_hat, pi_hat)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        rc = load_run_config(args.config, seed=args.seed, mode=args.mode,
                             allow_negative=args.allow_negative_kappa, out=args.out)
        if args.command == "sweep" and (args.rho is not None or args.eta is not None):
            rc.sweep = list(itertools.product(args.rho or [], args.eta or []))
        if args.command == "curve":
            if args.points is not None:
                rc.curve_points = args.points
            if args.kappa_max is not None:
                rc.curve_kappa_max = args.kappa_max
        if args.command == "verify":
            return cmd_verify(rc, args.strategy)
        return COMMANDS[args.command](rc)
    except (InvalidParams, ConfigError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoRootInRange as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"h(0) = {exc.h_at_zero:.9g}", file=sys.stderr)
        return EXIT_NO_ROOT
    except (NumericalFailure, DomainError) as exc:
        print(f"error: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
