"""Command-line interface: ``mdiqcc <command> [flags]``.

Machine-readable results go to stdout (or ``--out``); diagnostics go to
stderr.  Exit codes: 0 success, 2 invalid input, 3 analysis infeasible.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .channel import expected_gains, infinite_decoy_key_rate
from .finite import InfeasibleLedger, finite_key_rate
from .model import (
    FIELD_SOURCE,
    AnalysisConfig,
    ConfigError,
    LedgerError,
    PulseModel,
    SystemModel,
    load_config,
    load_counts,
)
from .optimize import four_intensity_rate, optimize_four_intensity, optimize_three_intensity
from .simulate import SimPlan, simulate_counts, simulate_hom_scan

log = logging.getLogger("mdiqcc")

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _float_list(spec: str) -> list[float]:
    """``a:b:step`` range (inclusive) or comma-separated values."""
    try:
        if ":" in spec:
            a, b, step = (float(x) for x in spec.split(":"))
            if step <= 0:
                raise UsageError(f"range step must be positive: {spec!r}")
            count = int(math.floor((b - a) / step + 1e-9)) + 1
            return [a + i * step for i in range(max(count, 0))]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {spec!r}") from None


def _config(args):
    if args.config:
        return load_config(args.config)
    return FIELD_SOURCE, None, PulseModel(), AnalysisConfig()


def _system(args, base: SystemModel | None, loss_db: float | None = None) -> SystemModel:
    """System from the config, or a symmetric link built from ``--loss-db``."""
    if loss_db is None and base is not None:
        return base
    if loss_db is None:
        raise UsageError("need --config with a system section or --loss-db")
    try:
        loss_db = float(loss_db)
    except ValueError:
        raise UsageError(f"--loss-db must be a number here, got {loss_db!r}") from None
    kw = {}
    if base is not None:
        kw = dict(p_d=base.p_d, e_d=base.e_d, visibility=base.visibility, f=base.f)
    for key in ("p_d", "e_d", "visibility"):
        value = getattr(args, key, None)
        if value is not None:
            kw[key] = value
    kw.setdefault("p_d", 1e-6)
    kw.setdefault("e_d", 0.025)
    return SystemModel.symmetric(loss_db, getattr(args, "detector_efficiency", 1.0), **kw)


def _epsilon(args, analysis: AnalysisConfig) -> float:
    return args.epsilon if args.epsilon is not None else analysis.epsilon


def cmd_analyze(args) -> int:
    if not args.counts:
        raise UsageError("analyze needs --counts")
    source, system, _, analysis = _config(args)
    ledger = load_counts(args.counts, args.errors)
    f = system.f if system is not None else 1.16
    grid = args.grid or analysis.h_scan_points
    report = finite_key_rate(ledger, source, f=f, epsilon=_epsilon(args, analysis),
                             h_scan_points=grid, rep_rate=args.rep_rate)
    _emit(report.to_json(), args.out)
    if report.rate_per_pulse <= 0.0:
        print(f"no secure key: {report.reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_forward_gains(args) -> int:
    source, system, pulse, analysis = _config(args)
    system = _system(args, system, args.loss_db)
    table = expected_gains(source, system, pulse, analysis.quadrature_points)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def _budgets(path):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: expected an object mapping ledger rows to pulse counts")
    out = {}
    for key, value in raw.items():
        if not isinstance(value, (int, float)) or value < 0 or float(value) != int(value):
            raise UsageError(f"{path}: budget for {key!r} must be a non-negative integer")
        out[key] = int(value)
    return out


def cmd_simulate(args) -> int:
    source, system, pulse, _ = _config(args)
    system = _system(args, system, args.loss_db)
    if args.budget_file:
        plan = SimPlan(1, seed=args.seed, mode="fixed", budgets=_budgets(args.budget_file),
                       engine=args.engine, workers=args.workers)
    else:
        if args.pulses is None:
            raise UsageError("simulate needs --pulses or --budget-file")
        plan = SimPlan(int(args.pulses), seed=args.seed, engine=args.engine,
                       workers=args.workers)
    ledger = simulate_counts(source, system, plan, pulse)
    if args.out:
        out = Path(args.out)
        errors = Path(args.errors) if args.errors else out.with_name(out.stem + "_errors.csv")
        out.write_text(ledger.counts_csv(), encoding="utf-8")
        errors.write_text(ledger.errors_csv(), encoding="utf-8")
    else:
        sys.stdout.write(ledger.counts_csv())
        sys.stdout.write(ledger.errors_csv())
    return EXIT_OK


def cmd_hom_scan(args) -> int:
    _, system, _, _ = _config(args)
    if system is None:
        system = SystemModel(1.0, 1.0, 1.0, p_d=0.0, e_d=0.0,
                             visibility=args.visibility if args.visibility is not None else 0.25)
    elif args.visibility is not None:
        system = SystemModel(*system.etas, p_d=system.p_d, e_d=system.e_d,
                             visibility=args.visibility, f=system.f)
    delays = _float_list(args.delays)
    grid = [(b, c) for b in delays for c in delays]
    points = simulate_hom_scan(args.mu, system, grid, int(args.pulses or 10**8),
                               seed=args.seed, gamma=args.gamma)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dt_b", "dt_c", "qber_x"])
    for p in points:
        w.writerow([repr(p.dt_b), repr(p.dt_c), "" if p.qber_x is None else repr(p.qber_x)])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _three_rate(system, n, eps, budget, seed):
    return optimize_three_intensity(system, n, eps, budget=budget, seed=seed).rate


def cmd_keyrate_curve(args) -> int:
    source, base, pulse, analysis = _config(args)
    if args.loss_db is None:
        raise UsageError("keyrate-curve needs --loss-db a:b:step")
    n = args.pulses or 1e13
    eps = _epsilon(args, analysis)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["loss_db", "rate_4int", "rate_3int", "rate_infinite"])
    for loss in _float_list(args.loss_db):
        system = _system(args, base, loss)
        if args.optimize:
            r4 = optimize_four_intensity(system, n, eps, budget=args.budget, seed=args.seed).rate
            r3 = _three_rate(system, n, eps, args.budget, args.seed)
        else:
            r4 = four_intensity_rate(source, system, n, eps, args.grid or analysis.h_scan_points)
            r3 = _three_rate(system, n, eps, args.budget, args.seed)
        ri = infinite_decoy_key_rate(source, system, pulse)
        w.writerow([repr(loss), repr(r4), repr(r3), repr(ri)])
        log.info("loss %.2f dB done", loss)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_optimize(args) -> int:
    _, base, _, analysis = _config(args)
    system = _system(args, base, args.loss_db)
    n = args.pulses or 1e13
    eps = _epsilon(args, analysis)
    if args.protocol == "four":
        res = optimize_four_intensity(system, n, eps, budget=args.budget, seed=args.seed)
    else:
        res = optimize_three_intensity(system, n, eps, budget=args.budget, seed=args.seed)
    _emit(json.dumps(res.to_dict(), indent=2), args.out)
    return EXIT_OK if res.rate > 0 else EXIT_INFEASIBLE


def cmd_compare(args) -> int:
    _, base, _, analysis = _config(args)
    if args.loss_db is None:
        raise UsageError("compare needs --loss-db")
    system = _system(args, base, args.loss_db)
    n = args.pulses or 1e13
    eps = _epsilon(args, analysis)
    r4 = optimize_four_intensity(system, n, eps, budget=args.budget, seed=args.seed).rate
    r3 = optimize_three_intensity(system, n, eps, budget=args.budget, seed=args.seed).rate
    ratio = r4 / r3 if r3 > 0 else (math.inf if r4 > 0 else math.nan)
    out = {"loss_db": float(args.loss_db), "pulses": n, "rate_4int": r4, "rate_3int": r3,
           "ratio": ratio if math.isfinite(ratio) else str(ratio)}
    _emit(json.dumps(out, indent=2), args.out)
    return EXIT_OK if r4 > 0 else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration (source/system/pulse/analysis)")
    common.add_argument("--counts", help="counts CSV: combo,pulses,coincidences")
    common.add_argument("--errors", help="errors CSV: combo,pair,errors")
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--pulses", type=float, help="total number of pulses")
    common.add_argument("--loss-db", help="total loss in dB (a number, or a:b:step for curves)")
    common.add_argument("--epsilon", type=float, help="failure probability per bound")
    common.add_argument("--rep-rate", type=float, default=2.5e8,
                        help="pulse repetition rate in Hz (default 2.5e8)")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--grid", type=int, help="number of points in the vacuum-term scan")
    common.add_argument("--budget-file", help="JSON mapping ledger rows to pulse budgets")
    common.add_argument("--p-d", dest="p_d", type=float, help="dark-count probability")
    common.add_argument("--ed", dest="e_d", type=float, help="misalignment error")
    common.add_argument("--visibility", type=float, help="GHZ-HOM visibility (max 0.25)")
    common.add_argument("--detector-efficiency", type=float, default=1.0,
                        help="efficiency folded into the per-user transmittance with --loss-db")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="mdiqcc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hom-scan", parents=[common], help="QBER_X over a delay grid")
    p.add_argument("--mu", type=float, default=0.03, help="intensity per user")
    p.add_argument("--delays", default="0", help="delays for Bob and Charlie (list or a:b:step)")
    p.add_argument("--gamma", type=float, default=1.0, help="line-shape parameter")
    p.set_defaults(func=cmd_hom_scan)

    p = sub.add_parser("forward-gains", parents=[common], help="expected gain table (CSV)")
    p.set_defaults(func=cmd_forward_gains)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo count ledger")
    p.add_argument("--engine", choices=("exact", "binomial"), default="exact")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="finite-key rate of a ledger (JSON)")
    p.set_defaults(func=cmd_analyze)

    for name, func, helptext in (
        ("keyrate-curve", cmd_keyrate_curve, "rates against loss (CSV)"),
        ("optimize", cmd_optimize, "parameter optimization (JSON)"),
        ("compare", cmd_compare, "four- vs three-intensity ratio (JSON)"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--budget", type=int, default=600, help="rate evaluations per search")
        if name == "optimize":
            p.add_argument("--protocol", choices=("four", "three"), default="four")
        if name == "keyrate-curve":
            p.add_argument("--optimize", action="store_true",
                           help="optimize the four-intensity source at every loss")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (ConfigError, LedgerError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleLedger as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
