"""Command-line front end: ``rates``, ``simulate``, ``compare`` and ``check``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
For ``check``, exit code 1 also means at least one check came back violated.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import ConfigError, ExperimentConfig, load_config, preset_names
from .distributions import Pareto
from .distributions import from_dict as distribution_from_dict
from .risk import (
    DegenerateGridError,
    RateReport,
    RiskCurve,
    Setting,
    csv_rows,
    fit_curve,
    gap_region,
    simulate,
    theoretical_rate,
)

log = logging.getLogger("covshift_knn")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# positional parameter order for "family:p1,p2" design specs
FAMILY_PARAMS = {
    "uniform": ("a", "b", "dim"),
    "exponential": ("lam",),
    "pareto": ("alpha",),
    "gaussian": ("mu", "sigma"),
}


class UsageError(Exception):
    pass


def fmt_exponent(v: float) -> str:
    """``2/3`` for simple fractions, otherwise six significant digits."""
    if math.isinf(v):
        return "inf"
    frac = Fraction(v).limit_denominator(1000)
    if abs(float(frac) - v) <= 1e-12 * max(1.0, abs(v)):
        return str(frac)
    return f"{v:.6g}"


def parse_design(text: str):
    """``exponential:3``, ``uniform:0,1`` or a JSON object."""
    text = text.strip()
    try:
        if text.startswith("{"):
            return distribution_from_dict(json.loads(text))
        family, _, rest = text.partition(":")
        names = FAMILY_PARAMS.get(family.lower())
        if names is None:
            raise UsageError(f"unsupported family {family!r}; choose from {sorted(FAMILY_PARAMS)}")
        values = [float(v) for v in rest.split(",")] if rest else []
        if len(values) > len(names):
            raise UsageError(f"{family} takes at most {len(names)} parameters")
        params = dict(zip(names, values))
        if "dim" in params:
            params["dim"] = int(params["dim"])
        return distribution_from_dict({"family": family.lower(), **params})
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad design {text!r}: {exc}") from None


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _size_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# --------------------------------------------------------------------------
# rates


def cmd_rates(args, out) -> int:
    beta, d, gamma, rho = args.beta, args.d, args.gamma, args.rho
    if args.source or args.target:
        if not (args.source and args.target):
            raise UsageError("--source and --target go together")
        source, target = parse_design(args.source), parse_design(args.target)
        if gamma is None:
            try:
                gamma = diagnostics.dre_threshold(source, target)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        if rho is None and isinstance(target, Pareto):
            rho = target.alpha
    gamma = math.inf if gamma is None else gamma
    rho = math.inf if rho is None else rho
    if d != int(d) or d < 1:
        raise UsageError("d must be a positive integer")
    d = int(d)
    print(f"beta={fmt_exponent(beta)} d={d} gamma={fmt_exponent(gamma)} rho={fmt_exponent(rho)}", file=out)
    print(f"{'setting':<28}{'exponent':>10}  {'value':>9}  regime", file=out)
    for setting in Setting:
        res = theoretical_rate(setting, beta, d, gamma=gamma, rho=rho)
        print(f"{setting.value:<28}{fmt_exponent(res.rate):>10}  {res.rate:>9.6f}  {res.regime.value}", file=out)
    lo, hi = gap_region(beta, d)
    print(f"gap region: ({fmt_exponent(lo)}, {fmt_exponent(hi)})", file=out)
    if args.figure:
        from .plotting import rates_figure
        path = rates_figure(beta, d, args.figure, gamma=gamma)
        print(f"figure: {path}", file=out)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate / compare


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, replicates=args.replicates, test_count=args.test_count,
                              n_grid=args.n_grid, m_grid=args.m_grid, output=args.output)


def _check_grid(cfg: ExperimentConfig) -> None:
    if len(set(cfg.n_grid)) < 3:
        raise DegenerateGridError(f"degenerate grid: need at least 3 distinct n values, got {len(set(cfg.n_grid))}")
    if cfg.replicates < 5:
        raise DegenerateGridError(f"degenerate grid: need at least 5 replicates, got {cfg.replicates}")


def _run(cfg: ExperimentConfig, estimators, threads: int) -> dict[str, RiskCurve]:
    return simulate(cfg.task, estimators, cfg.n_grid, cfg.m_grid, cfg.replicates, cfg.test_count, cfg.seed,
                    threads=threads, progress=log.info)


def _write_outputs(cfg: ExperimentConfig, curves: dict[str, RiskCurve], reports, args, out) -> None:
    records = [r for c in curves.values() for r in c.records]
    records.sort(key=lambda r: (r.n, r.m, r.replicate))  # stable: estimator order kept within a replicate
    target = cfg.output
    if target in (None, "-"):
        writer = csv.writer(out, lineterminator="\n")
        writer.writerows(csv_rows(records, timing=args.timing))
        return
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(csv_rows(records, timing=args.timing))
    print(f"wrote {path}", file=out)
    if not args.no_figure:
        from .plotting import risk_curves_figure
        fig = risk_curves_figure(curves, reports, path.with_suffix(".png"))
        print(f"figure: {fig}", file=out)


def _summary(name: str, rep: RateReport, out) -> None:
    regime = rep.regime.value if rep.regime else "n/a"
    print(f"{name}: slope {rep.fitted_slope:.4f} ± {rep.slope_stderr:.4f} vs theoretical "
          f"{rep.theoretical_rate:.4f} ({regime})", file=out)


def _fit_all(cfg: ExperimentConfig, curves) -> dict[str, RateReport]:
    return {name: fit_curve(curves[name], est, cfg.task) for name, est in cfg.estimators.items()}


def cmd_simulate(args, out) -> int:
    cfg = _load(args)
    if args.estimator:
        if args.estimator not in cfg.estimators:
            raise UsageError(f"no estimator named {args.estimator!r}; have {list(cfg.estimators)}")
        name = args.estimator
    else:
        name = next(iter(cfg.estimators))
    cfg = cfg.with_overrides(estimators={name: cfg.estimators[name]})
    _check_grid(cfg)
    curves = _run(cfg, cfg.estimators, args.threads)
    reports = _fit_all(cfg, curves)
    summary_out = sys.stderr if cfg.output in (None, "-") else out
    _write_outputs(cfg, curves, reports, args, out)
    _summary(name, reports[name], summary_out)
    return EXIT_OK


def cmd_compare(args, out) -> int:
    cfg = _load(args).paired()
    _check_grid(cfg)
    curves = _run(cfg, cfg.estimators, args.threads)
    reports = _fit_all(cfg, curves)
    summary_out = sys.stderr if cfg.output in (None, "-") else out
    _write_outputs(cfg, curves, reports, args, out)
    names = list(cfg.estimators)
    kinds = {cfg.estimators[n].kind: n for n in names}
    paired = "standard" in kinds and "local" in kinds
    header = f"{'n':>8} {'m':>6} " + " ".join(f"{n:>22}" for n in names)
    print(header + ("  local wins" if paired else ""), file=summary_out)
    first = curves[names[0]]
    for n, m in first.grid:
        row = f"{n:>8} {m:>6} " + " ".join(f"{np.median(curves[k].risks(n, m)):>22.6g}" for k in names)
        if paired:
            wins = np.mean(curves[kinds["local"]].risks(n, m) < curves[kinds["standard"]].risks(n, m))
            row += f"  {wins:>10.2f}"
        print(row, file=summary_out)
    for name in names:
        _summary(name, reports[name], summary_out)
    return EXIT_OK


# --------------------------------------------------------------------------
# check


def _print_report(label: str, rep: diagnostics.DiagnosticReport, out) -> None:
    print(f"{label}: {rep.summary()}", file=out)


def cmd_check(args, out) -> int:
    source, target = parse_design(args.source), parse_design(args.target)
    if source.dim != 1 or target.dim != 1:
        raise UsageError("checks support one-dimensional designs only")
    try:
        threshold = diagnostics.dre_threshold(source, target)
    except ValueError as exc:
        if args.gamma is None:
            raise UsageError(f"unsupported family pair: {exc}; pass --gamma to run the numeric check") from None
        threshold = None
    print(f"source: {source!r}", file=out)
    print(f"target: {target!r}", file=out)
    print(f"dre threshold: {'n/a' if threshold is None else fmt_exponent(threshold)}", file=out)
    if args.gamma is not None:
        gamma = args.gamma
    else:
        gamma = 1.0 if math.isinf(threshold) else 0.9 * threshold
    reports = [("density ratio exponent", diagnostics.check_dre_numeric(source, target, gamma, args.budget))]
    if args.rho is not None:
        reports.append(("pseudo-moment", diagnostics.check_pseudo_moment(target, args.rho, args.budget)))
    for role, spec in (("source", source), ("target", target)):
        try:
            constants = diagnostics.reference_constants(spec)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        xs, rs = diagnostics.default_mass_grid(spec, constants)
        rep = diagnostics.check_mass_properties(spec, constants, xs, rs)
        c = constants
        reports.append((f"mass properties ({role}; a-={c.a_minus:.6g}, r-={c.r_minus:.6g}, "
                        f"a+={c.a_plus:.6g}, r+={c.r_plus:.6g})", rep))
    for label, rep in reports:
        _print_report(label, rep, out)
    if args.rho is None:
        print("pseudo-moment: not requested (pass --rho)", file=out)
    return EXIT_RUNTIME if any(rep.violated for _, rep in reports) else EXIT_OK


# --------------------------------------------------------------------------
# entry point


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help=f"JSON config path or preset name ({', '.join(preset_names())})")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--output", help="CSV path ('-' for standard output); the figure goes next to it")
    p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = one per CPU (default)")
    p.add_argument("--replicates", type=int, help="override replicates per grid point")
    p.add_argument("--test-count", type=int, help="override Monte Carlo test points")
    p.add_argument("--n-grid", type=_size_list, help="override source sizes, e.g. 512,1024,2048")
    p.add_argument("--m-grid", type=_size_list, help="override target sizes (one value or one per n)")
    p.add_argument("--timing", action="store_true", help="fill the wall_time_ms column (output no longer reproducible)")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG figure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covshift-knn", description="Local k-NN regression under covariate shift.")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress per-grid-point progress lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", help="theoretical risk exponents and the local-vs-standard gap region")
    p.add_argument("--beta", type=_positive, default=1.0)
    p.add_argument("--d", type=_positive, default=1)
    p.add_argument("--gamma", type=_positive, help="density ratio exponent (default: infinity)")
    p.add_argument("--rho", type=_positive, help="pseudo-moment exponent (default: infinity)")
    p.add_argument("--source", help="derive gamma (and rho for Pareto targets) from a design pair, e.g. pareto:1")
    p.add_argument("--target")
    p.add_argument("--figure", help="write a rate-versus-gamma figure to this path")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("simulate", help="Monte Carlo risk curve and fitted rate for one estimator")
    _add_run_options(p)
    p.add_argument("--estimator", help="estimator name when the config lists several (default: first)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="standard vs local estimators on shared datasets")
    _add_run_options(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("check", help="design assumption diagnostics")
    p.add_argument("--source", required=True, help="source design, e.g. exponential:1")
    p.add_argument("--target", required=True, help="target design, e.g. exponential:2")
    p.add_argument("--gamma", type=_positive, help="exponent for the density ratio check (default 0.9 x threshold)")
    p.add_argument("--rho", type=_positive, help="exponent for the pseudo-moment check (skipped if absent)")
    p.add_argument("--budget", type=int, default=diagnostics.DEFAULT_BUDGET, help="maximum doublings per tail")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args, out)
    except (UsageError, ConfigError, DegenerateGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
