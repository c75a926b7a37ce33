"""Command-line harness.

Subcommands: run, sweep, probe, bound, check, report. Exit codes: 0 on
success, 2 for config or validation errors, 3 for numeric failures, 4 for
I/O failures. The FLATOPT_THREADS environment variable overrides --jobs.
"""

from __future__ import annotations

import argparse
import os
import sys

from .analysis import BoundInputs, pac_bayes_bound, pac_bayes_terms
from .config import ConfigError, build_config, load_config
from .experiment import (
    NumericError,
    gradient_check_report,
    probe_run,
    run_sweep,
    run_to_dir,
    write_probe_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

METRICS_HELP = (
    "metrics.jsonl fields: step, epoch, train_loss, eval_loss, eval_acc, lr, "
    "grad_evals, g_norm, g_v_norm, cos_theta, wall_ms. probe.csv columns: t, "
    "d_gs, d_gh, d_gv, d_gs_norm, d_gh_norm, d_gv_norm, with a final footer "
    "row of column means. aggregate.csv: one row per sweep cell with the "
    "swept parameters and the run summary."
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument(
        "--eval-every", type=int, default=None, help="metric emission interval in steps"
    )


def _overrides(args) -> dict[str, str]:
    out = {}
    if args.seed is not None:
        out["seed"] = str(args.seed)
    if getattr(args, "eval_every", None) is not None:
        out["eval_every"] = str(args.eval_every)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flatopt",
        description="Sharpness-aware optimization benchmark harness.",
        epilog=METRICS_HELP,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one training run", epilog=METRICS_HELP)
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a Cartesian parameter grid")
    _add_common(p_sweep)
    p_sweep.add_argument(
        "--grid",
        action="append",
        default=[],
        metavar="FIELD=V1,V2,...",
        help="repeatable; e.g. --grid optimizer.k=1,5,10",
    )
    p_sweep.add_argument("--jobs", type=int, default=1, help="concurrent grid cells")

    p_probe = sub.add_parser("probe", help="gradient-stability probe of a full-SAM run")
    _add_common(p_probe)
    p_probe.add_argument("--k", type=int, default=5, help="difference lag in steps")

    p_bound = sub.add_parser("bound", help="evaluate the generalization bound")
    p_bound.add_argument("--n", type=int, required=True)
    p_bound.add_argument("--delta", type=float, required=True)
    p_bound.add_argument("--dim", type=int, required=True)
    p_bound.add_argument("--w-norm-sq", type=float, required=True)
    p_bound.add_argument("--rho", type=float, required=True)
    p_bound.add_argument("--rho0", type=float, default=0.0)

    p_check = sub.add_parser("check", help="finite-difference gradient check")
    _add_common(p_check)

    p_report = sub.add_parser("report", help="render figures for a run directory")
    p_report.add_argument("directory", help="directory holding metrics/probe/sweep files")

    return parser


def _cmd_run(args) -> int:
    cfg = build_config(load_config(args.config), _overrides(args))
    result = run_to_dir(cfg, args.out)
    print(f"wrote {args.out}/metrics.jsonl and summary.json")
    print(
        f"steps={result.summary['total_steps']} grad_evals={result.summary['total_grad_evals']}"
        f" final_train_loss={result.summary['final_train_loss']:.6g}"
    )
    return EXIT_OK


def _parse_grid(pairs) -> dict[str, list[str]]:
    grid: dict[str, list[str]] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--grid: expected FIELD=V1,V2,..., got {pair!r}")
        name, values = pair.split("=", 1)
        parsed = [v.strip() for v in values.split(",") if v.strip()]
        if not parsed:
            raise ConfigError(f"--grid {name}: no values")
        grid[name.strip()] = parsed
    return grid


def _cmd_sweep(args) -> int:
    kv = load_config(args.config)
    kv.update(_overrides(args))
    grid = _parse_grid(args.grid)
    jobs = int(os.environ.get("FLATOPT_THREADS", args.jobs))
    rows = run_sweep(kv, grid, args.out, jobs=jobs)
    failures = sum(1 for row in rows if row["status"] != "ok")
    print(f"wrote {args.out}/aggregate.csv ({len(rows)} cells, {failures} failed)")
    return EXIT_OK


def _cmd_probe(args) -> int:
    cfg = build_config(load_config(args.config), _overrides(args))
    series, _ = probe_run(cfg, args.k)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "probe.csv")
    write_probe_csv(series, path)
    mean_gv = float(series.d_gv_norm.mean())
    mean_gs = float(series.d_gs_norm.mean())
    print(f"wrote {path} ({len(series.steps)} rows)")
    print(f"mean d_gv_norm={mean_gv:.6g} mean d_gs_norm={mean_gs:.6g}")
    return EXIT_OK


def _cmd_bound(args) -> int:
    inputs = BoundInputs(
        n=args.n,
        delta=args.delta,
        dim=args.dim,
        w_norm2_sq=args.w_norm_sq,
        rho=args.rho,
        rho0=args.rho0,
    )
    terms = pac_bayes_terms(inputs)
    for name, value in terms.items():
        print(f"{name}: {value!r}")
    print(f"denominator (n-1): {inputs.n - 1}")
    print(f"bound: {pac_bayes_bound(inputs)!r}")
    return EXIT_OK


def _cmd_check(args) -> int:
    cfg = build_config(load_config(args.config), _overrides(args))
    worst, errors = gradient_check_report(cfg)
    for i, err in enumerate(errors):
        print(f"point {i}: max relative error {err:.3e}")
    print(f"worst: {worst:.3e}")
    if worst >= 1e-4:
        print("FAIL: analytic gradient disagrees with finite differences")
        return EXIT_NUMERIC
    print("OK")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .report import render_dir

    written = render_dir(args.directory)
    if not written:
        print(f"no renderable files found in {args.directory}", file=sys.stderr)
        return EXIT_IO
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "probe": _cmd_probe,
    "bound": _cmd_bound,
    "check": _cmd_check,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid value: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
