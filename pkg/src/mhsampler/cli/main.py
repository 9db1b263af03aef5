"""``mhsampler`` command line.

Exit codes: 0 success, 2 invalid input (config, trace file, arguments),
3 kernel failure during a run.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..chain import ChainRuntimeError
from ..diagnostics import DEFAULT_LAGS
from .commands import (
    EmptyHistogramError,
    compare_traces,
    diagnose_file,
    dumps,
    histogram_table,
    run_experiment,
    tv_distance,
    write_table,
)
from .config import ConfigError, load_config
from .traceio import TraceFormatError, read_trace

EXIT_OK, EXIT_INPUT, EXIT_KERNEL = 0, 2, 3

log = logging.getLogger("mhsampler")


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mhsampler", description="Metropolis-Hastings experiment runner and trace tools.",
                                epilog="exit codes: 0 ok, 2 invalid input, 3 kernel failure during a run")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("config")
    run.add_argument("--replicates", type=int, default=1,
                     help="run k independent chains (seed substreams), one file set each")

    diag = sub.add_parser("diagnose", help="diagnostics report for a trace CSV")
    diag.add_argument("trace")
    diag.add_argument("--lags", type=_int_list, nargs="+", default=None,
                      help="lags, space or comma separated (default 1 5 10 50)")
    diag.add_argument("--burn-in", type=int, default=None)
    diag.add_argument("--out", help="report path (default: <trace>.diagnostics.json next to the trace; '-' for stdout)")

    hist = sub.add_parser("hist", help="histogram bin table for one trace column")
    hist.add_argument("trace")
    hist.add_argument("--bins", type=int, default=50)
    hist.add_argument("--lo", type=float, default=-4.0)
    hist.add_argument("--hi", type=float, default=4.0)
    hist.add_argument("--ref", choices=["toy-sin", "gaussian"], default=None)
    hist.add_argument("--col", default=None, help="column (default: first coordinate)")
    hist.add_argument("--burn-in", type=int, default=0)
    hist.add_argument("--out", default=None, help="CSV path (default: <trace>.hist.csv)")

    cmp_ = sub.add_parser("compare", help="compare one column across traces")
    cmp_.add_argument("traces", nargs="+")
    cmp_.add_argument("--col", required=True)
    cmp_.add_argument("--burn-in", type=int, default=None)
    cmp_.add_argument("--out", default=None, help="also write the comparison as JSON")
    return p


def _stem(path: str) -> str:
    p = Path(path)
    return str(p.with_suffix("")) if p.suffix == ".csv" else str(p)


def _run_one(args):
    cfg, i, k = args
    return run_experiment(cfg, i, k).files


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.replicates < 1:
        raise ConfigError("--replicates must be at least 1", None, "arguments")
    if args.replicates == 1:
        res = run_experiment(cfg)
        r = res.report
        print(f"{r.kernel_label}: T={r.n_samples} acceptance={r.acceptance_rate:.4f} "
              f"ess_min={r.ess_min if r.ess_min is None else round(r.ess_min, 1)} -> {res.files['trace']}")
        return EXIT_OK
    jobs = [(cfg, i, args.replicates) for i in range(args.replicates)]
    with ProcessPoolExecutor(max_workers=args.replicates) as pool:
        for files in pool.map(_run_one, jobs):
            print(files["trace"])
    return EXIT_OK


def cmd_diagnose(args) -> int:
    lags = [v for group in args.lags for v in group] if args.lags else list(DEFAULT_LAGS)
    report = diagnose_file(args.trace, lags, args.burn_in)
    text = report.to_json()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out = args.out or f"{_stem(args.trace)}.diagnostics.json"
        Path(out).write_text(text)
        print(out)
    for w in report.warnings:
        log.warning(w)
    return EXIT_OK


def cmd_hist(args) -> int:
    trace = read_trace(args.trace)
    col = args.col or trace.coord_names[0]
    values = trace.column(col)[args.burn_in:]
    table = histogram_table(values, args.bins, args.lo, args.hi, args.ref)
    out = args.out or f"{_stem(args.trace)}.hist.csv"
    write_table(out, table)
    msg = out
    if args.ref:
        msg += f" (total variation vs {args.ref}: {tv_distance(table):.4f})"
    print(msg)
    return EXIT_OK


def cmd_compare(args) -> int:
    traces = [read_trace(p) for p in args.traces]
    for p, t in zip(args.traces, traces):
        if args.col not in t.coord_names:
            raise ValueError(f"{p} has no column {args.col!r} (columns: {', '.join(t.coord_names)})")
    res = compare_traces(traces, args.col, args.burn_in, labels=args.traces)
    print(f"{'trace':<40} {'mean':>12} {'mcse':>10} {'ess':>10} {'accept':>8}")
    for row in res["traces"]:
        def f(v, spec):
            return format(v, spec) if v is not None else "null"
        print(f"{row['trace']:<40} {f(row['mean'], '12.6f')} {f(row['mcse'], '10.6f')} "
              f"{f(row['ess'], '10.1f')} {row['acceptance_rate']:8.4f}")
    for pr in res["pairs"]:
        z = pr["combined_mcse_units"]
        print(f"{pr['a']} vs {pr['b']}: diff={pr['mean_difference']:.6f} "
              f"({'null' if z is None else format(z, '.3f')} combined MCSEs)")
    if args.out:
        Path(args.out).write_text(dumps(res))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "diagnose": cmd_diagnose, "hist": cmd_hist, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EmptyHistogramError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ChainRuntimeError as exc:
        print(f"error: kernel failure at iteration {exc.iteration}: {exc.cause}", file=sys.stderr)
        return EXIT_KERNEL


if __name__ == "__main__":
    sys.exit(main())
