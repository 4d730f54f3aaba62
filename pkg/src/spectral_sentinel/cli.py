"""``spectral-sentinel`` command line: simulate, analyze, detect, reproduce.

Exit status is 0 on success, 2 for usage, configuration or input errors and
3 for runtime or numeric failures.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .cases import run_fault_case, run_lorenz_case
from .config import load_run_config, resolve_seed
from .detector import (
    METHODS,
    DetectionConfig,
    WindowSpec,
    detect,
    event_report,
    les_series,
    les_series_to_csv_text,
    load_les_csv,
    null_scores,
    parse_ids,
)
from .errors import (
    ArityError,
    ConfigurationError,
    DomainError,
    ParseError,
    RegimeError,
    SentinelError,
    StageError,
    WindowSizeError,
    ZeroVarianceError,
)
from .series import atomic_write_text, load_timeseries_csv, timeseries_to_csv_text
from .testfunctions import parse_phi

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

_USAGE_ERRORS = (ConfigurationError, ParseError, WindowSizeError, ArityError, RegimeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 already; keep the message format ours
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: {message}\n")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, _USAGE_ERRORS):
        return EXIT_USAGE
    if isinstance(exc, OSError):
        return EXIT_USAGE
    return EXIT_RUNTIME


def _describe(exc: BaseException) -> str:
    if isinstance(exc, ParseError) and exc.row is not None and f"row {exc.row}" not in str(exc):
        return f"{exc} (row {exc.row})"
    return str(exc)


def _write(path: str, text: str) -> None:
    p = Path(path)
    if not p.parent.is_dir():
        raise ConfigurationError(f"output directory {p.parent} does not exist")
    atomic_write_text(p, text)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, seed=resolve_seed(args.seed))
    out = args.out or cfg.outputs.get("series")
    if not out:
        raise ConfigurationError("no output path: pass --out or set outputs.series in the config")
    series = cfg.simulate()
    _write(out, timeseries_to_csv_text(series))
    names = ", ".join(f"{c.id}:{c.name}" for c in series.channels)
    print(f"{series.n_samples} samples, {series.n_channels} channels ({names}) -> {out}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    spec = WindowSpec(args.window, args.stride)
    phi = parse_phi(args.phi)
    subset = parse_ids(args.subset) if args.subset else None
    series = load_timeseries_csv(args.input)
    les_s = les_series(series, spec, phi, standardize=args.standardize, subset=subset)
    scores = None
    if args.standardize:
        try:
            scores = null_scores(les_s, phi)
        except (DomainError, ZeroVarianceError, RegimeError):
            scores = None
    _write(args.out, les_series_to_csv_text(les_s, scores))
    print(f"{len(les_s)} windows, N={les_s.n_channels}, T={spec.length}, c={les_s.c!r} -> {args.out}")
    return EXIT_OK


def _reference(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"reference must look like START:STOP, got {text!r}") from None
    return lo, hi


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = DetectionConfig(
        method=args.method,
        threshold=args.threshold,
        reference=args.reference,
        min_gap=args.min_gap,
        kappa4=args.kappa4,
        real_bias=args.real_bias,
    )
    les_s = load_les_csv(args.input)
    phi = parse_phi(les_s.phi) if args.phi is None else parse_phi(args.phi)
    result = detect(les_s, cfg, phi)
    _write(args.out, event_report(result, cfg, les_s))
    times = ", ".join(f"{e.time:g} s" for e in result.events) or "none"
    print(f"{len(result.events)} events ({times}) -> {args.out}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    seed = 0 if seed is None else seed
    phi = parse_phi(args.phi) if args.phi else None
    run = run_lorenz_case if args.case == "lorenz" else run_fault_case
    report = run(args.out, seed=seed, phi=phi)
    for check in report.checks:
        print(check.line())
    print(f"artifacts in {args.out}: {', '.join(report.files)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spectral-sentinel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="integrate a configured system and write its CSV")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output CSV (overrides outputs.series)")
    p.add_argument("--seed", type=int, help="seed (falls back to SPECTRAL_SENTINEL_SEED)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="sliding-window LES of a time-series CSV")
    p.add_argument("--in", dest="input", required=True, help="time-series CSV")
    p.add_argument("--out", required=True, help="LES CSV to write")
    p.add_argument("--window", type=int, required=True, help="window length in samples")
    p.add_argument("--stride", type=int, default=1, help="window stride in samples")
    p.add_argument("--phi", default="lambda^2", help="identity, log, lambda^k or chebyshev:k")
    p.add_argument("--subset", help='channel ids, e.g. "1-24" or "1,3,5-7"')
    p.add_argument(
        "--standardize",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="z-score each channel within each window (default on)",
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("detect", help="score an LES CSV and report change points")
    p.add_argument("--in", dest="input", required=True, help="LES CSV from analyze")
    p.add_argument("--out", required=True, help="JSON event report to write")
    p.add_argument("--method", default="reference-window", help=f"one of {', '.join(METHODS)}")
    p.add_argument("--threshold", type=float, default=3.0)
    p.add_argument("--reference", type=_reference, default=(0, 30), help="reference windows START:STOP")
    p.add_argument("--min-gap", type=int, default=20, help="windows between events and before re-anchoring")
    p.add_argument("--kappa4", type=float, help="excess kurtosis for null z-scores (default: per-window estimate)")
    p.add_argument("--real-bias", action="store_true", help="add the real-Gaussian O(1) mean correction")
    p.add_argument("--phi", help="test function (default: the one recorded in the LES CSV)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("reproduce", help="run a bundled case end to end and check it")
    p.add_argument("case", choices=("lorenz", "fault"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="seed (falls back to SPECTRAL_SENTINEL_SEED, then 0)")
    p.add_argument(
        "--phi", help="override the case's test function (thresholds are then recalibrated, ~20 s)"
    )
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SentinelError, OSError) as exc:
        prefix = f"{args.verb}: "
        if isinstance(exc, StageError):
            prefix += f"stage {exc.stage}: "
            exc_msg = _describe(exc.cause)
        else:
            exc_msg = _describe(exc)
        print(f"error: {prefix}{exc_msg}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
