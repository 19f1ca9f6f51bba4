"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    analyze_rabi,
    experiment_blockade_rabi,
    experiment_phase_oscillation,
    experiment_spectroscopy,
    fit_to_csv,
    simulate_scan,
)
from .ryx import ExperimentDocument, ParseError, ScanSpec, parse_file

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help=".ryx experiment description")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override a parameter, e.g. address.peak_shift_mhz=10")
    p.add_argument("--scan", metavar="PATH=START:STOP:STEP", help="replace the document's scan")
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ideal", action="store_true", help="exact populations, no sampling or detection errors")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--lenient", action="store_true", help="unknown keys are warnings, not errors")
    p.add_argument("--out", help="CSV output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectroscopy", help="light shift versus addressing-beam displacement")
    _common(p)
    p.add_argument("--detunings", metavar="START:STOP:STEP", help="inner drive-detuning scan (MHz)")

    p = sub.add_parser("rabi", help="two-atom populations versus drive duration")
    _common(p)
    p.add_argument("--addressed", action="store_true", help="addressing beam on atom 2 during the drive")
    p.add_argument("--detection", action="store_true",
                   help="with --ideal, pass the populations through the detection channel")
    p.add_argument("--fit-out", help="write the damped-sine fit here")

    p = sub.add_parser("phase", help="P_gg versus addressing time after symmetric excitation")
    _common(p)
    p.add_argument("--shifts", type=_float_list, help="comma-separated light shifts (MHz)")
    p.add_argument("--powers", type=_float_list, help="comma-separated beam powers (mW), needs --kappa")
    p.add_argument("--kappa", type=float, help="light shift per unit power (MHz/mW)")
    p.add_argument("--fit-out", help="write per-shift fits and the f-vs-shift regression here")

    p = sub.add_parser("evolve", help="final populations over the document's scan")
    _common(p)

    p = sub.add_parser("validate", help="parse and lint a .ryx file")
    p.add_argument("path", nargs="?")
    p.add_argument("--config")
    p.add_argument("--lenient", action="store_true")
    return parser


def load_document(args) -> tuple[ExperimentDocument, ScanSpec | None]:
    doc = parse_file(args.config, strict=not args.lenient)
    for w in doc.warnings:
        print(f"{args.config}:{w.line}:{w.column}: warning {w.code} {w.message}", file=sys.stderr)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects PATH=VALUE, got {item!r}")
        path, value = item.split("=", 1)
        doc = doc.with_value(path.strip(), value.strip())
    if args.shots is not None:
        doc = doc.with_value("noise.shots", args.shots)
    if args.seed is not None:
        doc = doc.with_value("noise.rng_seed", args.seed)
    scan = None
    if args.scan:
        if "=" not in args.scan:
            raise ConfigError(f"--scan expects PATH=START:STOP:STEP, got {args.scan!r}")
        path, rng = args.scan.split("=", 1)
        scan = ScanSpec.parse(path.strip(), rng.strip())
        doc.with_value(scan.parameter, scan.start)
    return doc, scan


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _validate(args) -> int:
    path = args.path or args.config
    if path is None:
        print("validate: no file given", file=sys.stderr)
        return EXIT_CONFIG
    try:
        doc = parse_file(path, strict=not args.lenient)
    except ParseError as exc:
        for d in exc.diagnostics:
            print(f"{path}:{d}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in doc.warnings:
        print(f"{path}:{w.line}:{w.column}: warning {w.code} {w.message}", file=sys.stderr)
    print(f"{path}: ok ({doc.atom_count} atoms, {len(doc.blocks)} blocks)")
    return EXIT_OK


def _run(args, doc: ExperimentDocument, scan: ScanSpec | None) -> None:
    ideal = args.ideal
    if args.command == "rabi":
        table = experiment_blockade_rabi(doc, args.addressed, ideal, args.detection, scan, args.workers)
        _emit(table.to_csv(), args.out)
        if args.fit_out:
            _emit(fit_to_csv(analyze_rabi(table, args.addressed)), args.fit_out)
    elif args.command == "phase":
        result = experiment_phase_oscillation(
            doc, args.shifts, args.powers, args.kappa, ideal, scan, args.workers
        )
        if len(result.tables) == 1:
            _emit(result.tables[0].to_csv(), args.out)
        else:
            if args.out is None:
                for t in result.tables:
                    sys.stdout.write(t.to_csv())
            else:
                out = Path(args.out)
                for i, t in enumerate(result.tables):
                    _emit(t.to_csv(), str(out.with_name(f"{out.stem}_{i}{out.suffix}")))
        if args.fit_out:
            _emit(result.summary_csv(), args.fit_out)
    elif args.command == "spectroscopy":
        detunings = ScanSpec.parse("drive.detuning_mhz", args.detunings) if args.detunings else None
        result = experiment_spectroscopy(doc, ideal, scan, detunings, args.workers)
        _emit(result.to_csv(), args.out)
    elif args.command == "evolve":
        _emit(simulate_scan(doc, scan, ideal, args.workers).to_csv(), args.out)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate":
        return _validate(args)
    try:
        doc, scan = load_document(args)
    except ParseError as exc:
        for d in exc.diagnostics:
            print(f"{args.config}:{d}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _run(args, doc, scan)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
