"""Command-line front end.

Subcommands:
  criteria  - print the entanglement verdicts for the configured source
  simulate  - run one session, emit a JSON-lines summary record
  sweep     - run every sweep point, one record per point in sweep order
  validate  - Monte Carlo vs closed-form formula table

Exit codes: 0 success, 1 validation failure / physics refusal, 2 config
error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .eavesdropper import eve_transcript_lines
from .experiment import run_single, run_sweep, summarize
from .gaussian import entanglement_checks
from .protocol import (
    ProtocolError,
    SessionResult,
    key_export,
    transcript_lines,
)
from .validation import format_check_table, run_formula_checks

EXIT_OK = 0
EXIT_REFUSED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brightqkd",
        description="Measurement-choice CV-QKD simulator and formula validator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("criteria", "entanglement criteria for the configured source"),
        ("simulate", "run a single session"),
        ("sweep", "run the configured parameter sweep"),
        ("validate", "check closed-form formulas against Monte Carlo"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
        p.add_argument(
            "--per-slot",
            action="store_true",
            help="also write per-slot transcript CSVs (needs --out)",
        )
        p.add_argument("--quiet", action="store_true", help="suppress stdout chatter")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config(text)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed: must be a nonnegative integer")
            config = dataclasses.replace(config, seed=args.seed)
        if args.per_slot and _out_path(args, config) is None:
            raise ConfigError("--per-slot requires --out (or output_path in the config)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "criteria":
            return _cmd_criteria(config, args)
        if args.command == "simulate":
            return _cmd_simulate(config, args)
        if args.command == "sweep":
            return _cmd_sweep(config, args)
        return _cmd_validate(config, args)
    except ProtocolError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def _out_path(args, config: ExperimentConfig) -> Path | None:
    if args.out is not None:
        return Path(args.out)
    if config.output_path is not None:
        return Path(config.output_path)
    return None


def _emit_lines(lines: list[str], args, config) -> None:
    path = _out_path(args, config)
    if path is None:
        for line in lines:
            print(line)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_side_files(
    result: SessionResult, base: Path, label: str, quiet: bool
) -> None:
    stem = base.with_suffix("")
    transcript = Path(f"{stem}{label}.transcript.csv")
    transcript.write_text("\n".join(transcript_lines(result)) + "\n", encoding="utf-8")
    key_path = Path(f"{stem}{label}.key.json")
    key_path.write_text(
        json.dumps(
            {
                "alice": key_export(result.alice_key),
                "bob": key_export(result.bob_key),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    written = [transcript, key_path]
    if result.eve_records is not None:
        eve_path = Path(f"{stem}{label}.eve.csv")
        eve_path.write_text(
            "\n".join(eve_transcript_lines(result.eve_records)) + "\n",
            encoding="utf-8",
        )
        written.append(eve_path)
    if not quiet:
        for p in written:
            print(f"wrote {p}", file=sys.stderr)


def _cmd_criteria(config: ExperimentConfig, args) -> int:
    report = entanglement_checks(config.source)
    if not args.quiet:
        src = config.source
        print(
            f"source: v_plus_x={src.v_plus_x} v_minus_x={src.v_minus_x} "
            f"v_minus_y={src.v_minus_y} v_plus_y={src.v_plus_y}"
        )
        print(f"sum criterion value      : {report.sum_criterion_value:.6g} (< 2 ?)")
        print(f"nonseparable             : {report.nonseparable}")
        print(f"squeezed-state entangled : {report.squeezed_state_entangled}")
        print(f"inference-error product  : {report.epr_product:.6g} (< 1 ?)")
        print(f"epr paradox              : {report.epr_paradox}")
    return EXIT_OK if report.squeezed_state_entangled else EXIT_REFUSED


def _cmd_simulate(config: ExperimentConfig, args) -> int:
    result, record = run_single(config)
    _emit_lines([record.to_json()], args, config)
    if args.per_slot:
        _write_side_files(result, _out_path(args, config), "", args.quiet)
    if not args.quiet:
        print(
            f"kept {record.key_bits}/{config.session.num_slots} slots, "
            f"alarms: {record.alarms or 'none'}",
            file=sys.stderr,
        )
    return EXIT_OK


def _cmd_sweep(config: ExperimentConfig, args) -> int:
    if config.sweep is None:
        raise ConfigError("sweep: config has no sweep section")
    runs = run_sweep(config)
    _emit_lines([record.to_json() for _, _, record in runs], args, config)
    if args.per_slot:
        base = _out_path(args, config)
        for i, (_, result, _) in enumerate(runs):
            _write_side_files(result, base, f".point{i:02d}", args.quiet)
    return EXIT_OK


def _cmd_validate(config: ExperimentConfig, args) -> int:
    rows = run_formula_checks(config.source, config.seed)
    table = format_check_table(rows)
    if not args.quiet:
        print(table)
    if args.out is not None or config.output_path is not None:
        _emit_lines(
            [
                json.dumps(
                    {
                        "record": "brightqkd-validate-v1",
                        "name": r.name,
                        "expected": r.expected,
                        "observed": r.observed,
                        "tolerance": r.tolerance,
                        "passed": r.passed,
                        "seed": config.seed,
                    }
                )
                for r in rows
            ],
            args,
            config,
        )
    return EXIT_OK if all(r.passed for r in rows) else EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
