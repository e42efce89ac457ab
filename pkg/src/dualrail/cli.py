"""Batch command-line front end.

Verbs:
  run <config.yaml>        execute one experiment, write records + tables
  report <records.jsonl>   re-analyze an existing record file
  presets list             show the named device presets
  schema print             print the config JSON schema

Exit codes: 0 success, 1 user error (config/schema/file problems),
2 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import traceback
from pathlib import Path

from .analysis import AnalysisError
from .config import (
    ConfigError,
    PRESETS,
    device_from_config,
    load_config,
    schema_json,
)
from .experiments import EXPERIMENTS, ExperimentError, RunArtifacts, analyze_records
from .records import RecordError, read_records, write_records, write_table


def _config_digest(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _write_artifacts(art: RunArtifacts, out_dir: Path, cfg: dict) -> list[Path]:
    written = []
    out_dir.mkdir(parents=True, exist_ok=True)
    if art.records:
        header = {
            "experiment": cfg["experiment"],
            "seed": cfg["seed"],
            "schedule_hash": _config_digest(cfg),
            "meta": art.record_meta,
        }
        path = out_dir / "records.jsonl"
        write_records(path, header, art.records)
        written.append(path)
    if art.summary:
        path = out_dir / "fit_summary.tsv"
        write_table(path, art.summary, ["metric", "value", "sigma"])
        written.append(path)
    for name, (columns, rows) in art.tables.items():
        path = out_dir / f"{name}.tsv"
        write_table(path, rows, list(columns))
        written.append(path)
    return written


def _print_summary(art: RunArtifacts) -> None:
    for row in art.summary:
        sigma = row.get("sigma")
        if sigma is None or (isinstance(sigma, float) and sigma != sigma):
            print(f"{row['metric']}: {row['value']:.6g}")
        else:
            print(f"{row['metric']}: {row['value']:.6g} +- {sigma:.2g}")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.force:
        cfg["force"] = True
    device = device_from_config(cfg)
    experiment = cfg["experiment"]
    runner = EXPERIMENTS[experiment]
    art = runner(cfg, device)
    out_dir = Path(args.out or cfg.get("output_dir") or f"out/{experiment}")
    written = _write_artifacts(art, out_dir, cfg)
    _print_summary(art)
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_report(args) -> int:
    header, records = read_records(args.records)
    experiment = header.get("experiment")
    if args.experiment and args.experiment != experiment:
        raise RecordError(
            f"record file holds {experiment!r}, requested {args.experiment!r}")
    if not records:
        raise RecordError("record file has no shots")
    art = analyze_records(experiment, records, policy=args.policy)
    _print_summary(art)
    for name, (columns, rows) in art.tables.items():
        if args.table_dir:
            path = Path(args.table_dir) / f"{name}.tsv"
            write_table(path, rows, list(columns))
            print(f"wrote {path}")
    return 0


def cmd_presets(args) -> int:
    if args.action != "list":
        raise ConfigError("presets supports only: list")
    for name, (desc, _) in sorted(PRESETS.items()):
        print(f"{name}: {desc}")
    return 0


def cmd_schema(args) -> int:
    if args.action != "print":
        raise ConfigError("schema supports only: print")
    print(schema_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualrail",
                                 description="dual-rail erasure qubit simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="YAML experiment config")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--force", action="store_true",
                       help="override desk-scale resource caps")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="re-analyze a record file")
    p_rep.add_argument("records", help="records.jsonl written by run")
    p_rep.add_argument("--policy", default="both",
                       choices=["none", "final_readout_only", "mid_checks_only", "both"])
    p_rep.add_argument("--experiment", help="assert the record file's experiment type")
    p_rep.add_argument("--table-dir", help="also write analysis tables here")
    p_rep.set_defaults(func=cmd_report)

    p_pre = sub.add_parser("presets", help="device presets")
    p_pre.add_argument("action", choices=["list"])
    p_pre.set_defaults(func=cmd_presets)

    p_sch = sub.add_parser("schema", help="config schema")
    p_sch.add_argument("action", choices=["print"])
    p_sch.set_defaults(func=cmd_schema)
    return ap


USER_ERRORS = (ConfigError, RecordError, ExperimentError, AnalysisError,
               FileNotFoundError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
