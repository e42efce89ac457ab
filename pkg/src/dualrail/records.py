"""Per-shot records and their line-delimited file format.

A record file holds one JSON header line (schema version, experiment
type, root seed, schedule hash) followed by one JSON object per shot.
Files are written atomically (temp file + rename) and re-reading them
never re-executes simulation.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1

FLAG_NO_ERASURE = "no_erasure"
FLAG_ERASURE = "erasure"

LABEL_IN_SUBSPACE = "in_subspace"
LABEL_LEAKED_00 = "leaked_00"
LABEL_LEAKED_MULTI = "leaked_multi"


class RecordError(ValueError):
    """Malformed record file or record content."""


@dataclass(frozen=True)
class CheckOutcome:
    time: float
    flag: str

    def __post_init__(self):
        if self.flag not in (FLAG_NO_ERASURE, FLAG_ERASURE):
            raise RecordError(f"unknown erasure flag {self.flag!r}")


@dataclass(frozen=True)
class ShotRecord:
    """One experimental shot: erasure-check flags plus final readout.

    `final_bits` are the per-transmon readout outcomes of the dual-rail
    pair, (q1, q2); `true_final_label` is the simulator's ground truth,
    with `coherence_lost` marking shots that left and re-entered the
    subspace.
    """

    check_outcomes: tuple[CheckOutcome, ...]
    final_bits: tuple[int, int]
    true_final_label: str
    seed: int
    coherence_lost: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.true_final_label not in (LABEL_IN_SUBSPACE, LABEL_LEAKED_00, LABEL_LEAKED_MULTI):
            raise RecordError(f"unknown final label {self.true_final_label!r}")

    @property
    def any_erasure_flag(self) -> bool:
        return any(c.flag == FLAG_ERASURE for c in self.check_outcomes)

    def to_json_obj(self) -> dict:
        obj = {
            "checks": [[c.time, c.flag] for c in self.check_outcomes],
            "bits": list(self.final_bits),
            "label": self.true_final_label,
            "seed": self.seed,
            "coherence_lost": self.coherence_lost,
        }
        if self.meta:
            obj["meta"] = self.meta
        return obj

    @staticmethod
    def from_json_obj(obj: dict) -> "ShotRecord":
        return ShotRecord(
            check_outcomes=tuple(CheckOutcome(float(t), f) for t, f in obj.get("checks", [])),
            final_bits=tuple(int(b) for b in obj["bits"]),  # type: ignore[arg-type]
            true_final_label=obj["label"],
            seed=int(obj["seed"]),
            coherence_lost=bool(obj.get("coherence_lost", False)),
            meta=obj.get("meta", {}),
        )


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def write_records(path, header: dict, records: Iterable[ShotRecord]) -> None:
    """Atomically write a header line plus one line per shot."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = dict(header)
    head.setdefault("schema_version", SCHEMA_VERSION)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(_dump(head) + "\n")
            for rec in records:
                fh.write(_dump(rec.to_json_obj()) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_records(path) -> tuple[dict, list[ShotRecord]]:
    path = Path(path)
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise RecordError(f"empty record file {path}")
    header = json.loads(lines[0])
    if "schema_version" not in header:
        raise RecordError(f"{path} has no header line")
    shots = [ShotRecord.from_json_obj(json.loads(ln)) for ln in lines[1:]]
    return header, shots


def write_table(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    """Flat whitespace-separated table with a header row, written atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\t".join(columns) + "\n")
            for row in rows:
                fh.write("\t".join(_format_cell(row.get(c)) for c in columns) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_cell(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return repr(v)
    return str(v)
