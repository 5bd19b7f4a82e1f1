"""Versioned JSON reports and their on-disk form.

Reports are serialised with sorted keys and a fixed float format so that two
runs of the same configuration produce identical bytes. Writes go through a
temporary file in the target directory followed by an atomic rename.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .inequalities import FAIL, PASS, UNMET, CheckVerdict

SCHEMA_VERSION = "report_v1"


def _plain(obj):
    """Convert numpy scalars/arrays, dataclasses and non-finite floats to JSON values."""
    if isinstance(obj, CheckVerdict):
        return _plain(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return {"re": _plain(obj.real), "im": _plain(obj.imag)}
    return obj


def tally(verdicts) -> dict:
    counts = {PASS: 0, FAIL: 0, UNMET: 0}
    for v in verdicts:
        status = v.status if isinstance(v, CheckVerdict) else v["status"]
        counts[status] += 1
    return counts


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    seed: int | None
    results: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    timing: dict | None = None

    @property
    def summary(self) -> dict:
        counts = tally(self.verdicts)
        return {**counts, "all_passed": counts[FAIL] == 0}

    @property
    def failed(self) -> bool:
        return self.summary[FAIL] > 0

    def to_dict(self) -> dict:
        out = {
            "schema": SCHEMA_VERSION,
            "kind": self.kind,
            "config": self.config,
            "seed": self.seed,
            "results": self.results,
            "verdicts": self.verdicts,
            "summary": self.summary,
            "notes": list(self.notes),
        }
        if self.timing is not None:
            out["timing"] = self.timing
        return _plain(out)

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(obj, indent: int | None = 2) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, allow_nan=False)


def write_atomic(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_schema() -> dict:
    text = resources.files("ncagm").joinpath("schemas", "report_v1.json").read_text(encoding="utf-8")
    return json.loads(text)
