"""Regression baselines for measured constants.

A baseline file maps a config fingerprint (sha256 of the canonical JSON of
every numerically relevant field) to the constants measured on the first
run, each with a relative tolerance.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping

DEFAULT_RTOL = 0.25
ABS_FLOOR = 1e-12
BASELINE_SCHEMA = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def fingerprint(config: Mapping) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@dataclass
class Mismatch:
    name: str
    stored: float
    measured: float
    rtol: float

    def __str__(self):
        return f"{self.name}: stored {self.stored:.6g}, measured {self.measured:.6g} (rtol {self.rtol})"


def within(stored: float, measured: float, rtol: float) -> bool:
    if math.isinf(stored) or math.isinf(measured):
        return stored == measured
    return abs(measured - stored) <= rtol * abs(stored) + ABS_FLOOR


class Baseline:
    """In-memory view of a baseline file."""

    def __init__(self, path):
        self.path = Path(path)
        self.entries: Dict[str, dict] = {}
        if self.path.exists():
            data = json.loads(self.path.read_text())
            self.entries = data.get("entries", {})

    def has(self, key: str) -> bool:
        return key in self.entries

    def record(self, key: str, experiment: str, constants: Mapping[str, float],
               rtol: float = DEFAULT_RTOL) -> None:
        self.entries[key] = {"experiment": experiment,
                             "constants": {k: {"value": float(v), "rtol": rtol}
                                           for k, v in sorted(constants.items())}}

    def compare(self, key: str, constants: Mapping[str, float]) -> List[Mismatch]:
        stored = self.entries[key]["constants"]
        out = []
        for name, entry in sorted(stored.items()):
            if name not in constants:
                out.append(Mismatch(name, entry["value"], math.nan, entry["rtol"]))
            elif not within(entry["value"], float(constants[name]), entry["rtol"]):
                out.append(Mismatch(name, entry["value"], float(constants[name]), entry["rtol"]))
        return out

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps({"schema_version": BASELINE_SCHEMA, "entries": self.entries},
                                        sort_keys=True, indent=1))
