"""Experiment results: JSON payload plus flat CSV tables."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__

SCOPE_NOTE = (
    "continuum covariance kernels are checked through the 2-point motion and the limit-field "
    "sampler; the fluctuation limit theorems are checked on the lattice model"
)
THRESHOLD_NOTE = "finite-n KS and slope thresholds are fixed engineering choices, not proven rates"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


@dataclass
class Check:
    name: str
    passed: bool
    statistic: float
    threshold: object
    detail: str = ""

    def to_dict(self):
        return _plain({"passed": bool(self.passed), "statistic": self.statistic,
                       "threshold": self.threshold, "detail": self.detail})

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: statistic={self.statistic:.6g} threshold={self.threshold} {self.detail}".rstrip()


@dataclass
class Table:
    columns: list
    rows: list

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        return buf.getvalue()


@dataclass
class EnsembleResult:
    experiment: str
    model: str
    config: dict
    config_hash: str
    seeds: dict
    statistics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    selected: list | None = None
    wall_time: float = 0.0
    notes: list = field(default_factory=lambda: [SCOPE_NOTE, THRESHOLD_NOTE])

    def add_check(self, check: Check):
        self.checks[check.name] = check

    @property
    def asserted(self):
        names = list(self.checks) if self.selected is None else self.selected
        return [self.checks[n] for n in names]

    @property
    def passed(self):
        return all(c.passed for c in self.asserted)

    @property
    def failures(self):
        return [c.name for c in self.asserted if not c.passed]

    def payload(self):
        """Everything that must reproduce bit-identically (no timing, no host data)."""
        return _plain({
            "experiment": self.experiment,
            "model": self.model,
            "config": self.config,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "statistics": self.statistics,
            "checks": {k: c.to_dict() for k, c in self.checks.items()},
            "asserted": [c.name for c in self.asserted],
            "passed": self.passed,
            "fits": self.fits,
            "tables": {k: hashlib.sha256(t.to_csv().encode()).hexdigest() for k, t in self.tables.items()},
            "notes": self.notes,
        })

    def payload_json(self):
        return json.dumps(self.payload(), sort_keys=True, indent=2)

    def to_json(self):
        doc = self.payload()
        doc["meta"] = {
            "wall_time_s": self.wall_time,
            "package_version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = self.experiment
        paths = [out / f"{stem}.json"]
        paths[0].write_text(self.to_json() + "\n", encoding="utf-8")
        for name, table in self.tables.items():
            p = out / f"{stem}_{name}.csv"
            p.write_text(table.to_csv(), encoding="utf-8")
            paths.append(p)
        return paths

    def summary_lines(self):
        return [c.line() for c in self.asserted]
