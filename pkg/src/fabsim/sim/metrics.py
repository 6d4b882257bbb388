"""Run metrics and their on-disk formats."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np

UNITS = {
    "placement_error_mm": "mm",
    "station_error_mm": "mm",
    "station_error_mrad": "mrad",
    "scan_match_error_mm": "mm",
    "hold_deviation_mm": "mm",
    "contour_max_mm": "mm",
    "contour_rms_mm": "mm",
}


def config_hash(config):
    """SHA-256 of the canonical JSON form, ignoring where outputs go."""
    doc = {k: v for k, v in config.items() if k not in ("output_dir",)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def summarize(values):
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0:
        return {"n": 0, "max": 0.0, "p99": 0.0, "mean": 0.0}
    return {"n": int(v.size), "max": float(v.max()), "p99": float(np.percentile(v, 99)), "mean": float(v.mean())}


@dataclass
class RunMetrics:
    scenario: str
    seed: int
    config_hash: str
    status: str = "ok"
    cause: str = ""
    series: dict = field(default_factory=dict)  # name -> list of floats, see UNITS
    counts: dict = field(default_factory=dict)
    latency: dict = field(default_factory=dict)  # MPC timing, not deterministic
    events: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)  # extra file name -> writer(path)

    def add(self, name, value):
        self.series.setdefault(name, []).append(float(value))

    @property
    def ok(self):
        return self.status == "ok"

    def summary(self):
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "status": self.status,
            "cause": self.cause,
            "counts": dict(sorted(self.counts.items())),
            "series": {k: summarize(v) for k, v in sorted(self.series.items())},
        }

    def write(self, out_dir, prefix="metrics"):
        """Deterministic data files plus a separate metadata file with timings.

        Writes ``<prefix>.csv`` (series, index, value), ``<prefix>_summary.json``,
        ``<prefix>_events.jsonl`` and ``<prefix>_meta.json``.
        """
        os.makedirs(out_dir, exist_ok=True)
        paths = {k: os.path.join(out_dir, f"{prefix}{s}") for k, s in
                 (("csv", ".csv"), ("summary", "_summary.json"), ("events", "_events.jsonl"), ("meta", "_meta.json"))}
        with open(paths["csv"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series", "index", "value"])
            for name in sorted(self.series):
                for i, v in enumerate(self.series[name]):
                    w.writerow([name, i, repr(float(v))])
        with open(paths["summary"], "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(paths["events"], "w") as fh:
            for e in self.events:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
        for name, writer in sorted(self.artifacts.items()):
            paths[name] = os.path.join(out_dir, name)
            writer(paths[name])
        with open(paths["meta"], "w") as fh:
            meta = {
                "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "python": platform.python_version(),
                "host": platform.node(),
                "mpc_latency_ms": self.latency,
            }
            json.dump(meta, fh, indent=2, sort_keys=True)
        return paths
