"""Run reports: named checks, deterministic serialization, CSV helpers."""

import csv
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


def _commit_stamp():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


@dataclass
class RunReport:
    """Per-check results plus provenance; JSON layout is stable and sorted.

    Everything except the ``timing`` block is deterministic given
    (config, seed); comparisons for reproducibility should drop that key.
    """

    config: dict
    checks: list = field(default_factory=list)
    started: float = field(default_factory=time.time)

    def add(self, name, value, threshold, passed=None, direction="<",
            note=None):
        if passed is None:
            passed = (value < threshold) if direction == "<" \
                else (value > threshold)
        entry = {"name": name, "value": float(value),
                 "threshold": float(threshold), "direction": direction,
                 "pass": bool(passed)}
        if note:
            entry["note"] = note
        self.checks.append(entry)
        return entry

    def add_bool(self, name, passed, note=None):
        entry = {"name": name, "value": float(bool(passed)),
                 "threshold": 1.0, "direction": ">=", "pass": bool(passed)}
        if note:
            entry["note"] = note
        self.checks.append(entry)
        return entry

    @property
    def all_passed(self):
        return all(c["pass"] for c in self.checks)

    def as_dict(self):
        return {
            "version": __version__,
            "commit": _commit_stamp(),
            "config": self.config,
            "checks": self.checks,
            "all_passed": self.all_passed,
            "timing": {"wall_time_s": time.time() - self.started},
        }

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return str(path)

    def print_lines(self, stream=None):
        import sys
        stream = stream or sys.stdout
        for c in self.checks:
            mark = "PASS" if c["pass"] else "FAIL"
            note = f"  [{c['note']}]" if "note" in c else ""
            print(f"[{mark}] {c['name']}: {c['value']:.6e} "
                  f"({c['direction']} {c['threshold']:.3e}){note}",
                  file=stream)


def write_csv(path, rows, fieldnames=None):
    """Deterministic CSV: repr-formatted floats, fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return str(path)
    if fieldnames is None:
        fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([repr(row[k]) if isinstance(row[k], float)
                             else row[k] for k in fieldnames])
    return str(path)


def strip_timing(report_dict):
    out = dict(report_dict)
    out.pop("timing", None)
    return out
