"""Checker reports and their JSON / CSV / .dat serializations."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

SCHEMA_VERSION = "1.0"
VERDICTS = ("consistent", "violated", "inconclusive")


def _clean(v):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class InequalityReport:
    """Outcome of one checker.

    ``empirical_constant`` is the smallest constant that makes the checked
    inequality hold on the data; ``scale_series`` lists (scale, constant)
    pairs from rescaled or refined runs.
    """

    name: str
    lhs: float | None
    rhs_shape: str
    empirical_constant: float | None
    verdict: str
    scale_series: list = field(default_factory=list)
    rhs: float | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")

    def to_dict(self):
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["scale_series"] = [list(p) for p in d.get("scale_series") or []]
        return cls(**d)


def report_schema():
    """JSON schema of report.json."""
    num = {"type": ["number", "null"]}
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "finslerlab report",
        "type": "object",
        "required": ["schema_version", "scenario", "seed", "task", "reports", "errors"],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "scenario": {"type": "string"},
            "seed": {"type": "integer"},
            "task": {"type": "string"},
            "config": {"type": "object"},
            "nu": num,
            "errors": {"type": "array", "items": {
                "type": "object", "required": ["check", "error", "message"],
                "properties": {"check": {"type": "string"}, "error": {"type": "string"},
                               "message": {"type": "string"}}}},
            "reports": {"type": "array", "items": {
                "type": "object",
                "required": ["name", "lhs", "rhs_shape", "empirical_constant", "verdict", "scale_series"],
                "properties": {
                    "name": {"type": "string"},
                    "lhs": num,
                    "rhs": num,
                    "rhs_shape": {"type": "string"},
                    "empirical_constant": num,
                    "verdict": {"enum": list(VERDICTS)},
                    "scale_series": {"type": "array", "items": {
                        "type": "array", "minItems": 2, "maxItems": 2, "items": num}},
                    "details": {"type": "object"},
                }}},
        },
    }


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v))


def summary_csv(scenario, reports, errors=()):
    """Fixed-column CSV text, one row per executed check."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario", "check", "lhs", "empirical_constant", "verdict"])
    for r in reports:
        w.writerow([scenario, r.name, _fmt(r.lhs), _fmt(r.empirical_constant), r.verdict])
    for e in errors:
        w.writerow([scenario, e["check"], "", "", "error"])
    return buf.getvalue()


def write_dat(path, series, header):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for a, b in series:
            fh.write(f"{_fmt(a) or 'nan'} {_fmt(b) or 'nan'}\n")


def emit_report(out_dir, scenario, reports, seed, task, config=None, errors=(), nu=None):
    """Write report.json, summary.csv and one .dat file per scale series."""
    import os

    if not reports and not errors:
        raise ValueError("emit_report needs at least one report")
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario,
        "seed": int(seed),
        "task": task,
        "config": _clean(config or {}),
        "nu": nu,
        "errors": list(errors),
        "reports": [r.to_dict() for r in reports],
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        fh.write(summary_csv(scenario, reports, errors))
    written = []
    for r in reports:
        if r.scale_series:
            p = os.path.join(out_dir, f"{r.name}.dat")
            write_dat(p, r.scale_series, f"{r.name}: scale empirical_constant")
            written.append(p)
    return doc, written
