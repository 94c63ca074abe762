"""Scenario files: sectioned key-value text parsed with configparser.

A scenario names a metric, a measure, a grid and a task::

    [scenario]
    name = euclid-heat
    task = heat
    seed = 0

    [metric]
    kind = randers
    b = 0.3, 0.0

    [measure]
    kind = lebesgue

    [grid]
    h = 0.02

    [task]
    R = 1.0

Every key is optional except ``scenario.task``; missing keys take the
defaults in :data:`SCHEMA` or the per-task defaults in :data:`TASK_DEFAULTS`.
Errors carry the key, the line number and the reason.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

TASKS = ("curvature", "distance", "volume-compare", "heat", "poincare", "sobolev", "mean-value",
         "gradient-estimate", "harnack", "covering", "all")
METRIC_KINDS = ("euclidean", "randers", "conformal-gaussian", "sphere", "hyperbolic")
MEASURE_KINDS = ("lebesgue", "gaussian", "volume")
PROFILES = ("indicator", "cutoff")
DATA_KINDS = ("solver", "kernel")


def _float(s):
    return float(s)


def _int(s):
    return int(s)


def _pair(s):
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return (float(parts[0]), float(parts[1]))


def _choice(options):
    def conv(s):
        s = s.strip().lower()
        if s not in options:
            raise ValueError(f"must be one of: {', '.join(options)}")
        return s

    return conv


def _str(s):
    return s.strip()


# section -> key -> (converter, default); None defaults mean "task dependent"
SCHEMA = {
    "scenario": {
        "name": (_str, "scenario"),
        "task": (_choice(TASKS), None),
        "seed": (_int, 0),
        "out": (_str, None),
    },
    "metric": {
        "kind": (_choice(METRIC_KINDS), "euclidean"),
        "b": (_pair, (0.3, 0.0)),
        "a": (_float, 0.5),
        "derivative_mode": (_choice(("analytic", "fd")), "analytic"),
    },
    "measure": {
        "kind": (_choice(MEASURE_KINDS), "lebesgue"),
        "a": (_float, 1.0),
    },
    "grid": {
        "h": (_float, None),
        "half_width": (_float, None),
    },
    "task": {
        "x0": (_pair, (0.0, 0.0)),
        "R": (_float, 1.0),
        "s": (_float, None),
        "t0": (_float, None),
        "delta": (_float, None),
        "delta_prime": (_float, 0.75),
        "eps": (_float, 0.2),
        "tau": (_float, 0.4),
        "p": (_float, None),
        "nu": (_float, 4.0),
        "dt": (_float, None),
        "T": (_float, 0.25),
        "r1": (_float, 0.5),
        "r2": (_float, 1.0),
        "profile": (_choice(PROFILES), "indicator"),
        "data": (_choice(DATA_KINDS), "solver"),
        "tol": (_float, 0.05),
        "refine": (_choice(("yes", "no")), "yes"),
    },
}

# grid and parameter defaults per task for R = 1
TASK_DEFAULTS = {
    "curvature": {"h": 0.02, "half_width": 1.2},
    "distance": {"h": 0.01, "half_width": 1.5},
    "volume-compare": {"h": 0.01, "half_width": None},
    "heat": {"h": 0.05, "half_width": 3.0, "dt": 1e-3},
    "poincare": {"h": 0.02, "half_width": None, "p": 2.0},
    "sobolev": {"h": 0.02, "half_width": None},
    "mean-value": {"h": 0.1, "half_width": 4.0, "dt": 0.005, "delta": 0.5, "p": 1.0},
    "gradient-estimate": {"h": 0.1, "half_width": 4.0, "dt": 0.005},
    "harnack": {"h": 0.1, "half_width": 4.0, "dt": 0.005, "delta": 0.6},
    "covering": {"h": 2e-4, "half_width": 0.01},
}


@dataclass
class Scenario:
    """A validated scenario; ``params`` merges [task] keys with task defaults."""

    name: str
    task: str
    seed: int
    metric: dict
    measure: dict
    grid: dict
    params: dict
    out: str | None = None
    explicit: dict = field(default_factory=dict)

    def for_task(self, task):
        """Grid and parameters with the defaults of ``task`` filled in.

        Explicit keys win.  Default lengths (h, half_width) scale with R and
        the default time step with R^2.
        """
        p = dict(self.params)
        g = dict(self.grid)
        R = p["R"]
        for k, v in TASK_DEFAULTS.get(task, {}).items():
            if k in ("h", "half_width"):
                if k not in self.explicit.get("grid", ()):
                    g[k] = None if v is None else v * R
            elif k not in self.explicit.get("task", ()):
                p[k] = v * R**2 if k == "dt" else v
        return g, p

    def to_dict(self):
        return {"name": self.name, "task": self.task, "seed": self.seed, "metric": self.metric,
                "measure": self.measure, "grid": self.grid, "params": self.params}


def _line_index(text):
    """(section, key) -> line number, from the raw text."""
    idx, sec = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        mm = re.match(r"\[([^\]]+)\]", s)
        if mm:
            sec = mm.group(1).strip().lower()
            idx[(sec, None)] = n
            continue
        mm = re.match(r"([^=:]+?)\s*[=:]", s)
        if mm and sec is not None:
            idx.setdefault((sec, mm.group(1).strip().lower()), n)
    return idx


def parse_config(text):
    """Parse and validate scenario text; raises ParseError or ValidationError."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ParseError([(None, e.lineno, "text before the first [section] header")]) from None
    except configparser.DuplicateOptionError as e:
        raise ParseError([(f"{e.section}.{e.option}", e.lineno, "duplicate key")]) from None
    except configparser.DuplicateSectionError as e:
        raise ParseError([(e.section, e.lineno, "duplicate section")]) from None
    except configparser.ParsingError as e:
        raise ParseError([(None, ln, f"cannot parse {txt.strip()!r}") for ln, txt in e.errors]) from None
    lines = _line_index(text)
    problems = []
    values = {sec: {} for sec in SCHEMA}
    explicit = {sec: set() for sec in SCHEMA}
    for sec in cp.sections():
        if sec not in SCHEMA:
            problems.append((sec, lines.get((sec, None)),
                             f"unknown section; expected one of: {', '.join(SCHEMA)}"))
            continue
        keys = {k.lower(): k for k in SCHEMA[sec]}
        for key, raw in cp.items(sec):
            line = lines.get((sec, key))
            if key not in keys:
                problems.append((f"{sec}.{key}", line, f"unknown key; expected one of: {', '.join(SCHEMA[sec])}"))
                continue
            name = keys[key]
            conv = SCHEMA[sec][name][0]
            try:
                values[sec][name] = conv(raw)
            except ValueError as e:
                reason = str(e)
                if sec == "metric" and name == "kind":
                    reason = f"unknown metric kind {raw.strip()!r}; admissible kinds: {', '.join(METRIC_KINDS)}"
                problems.append((f"{sec}.{name}", line, reason))
                continue
            explicit[sec].add(name)
    if "task" not in values["scenario"] and not any(p[0] == "scenario.task" for p in problems):
        problems.append(("scenario.task", lines.get(("scenario", None)),
                         f"missing; expected one of: {', '.join(TASKS)}"))
    if problems:
        raise ParseError(problems)
    for sec, keys in SCHEMA.items():
        for k, (_, default) in keys.items():
            values[sec].setdefault(k, default)
    sc = Scenario(
        name=values["scenario"]["name"], task=values["scenario"]["task"], seed=values["scenario"]["seed"],
        metric=values["metric"], measure=values["measure"], grid=values["grid"], params=values["task"],
        out=values["scenario"]["out"], explicit={k: sorted(v) for k, v in explicit.items()},
    )
    validate(sc, lines)
    return sc


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def validate(sc, lines=None):
    """Check task preconditions; raises ValidationError with every problem found."""
    lines = lines or {}
    problems = []

    def bad(sec, key, reason):
        problems.append((f"{sec}.{key}", lines.get((sec, key.lower())), reason))

    tasks = [t for t in TASKS if t != "all"] if sc.task == "all" else [sc.task]
    m = sc.metric
    if m["kind"] == "randers" and (m["b"][0] ** 2 + m["b"][1] ** 2) ** 0.5 >= 1:
        bad("metric", "b", "Randers drift must satisfy |b| < 1")
    if m["kind"] == "conformal-gaussian" and m["a"] == 0:
        bad("metric", "a", "conformal-gaussian needs a != 0 (use kind = euclidean)")
    if sc.measure["kind"] == "gaussian" and sc.measure["a"] < 0:
        bad("measure", "a", "gaussian measure needs a >= 0")
    p = sc.params
    if p["R"] <= 0:
        bad("task", "R", "R must be positive")
    for k in ("h", "half_width"):
        v = sc.grid.get(k)
        if v is not None and v <= 0:
            bad("grid", k, f"{k} must be positive")
    x0 = p["x0"]
    if m["kind"] == "hyperbolic" and x0[0] ** 2 + x0[1] ** 2 >= 1:
        bad("task", "x0", "x0 must lie in the unit disk for the hyperbolic chart")
    for t in tasks:
        g, q = sc.for_task(t)
        if t == "harnack":
            d = q["delta"]
            if not 0 < q["eps"] < q["tau"] < d < 1:
                bad("task", "eps" if q["eps"] >= q["tau"] else "delta",
                    f"harnack needs 0<eps<tau<delta<1 (0<ε<τ<δ<1); got eps={q['eps']}, "
                    f"tau={q['tau']}, delta={d}")
        if t == "mean-value" and not 0 < q["delta"] < q["delta_prime"] <= 1:
            bad("task", "delta_prime", "mean-value needs 0 < delta < delta_prime <= 1")
        if t in ("sobolev", "gradient-estimate", "mean-value") and not q["nu"] > 2:
            bad("task", "nu", "nu must exceed 2")
        if t in ("poincare", "mean-value") and not q["p"] > 0:
            bad("task", "p", "p must be positive")
        if t == "poincare" and q["p"] < 1:
            bad("task", "p", "poincare needs p >= 1")
        if t == "volume-compare" and not 0 < q["r1"] < q["r2"]:
            bad("task", "r2", "volume-compare needs 0 < r1 < r2")
        if t in ("heat", "mean-value", "gradient-estimate", "harnack"):
            if q.get("dt") is not None and q["dt"] <= 0:
                bad("task", "dt", "dt must be positive")
            if t == "heat" and q["T"] <= 0:
                bad("task", "T", "T must be positive")
            if t != "heat" and q["data"] == "kernel" and (m["kind"] != "euclidean" or sc.measure["kind"] != "lebesgue"):
                bad("task", "data", "the explicit kernel is available for euclidean + lebesgue only")
    if problems:
        # one entry per key
        seen, uniq = set(), []
        for pr in problems:
            if pr[0] not in seen:
                seen.add(pr[0])
                uniq.append(pr)
        raise ValidationError(uniq)
    return sc
