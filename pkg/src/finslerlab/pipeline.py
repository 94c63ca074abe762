"""Scenario pipelines: build the models, run the checkers of a task, write artifacts."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import covering as cov
from . import inequalities as iq
from .config import TASKS
from .curvature import curvature_bounds
from .errors import FinslerError
from .geodesy import (_reach_grid, check_laplacian_comparison, check_volume_comparison, distance_field,
                      doubling_constant, eikonal_residual)
from .grid import Ball, Grid2D, ScalarField, SpaceTimeField
from .heatflow import ParabolicCylinder, Periodic, bochner_check, heat_solve, mass
from .measure import MeasureModel
from .metric import MetricModel, reversibility
from .report import InequalityReport, emit_report

BOCHNER_TOL = 1e-3
MASS_TOL = 1e-10
DATA_FLOOR = 1e-6
FIXED_POINT_ITERS = 20
FIXED_POINT_TOL = 1e-8


def build_metric(cfg):
    kind = cfg["kind"]
    if kind == "euclidean":
        m = MetricModel.euclidean()
    elif kind == "randers":
        m = MetricModel.randers(cfg["b"])
    elif kind == "conformal-gaussian":
        m = MetricModel.conformal_gaussian(cfg["a"])
    elif kind == "sphere":
        m = MetricModel.sphere()
    else:
        m = MetricModel.hyperbolic()
    return m.with_mode(cfg["derivative_mode"]) if cfg["derivative_mode"] != "analytic" else m


def build_measure(cfg, m):
    kind = cfg["kind"]
    if kind == "lebesgue":
        return MeasureModel.lebesgue()
    if kind == "gaussian":
        return MeasureModel.gaussian(cfg["a"])
    return MeasureModel.volume(m)


class _Ctx:
    """Models, task parameters and output location for one task."""

    def __init__(self, sc, task, out_dir):
        self.sc = sc
        self.task = task
        self.grid, self.p = sc.for_task(task)
        self.m = build_metric(sc.metric)
        self.mu = build_measure(sc.measure, self.m)
        self.x0 = tuple(self.p["x0"])
        self.R = float(self.p["R"])
        self.out = out_dir
        self.seed = sc.seed

    def path(self, name):
        os.makedirs(self.out, exist_ok=True)
        return os.path.join(self.out, name)

    @property
    def refine(self):
        return self.p["refine"] == "yes"


# ---------------------------------------------------------------------------
# static tasks


def task_curvature(c):
    bounds = curvature_bounds(c.m, c.mu, Ball(c.x0, c.R), samples=64, directions=32, seed=c.seed)
    reps = [InequalityReport(
        "curvature_bounds", bounds.k_lower, "Ric_inf >= -K F^2 and |S| <= delta F", bounds.K + bounds.delta**2,
        "consistent", details=bounds.as_dict())]
    # Bochner identity on a smooth test function near x0
    h, half = c.grid["h"], c.grid["half_width"]
    half = min(half, 0.5 * c.R)
    if c.m.kind == "hyperbolic":
        half = min(half, 0.9 * (1 - math.hypot(*c.x0)))
    g = Grid2D.centered(c.x0, half, h)
    a, b = c.x0

    def fu(X, Y):
        x, y = X - a, Y - b
        return x + 0.5 * y + 0.25 * (x * x - y * y) + 0.1 * x * y

    u = ScalarField.from_function(g, fu)
    res = bochner_check(c.m, c.mu, u, region=Ball(c.x0, 0.8 * half))
    reps.append(InequalityReport(
        "bochner", res["max_residual"], "Ric_inf(grad u) + |Hess u|_HS^2", res["max_residual"],
        "consistent" if res["max_residual"] <= BOCHNER_TOL else "inconclusive", rhs=res["rhs_mean"],
        details={**res, "tolerance": BOCHNER_TOL}))
    return reps


def _mean_residual(df, R):
    res = eikonal_residual(df)
    ok = np.isfinite(res) & (df.values <= R)
    return float(np.mean(res[ok]))


def task_distance(c):
    h, half = c.grid["h"], c.grid["half_width"]
    g = Grid2D.centered(c.x0, half, h)
    fwd = distance_field(c.m, c.x0, g, "forward")
    bwd = distance_field(c.m, c.x0, g, "backward")
    fwd.to_csv(c.path("distance_forward.csv"))
    lam = reversibility(c.m, Ball(c.x0, half), samples=32, n_angles=2048, seed=c.seed)
    ann = np.isfinite(fwd.values) & np.isfinite(bwd.values) & (fwd.values >= 0.5 * c.R) & (fwd.values <= c.R)
    ratio = float(np.max(np.maximum(fwd.values[ann] / bwd.values[ann], bwd.values[ann] / fwd.values[ann])))
    e1 = (c.x0[0] + c.R, c.x0[1])
    j, i = g.index_of(e1) if g.contains(e1) else (None, None)
    tol = c.p["tol"]
    reps = [InequalityReport(
        "distance_asymmetry", ratio, "d(x, y) <= Lambda d(y, x)", ratio,
        "violated" if ratio > lam * (1 + tol) else "consistent", rhs=lam,
        details={"Lambda": lam, "d_forward_e1": float(fwd.values[j, i]) if j is not None else None,
                 "d_backward_e1": float(bwd.values[j, i]) if j is not None else None, "h": h,
                 "sweeps": fwd.stats})]
    series = [(h, _mean_residual(fwd, c.R))]
    if c.refine:
        df2 = distance_field(c.m, c.x0, g.refine(), "forward")
        series.append((h / 2, _mean_residual(df2, c.R)))
        order = math.log2(series[0][1] / series[1][1])
        verdict = "consistent" if order >= 1 else "inconclusive"
    else:
        order, verdict = None, "inconclusive"
    reps.append(InequalityReport(
        "eikonal_residual", series[0][1], "|F*(dd) - 1| = O(h)", order, verdict, scale_series=series,
        details={"observed_order": order}))
    return reps


def task_volume_compare(c):
    h = c.grid["h"]
    r1, r2 = c.p["r1"] * c.R, c.p["r2"] * c.R
    tol = c.p["tol"]
    bounds = curvature_bounds(c.m, c.mu, Ball(c.x0, r2), samples=64, directions=32, seed=c.seed)
    if c.grid["half_width"] is not None:
        g = Grid2D.centered(c.x0, c.grid["half_width"], h)
    else:
        g = _reach_grid(c.m, c.x0, r2, h)
    df = distance_field(c.m, c.x0, g, "forward")
    reps = [check_laplacian_comparison(c.m, c.mu, c.x0, bounds, r1, r2, h=h, tol=tol, df=df)]
    reps += check_volume_comparison(c.m, c.mu, c.x0, bounds, r1, r2, h=h, tol=tol, df=df)
    reps.append(doubling_constant(c.m, c.mu, c.x0, r2, bounds, h=h, df=df, tol=tol))
    return reps


def _ball_df(c):
    h = c.grid["h"]
    if c.grid["half_width"] is not None:
        g = Grid2D.centered(c.x0, c.grid["half_width"], h)
    else:
        g = _reach_grid(c.m, c.x0, c.R, h)
    return distance_field(c.m, c.x0, g, "forward")


def task_poincare(c):
    df = _ball_df(c)
    ball = Ball(c.x0, c.R)
    prof = iq.WeightProfile.indicator() if c.p["profile"] == "indicator" else iq.WeightProfile.cutoff(0.5)
    funcs = iq.test_dictionary(seed=c.seed)
    reps = [iq.weighted_poincare_check(c.m, c.mu, ball, profile=prof, p=c.p["p"], test_set=funcs,
                                       h=df.grid.h, df=df)]
    if c.p["p"] == 2:
        pr = iq.poincare_eigen(c.m, c.mu, ball, h=df.grid.h, df=df)
        reps.append(InequalityReport(
            "poincare_eigen", pr.constant, "C R^2 int F*^2(du) dm", pr.constant / c.R**2, "consistent",
            details={"eigenvalue": pr.eigenvalue, "symmetrized": pr.symmetrized, "nodes": pr.nodes,
                     "h": pr.h}))
    return reps


def task_sobolev(c):
    df = _ball_df(c)
    return [iq.sobolev_check(c.m, c.mu, Ball(c.x0, c.R), nu=c.p["nu"], test_set=iq.test_dictionary(seed=c.seed),
                             h=df.grid.h, df=df)]


# ---------------------------------------------------------------------------
# space-time tasks


def _heat_kernel(x0):
    a, b = x0

    def k(X, Y, t):
        return np.exp(-((X - a) ** 2 + (Y - b) ** 2) / (4 * t)) / (4 * np.pi * t)

    return k


def _times(c):
    R = c.R
    t0 = c.p["t0"] if c.p["t0"] is not None else 0.2 * R**2
    s = c.p["s"] if c.p["s"] is not None else R**2
    if not 0 < t0 < s:
        raise ValueError("need 0 < t0 < s")
    n = max(1, int(math.ceil((s - t0) / c.p["dt"] - 1e-9)))
    return t0, s, n


def space_time_data(c, h=None):
    """Positive heat-flow data on (t0, s): the explicit kernel or a solver run
    started from the kernel profile at t0 (plus a constant floor) on a
    periodic grid."""
    h = c.grid["h"] if h is None else h
    t0, s, n = _times(c)
    kern = _heat_kernel(c.x0)
    g = Grid2D.centered(c.x0, c.grid["half_width"], h)
    if c.p["data"] == "kernel":
        return SpaceTimeField.from_function(g, np.linspace(t0, s, n + 1), kern, positive=True), False
    g = Grid2D(g.origin, h, g.nx - 1, g.ny - 1)
    # the flow commutes with adding constants; a small floor keeps the far
    # field positive where the scheme is not monotone
    floor = DATA_FLOOR * kern(c.x0[0], c.x0[1], t0)
    u0 = ScalarField.from_function(g, lambda X, Y: kern(X, Y, t0) + floor)
    sol = heat_solve(c.m, c.mu, u0, s - t0, (s - t0) / n, Periodic(), max_fixed_point=FIXED_POINT_ITERS,
                     fp_tol=FIXED_POINT_TOL)
    return SpaceTimeField(g, sol.times + t0, sol.values, positive=True, stats=sol.stats), True


def task_mean_value(c):
    u, per = space_time_data(c)
    _, s, _ = _times(c)
    cyl = ParabolicCylinder(c.x0, c.R, s)
    kw = dict(p=c.p["p"], delta=c.p["delta"], delta_prime=c.p["delta_prime"], nu=c.p["nu"], periodic=per)
    return [iq.mean_value_check(c.m, c.mu, u, cyl, side=side, **kw) for side in ("sub", "super")]


def task_gradient_estimate(c):
    u, per = space_time_data(c)
    _, s, _ = _times(c)
    return [iq.gradient_estimate_check(c.m, c.mu, u, ParabolicCylinder(c.x0, c.R, s), nu=c.p["nu"],
                                       periodic=per)]


def task_harnack(c):
    u, per = space_time_data(c)
    t0, s, _ = _times(c)
    cyl = ParabolicCylinder(c.x0, c.R, s)
    runs = []
    if c.refine:
        u2, _ = space_time_data(c, h=c.grid["h"] / 2)
        runs.append(("h/2", c.m, c.mu, u2, cyl))
    rep = iq.harnack_check(c.m, c.mu, u, cyl, eps=c.p["eps"], tau=c.p["tau"], delta=c.p["delta"], runs=runs,
                           tol=0.1, periodic=per)
    # level sets of log u on the largest cylinder the data cover
    rl = min(c.R, math.sqrt(s - t0))
    lls = iq.log_levelset_check(c.m, c.mu, u, ParabolicCylinder(c.x0, rl, s))
    return [rep, lls]


def task_heat(c):
    h, half = c.grid["h"], c.grid["half_width"]
    R = c.R
    g0 = Grid2D.centered(c.x0, half, h)
    g = Grid2D(g0.origin, h, g0.nx - 1, g0.ny - 1)
    a, b = c.x0
    T = c.p["T"] if "T" in c.sc.explicit.get("task", ()) else c.p["T"] * R**2
    dt = c.p["dt"]
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    dt = T / n
    every = max(1, n // 50)
    u0 = ScalarField.from_function(g, lambda X, Y: 1 + np.exp(-((X - a) ** 2 + (Y - b) ** 2) / (0.2 * R**2)))
    v0 = ScalarField(g, u0.values + 0.5 * np.exp(-((g.mesh()[0] - a - 0.5 * R) ** 2
                                                   + (g.mesh()[1] - b) ** 2) / (0.1 * R**2)))
    su = heat_solve(c.m, c.mu, u0, T, dt, Periodic(), save_every=every, max_fixed_point=FIXED_POINT_ITERS,
                     fp_tol=FIXED_POINT_TOL)
    sv = heat_solve(c.m, c.mu, v0, T, dt, Periodic(), save_every=every, max_fixed_point=FIXED_POINT_ITERS,
                     fp_tol=FIXED_POINT_TOL)
    masses = [mass(su.at(k), c.mu) for k in range(len(su.times))]
    drift = abs(masses[-1] - masses[0]) / (abs(masses[0]) * T)
    gap = float(np.min(sv.values - su.values))
    bad = gap < -1e-10 * float(np.max(sv.values))
    return [
        InequalityReport("heat_mass", drift, "|M(T) - M(0)| / (M(0) T)", drift,
                         "violated" if drift > MASS_TOL else "consistent", rhs=MASS_TOL,
                         scale_series=list(zip(su.times.tolist(), masses)),
                         details={"T": T, "dt": dt, "steps": n, "h": h,
                                  "max_fixed_point_change": su.stats["max_fixed_point_change"]}),
        InequalityReport("heat_comparison", gap, "u0 <= v0 implies u <= v", gap,
                         ("violated" if c.m.is_riemannian else "inconclusive") if bad else "consistent", rhs=0.0,
                         details={"T": T, "dt": dt, "riemannian": c.m.is_riemannian}),
    ]


def task_covering(c):
    g = Grid2D.centered(c.x0, c.grid["half_width"], c.grid["h"])
    df = distance_field(c.m, c.x0, g, "forward")
    cover = cov.build_whitney_cover(df, c.R)
    cover.to_json(c.path("cover.json"))
    ch = cov.verify_chain_properties(cover)
    ov = cov.verify_overlap_bound(cover)
    ch.details.update({"balls": len(cover), "central_radius": float(cover.radii[cover.central_index]),
                       "uncovered_fraction": cover.uncovered_fraction, "windowed": cover.windowed})
    return [ch, ov]


RUNNERS = {
    "curvature": task_curvature,
    "distance": task_distance,
    "volume-compare": task_volume_compare,
    "heat": task_heat,
    "poincare": task_poincare,
    "sobolev": task_sobolev,
    "mean-value": task_mean_value,
    "gradient-estimate": task_gradient_estimate,
    "harnack": task_harnack,
    "covering": task_covering,
}


def _run_one(sc, task, out_dir):
    try:
        return RUNNERS[task](_Ctx(sc, task, out_dir)), []
    except (FinslerError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        return [], [{"check": task, "error": type(e).__name__, "message": str(e)}]


def run_scenario(sc, out_dir, threads=1):
    """Run every task of ``sc`` and write report.json, summary.csv and plot data.

    Returns (exit_status, document): 0 iff no report is violated and no
    task raised; 1 when a report is violated; 2 when a task raised.
    """
    tasks = [t for t in TASKS if t != "all"] if sc.task == "all" else [sc.task]
    np.random.seed(sc.seed)
    if threads > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(lambda t: _run_one(sc, t, out_dir), tasks))
    else:
        results = [_run_one(sc, t, out_dir) for t in tasks]
    reports = [r for rs, _ in results for r in rs]
    errors = [e for _, es in results for e in es]
    doc, _ = emit_report(out_dir, sc.name, reports, sc.seed, sc.task, config=sc.to_dict(), errors=errors,
                         nu=sc.params["nu"])
    if errors:
        status = 2
    elif any(r.verdict == "violated" for r in reports):
        status = 1
    else:
        status = 0
    return status, doc
