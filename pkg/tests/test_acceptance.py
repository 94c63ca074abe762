"""Acceptance suite: one group of tests per numbered criterion.

Run ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion.
"""
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.special import jnp_zeros

from finslerlab.config import parse_config
from finslerlab.covering import build_whitney_cover, verify_chain_properties
from finslerlab.curvature import (
    CurvatureBounds,
    ricci,
    s_curvature,
    s_curvature_rate,
    spray_coefficients,
    weighted_ricci_inf,
)
from finslerlab.geodesy import distance_field
from finslerlab.grid import Ball, Grid2D, ScalarField, SpaceTimeField
from finslerlab.heatflow import Dirichlet, ParabolicCylinder, bochner_check, heat_solve, mass
from finslerlab.inequalities import (
    harnack_check,
    harnack_ratio,
    log_levelset_check,
    mean_value_check,
    poincare_eigen,
    weighted_poincare_check,
)
from finslerlab.measure import MeasureModel
from finslerlab.metric import (
    MetricModel,
    angle_grid,
    dual_metric,
    fundamental_tensor,
    legendre,
    legendre_inverse,
    reversibility,
)
from finslerlab.pipeline import _Ctx, _mean_residual, space_time_data, task_volume_compare

from conftest import B03, all_models, kernel

ROOT = Path(__file__).resolve().parents[1]
EUC = MetricModel.euclidean()
LEB = MeasureModel.lebesgue()
GAU = MeasureModel.gaussian(1.0)


def crit(n, title):
    return pytest.mark.criterion(n, title)


def zero_bounds(R=1.0):
    return CurvatureBounds(0.0, 0.0, Ball((0.0, 0.0), R), 1, 1)


def disk_samples(region, n, rng):
    r = region.radius * 0.95 * np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0, 2 * np.pi, size=n)
    return np.asarray(region.center) + np.stack([r * np.cos(a), r * np.sin(a)], -1)


# ---------------------------------------------------------------------------
# 1. metric algebra


@crit(1, "metric algebra")
@pytest.mark.parametrize("name,m,region", all_models(), ids=[n for n, _, _ in all_models()])
def test_criterion_01_legendre_round_trip_and_duality(name, m, region):
    rng = np.random.default_rng(2024)
    X = disk_samples(region, 1000, rng)
    Y = rng.normal(size=(1000, 2))
    xi = legendre(m, X, Y)
    back = legendre_inverse(m, X, xi)
    ny = np.linalg.norm(Y, axis=-1)
    assert np.max(np.linalg.norm(back - Y, axis=-1) / ny) <= 1e-7
    F = m.F(X, Y)
    np.testing.assert_allclose(dual_metric(m, X, xi), F, rtol=1e-7)


@crit(1, "metric algebra")
def test_criterion_01_randers_constants():
    m = MetricModel.randers(B03)
    assert reversibility(m, Ball((0.0, 0.0), 1.0), samples=4) == pytest.approx(13 / 7, abs=1e-6)
    Y = angle_grid(20_000)
    for xi, frac in (((1.0, 0.0), 10 / 13), ((-1.0, 0.0), 10 / 7)):
        oracle = float(np.max(Y @ np.array(xi) / m.F(np.zeros_like(Y), Y)))
        assert oracle == pytest.approx(frac, abs=1e-6)
        assert dual_metric(m, (0.0, 0.0), xi) == pytest.approx(oracle, abs=1e-6)


# ---------------------------------------------------------------------------
# 2. curvature


@crit(2, "curvature")
def test_criterion_02_constant_curvature_patches():
    rng = np.random.default_rng(5)
    for m, sign, region in ((MetricModel.sphere(), 1.0, Ball((0, 0), 1.0)),
                            (MetricModel.hyperbolic(), -1.0, Ball((0, 0), 0.6))):
        for x, y in zip(disk_samples(region, 6, rng), rng.normal(size=(6, 2))):
            assert ricci(m, x, y) == pytest.approx(sign * m.F(x, y) ** 2, rel=0.01)


@crit(2, "curvature")
def test_criterion_02_gaussian_weighted_quantities():
    rng = np.random.default_rng(6)
    for x, y in zip(rng.uniform(-1, 1, size=(6, 2)), rng.normal(size=(6, 2))):
        assert s_curvature(EUC, GAU, x, y) == pytest.approx(2 * x.dot(y), rel=1e-3, abs=1e-9)
        assert weighted_ricci_inf(EUC, GAU, x, y) == pytest.approx(2 * y.dot(y), rel=1e-3)


@crit(2, "curvature")
@pytest.mark.parametrize("s", [0.5, 3.0])
def test_criterion_02_homogeneity(s):
    m, mu = MetricModel.randers(lambda x: 0.2 * np.stack([np.cos(x[..., 1]), np.sin(x[..., 0])], -1)), GAU
    x, y = np.array([0.3, 0.2]), np.array([0.4, -0.9])
    checks = [
        (m.F(x, s * y), s * m.F(x, y)),
        (fundamental_tensor(m, x, s * y), fundamental_tensor(m, x, y)),
        (spray_coefficients(m, x, s * y), s**2 * spray_coefficients(m, x, y)),
        (ricci(m, x, s * y), s**2 * ricci(m, x, y)),
        (s_curvature(m, mu, x, s * y), s * s_curvature(m, mu, x, y)),
        (s_curvature_rate(m, mu, x, s * y), s**2 * s_curvature_rate(m, mu, x, y)),
        (weighted_ricci_inf(m, mu, x, s * y), s**2 * weighted_ricci_inf(m, mu, x, y)),
    ]
    for a, b in checks:
        np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# 3. distance


@crit(3, "distance")
def test_criterion_03_minkowski_asymmetry():
    df = distance_field(MetricModel.randers(B03), (0, 0), Grid2D.centered((0, 0), 1.5, 0.01))
    assert df.at(np.array([1.0, 0.0])) == pytest.approx(1.3, rel=0.02)
    assert df.at(np.array([-1.0, 0.0])) == pytest.approx(0.7, rel=0.02)


@crit(3, "distance")
@pytest.mark.parametrize("name", ["randers", "conformal-gaussian", "sphere"])
def test_criterion_03_eikonal_order(name):
    m = {n: mm for n, mm, _ in all_models()}[name]
    res = [_mean_residual(distance_field(m, (0, 0), Grid2D.centered((0, 0), 1.5, h)), 1.0) for h in (0.02, 0.01)]
    assert math.log2(res[0] / res[1]) >= 1


# ---------------------------------------------------------------------------
# 4. comparison theorems

COMPARISON_CONFIGS = {
    "euclid-lebesgue": "",
    "euclid-gaussian": "[measure]\nkind = gaussian\na = 1.0\n",
    "randers": "[metric]\nkind = randers\nb = 0.3, 0.0\n",
    "sphere": "[metric]\nkind = sphere\n[measure]\nkind = volume\n",
    "hyperbolic": "[metric]\nkind = hyperbolic\n[measure]\nkind = volume\n",
}


def volume_reports(extra, tmp_path):
    sc = parse_config("[scenario]\ntask = volume-compare\n" + extra)
    return {r.name: r for r in task_volume_compare(_Ctx(sc, "volume-compare", str(tmp_path)))}


@crit(4, "comparison theorems")
@pytest.mark.parametrize("config", list(COMPARISON_CONFIGS))
def test_criterion_04_comparison_margins(config, tmp_path):
    reps = volume_reports(COMPARISON_CONFIGS[config], tmp_path)
    for name in ("laplacian_comparison", "volcoe", "volcom"):
        assert reps[name].verdict == "consistent", (name, reps[name].details)
    for name in ("volcoe", "volcom"):
        assert reps[name].lhs <= reps[name].rhs * 1.05


@crit(4, "comparison theorems")
def test_criterion_04_euclid_ball_ratio(tmp_path):
    d = volume_reports("", tmp_path)["doubling"]
    assert d.lhs == pytest.approx(4.0, rel=0.03)
    assert d.rhs == 8.0 and d.verdict == "consistent"


# ---------------------------------------------------------------------------
# 5. heat solver


@crit(5, "heat solver")
def test_criterion_05_separable_dirichlet():
    n = 128
    g = Grid2D((0.0, 0.0), np.pi / n, n + 1, n + 1)
    u0 = ScalarField.from_function(g, lambda x, y: np.sin(x) * np.sin(y))
    u0.values[g.boundary_mask()] = 0.0
    u = heat_solve(EUC, LEB, u0, 0.25, 1e-4, Dirichlet(0.0), check_positive=False, save_every=2500)
    exact = np.exp(-0.5) * u0.values
    assert np.max(np.abs(u.values[-1] - exact)) <= 0.01 * np.max(np.abs(exact))


@crit(5, "heat solver")
@pytest.mark.parametrize("name", ["euclidean", "randers", "sphere"])
def test_criterion_05_periodic_mass(name):
    m = {n: mm for n, mm, _ in all_models()}[name]
    g = Grid2D((0.0, 0.0), 2 * np.pi / 32, 32, 32)
    u0 = ScalarField.from_function(g, lambda x, y: 1 + 0.5 * np.sin(x) * np.cos(2 * y) + 0.2 * np.cos(x + y))
    T = 0.1
    u = heat_solve(m, GAU if name == "sphere" else LEB, u0, T, 0.01, max_fixed_point=20, fp_tol=1e-12)
    mu = GAU if name == "sphere" else LEB
    assert abs(mass(u.at(-1), mu) - mass(u0, mu)) / mass(u0, mu) / T <= 1e-10


def seeded_pair(seed, X, Y):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, 3))
    base = 2 + sum(0.2 * c[i, j] * np.cos(i * X + j * Y) for i in range(3) for j in range(3))
    bump = rng.uniform(0.1, 1) * np.exp(-((X - rng.uniform(0, 2 * np.pi)) ** 2
                                          + (Y - rng.uniform(0, 2 * np.pi)) ** 2) / 0.3)
    return base, base + bump


@crit(5, "heat solver")
@pytest.mark.parametrize("name", ["euclid-gaussian", "sphere", "conformal-gaussian"])
def test_criterion_05_comparison_principle(name):
    m, mu = {"euclid-gaussian": (EUC, MeasureModel.gaussian(0.1)),
             "sphere": (MetricModel.sphere(), LEB),
             "conformal-gaussian": (MetricModel.conformal_gaussian(0.5), MeasureModel.gaussian(0.1))}[name]
    g = Grid2D((0.0, 0.0), 2 * np.pi / 32, 32, 32)
    X, Y = g.mesh()
    violations = 0
    for seed in range(20):
        a, b = seeded_pair(seed, X, Y)
        u = heat_solve(m, mu, ScalarField(g, a), 0.05, 0.005)
        v = heat_solve(m, mu, ScalarField(g, b), 0.05, 0.005)
        violations += int(np.count_nonzero(u.values > v.values + 1e-10))
    assert violations == 0


# ---------------------------------------------------------------------------
# 6. Bochner identity


@crit(6, "Bochner identity")
def test_criterion_06_closed_forms():
    g = Grid2D.centered((0, 0), 1.0, 0.02)
    quad = ScalarField.from_function(g, lambda x, y: 0.5 * (x**2 + y**2))
    assert bochner_check(EUC, LEB, quad)["max_residual"] <= 1e-3
    lin = ScalarField.from_function(g, lambda x, y: x + 0 * y)
    assert bochner_check(EUC, GAU, lin, Ball((0, 0), 0.8))["max_residual"] <= 1e-3


@crit(6, "Bochner identity")
def test_criterion_06_refinement_order():
    m, mu = MetricModel.randers(B03), MeasureModel.gaussian(0.5)
    res = []
    for h in (0.04, 0.02):
        g = Grid2D.centered((0, 0), 0.5, h)
        u = ScalarField.from_function(g, lambda x, y: x + 0.5 * y + 0.25 * (x**2 - y**2) + 0.1 * x * y)
        res.append(bochner_check(m, mu, u, Ball((0, 0), 0.3))["max_residual"])
    assert math.log2(res[0] / res[1]) >= 1


# ---------------------------------------------------------------------------
# 7. Poincare


@crit(7, "Poincare")
def test_criterion_07_unit_disk():
    pr = poincare_eigen(EUC, LEB, Ball((0.0, 0.0), 1.0))
    assert jnp_zeros(1, 1)[0] == pytest.approx(1.8412, abs=1e-4)
    assert pr.constant == pytest.approx(1 / jnp_zeros(1, 1)[0] ** 2, rel=0.05)
    rep = weighted_poincare_check(EUC, LEB, Ball((0, 0), 1.0), h=0.01, bounds=zero_bounds())
    assert rep.empirical_constant == pytest.approx(pr.constant, rel=0.10)


# ---------------------------------------------------------------------------
# 8. Whitney covering


@crit(8, "Whitney covering")
@pytest.mark.parametrize("name,half,h", [("euclidean", 0.01, 2e-4), ("randers", 0.001, 1e-5)])
def test_criterion_08_cover(name, half, h):
    m = EUC if name == "euclidean" else MetricModel.randers(B03)
    cover = build_whitney_cover(distance_field(m, (0.0, 0.0), Grid2D.centered((0.0, 0.0), half, h)), 1.0)
    seen = np.concatenate([cover.ball_nodes(k) for k in range(len(cover))])
    assert len(seen) == len(np.unique(seen))
    rep = verify_chain_properties(cover)
    d, lam = rep.details, cover.lam
    assert d["adjacency_failures"] == 0
    assert d["chains_start_central"] and d["chains_end_own_ball"]
    assert d["radius_ratio_max"] <= lam + 2
    assert d["consecutive_ratio_max"] <= 1 + (10 * lam) ** -2
    if name == "euclidean":
        assert abs(cover.radii[cover.central_index] - 1 / 1001) <= h


# ---------------------------------------------------------------------------
# 9. Harnack


def harnack_data(R, h):
    sc = parse_config(f"[scenario]\ntask = harnack\n[grid]\nh = {h}\n[task]\nR = {R}\n")
    return space_time_data(_Ctx(sc, "harnack", "unused"))[0]


@pytest.fixture(scope="module")
def harnack_runs():
    return {(R, h): harnack_data(R, h) for R, h in ((1.0, 0.1), (1.0, 0.05), (0.5, 0.05))}


@crit(9, "Harnack")
def test_criterion_09_solver_matches_quadrature(harnack_runs):
    sup, inf = harnack_ratio(EUC, LEB, harnack_runs[(1.0, 0.1)], ParabolicCylinder((0, 0), 1.0, 1.0), 0.2, 0.4, 0.6)
    t = np.linspace(0.8, 1.0, 20001)
    oracle = (1 / (4 * np.pi * 0.4)) / np.min(kernel(0.6, 0.0, t))
    assert sup / inf == pytest.approx(oracle, rel=0.03)


@crit(9, "Harnack")
def test_criterion_09_constant_stable(harnack_runs):
    C = {k: harnack_check(EUC, LEB, u, ParabolicCylinder((0, 0), k[0], k[0] ** 2), periodic=True).empirical_constant
         for k, u in harnack_runs.items()}
    base = C[(1.0, 0.1)]
    assert C[(0.5, 0.05)] == pytest.approx(base, rel=0.10)
    assert C[(1.0, 0.05)] == pytest.approx(base, rel=0.10)


@crit(9, "Harnack")
def test_criterion_09_log_levelset_bounded(harnack_runs):
    rep = log_levelset_check(EUC, LEB, harnack_runs[(1.0, 0.1)], ParabolicCylinder((0, 0), math.sqrt(0.8), 1.0))
    lam = np.array([a for a, _ in rep.scale_series])
    prod = np.array([b for _, b in rep.scale_series])
    assert lam.min() == pytest.approx(0.5) and lam.max() == pytest.approx(8.0)
    assert np.all(np.isfinite(prod)) and prod.max() <= 1.0


# ---------------------------------------------------------------------------
# 10. mean value


@crit(10, "mean value")
def test_criterion_10_constant_solution():
    g = Grid2D.centered((0, 0), 1.5, 0.02)
    times = np.linspace(0.0, 1.0, 11)
    u = SpaceTimeField(g, times, np.ones((len(times),) + g.shape), positive=True)
    d, dp, nu = 0.5, 0.75, 4.0
    rep = mean_value_check(EUC, LEB, u, ParabolicCylinder((0, 0), 1.0, 1.0), delta=d, delta_prime=dp,
                           bounds=zero_bounds(), lam=1.0, nu=nu)
    mB = rep.details["m_BR"]
    mBp = rep.details["integral"] / dp
    assert rep.lhs == 1.0 and rep.verdict == "consistent"
    assert rep.empirical_constant == pytest.approx((dp - d) ** (2 + nu) / (dp * mBp / mB) / rep.details["Xi"],
                                                   rel=1e-9)


@crit(10, "mean value")
@pytest.mark.parametrize("side", ["sub", "super"])
def test_criterion_10_kernel_refinement(side):
    E = []
    for h in (0.02, 0.01):
        g = Grid2D.centered((0, 0), 1.5, h)
        u = SpaceTimeField.from_function(g, 0.2 + 0.01 * np.arange(81), kernel, positive=True)
        rep = mean_value_check(EUC, LEB, u, ParabolicCylinder((0, 0), 1.0, 1.0), p=1.0, delta=0.5,
                               delta_prime=0.75, side=side, bounds=zero_bounds(), lam=1.0,
                               check_residual=(h == 0.02))
        E.append(rep.empirical_constant)
    assert np.all(np.isfinite(E))
    assert E[1] == pytest.approx(E[0], rel=0.10)


# ---------------------------------------------------------------------------
# 11. determinism


@crit(11, "determinism")
@pytest.mark.parametrize("scenario", ["euclid-volume", "euclid-covering"])
def test_criterion_11_byte_identical_summary(scenario, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        subprocess.run([sys.executable, "-m", "finslerlab.cli", "run", str(ROOT / "scenarios" / f"{scenario}.ini"),
                        "--out", str(out), "--seed", "11"], check=True, capture_output=True)
        outs.append((out / "summary.csv").read_bytes())
    assert outs[0] == outs[1]
