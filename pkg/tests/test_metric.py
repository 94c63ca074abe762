import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import B03, all_models
from finslerlab.errors import DegenerateDirection, NoConvergence, NotPositiveDefinite, OutOfChart
from finslerlab.grid import Ball
from finslerlab.metric import (MetricModel, angle_grid, cartan_tensor, dual_metric, eval_metric,
                               fundamental_tensor, gradient_vector, legendre, legendre_inverse, reversibility,
                               uniform_constants)

MODELS = all_models()
IDS = [n for n, _, _ in MODELS]


def angle_dual(m, x, xi, n=10_000):
    """sup_y xi(y)/F(x, y) over an angle grid."""
    Y = angle_grid(n)
    X = np.broadcast_to(np.asarray(x, float), Y.shape)
    return float(np.max(Y @ np.asarray(xi, float) / m.F(X, Y)))


def fd_hessian_half_F2(m, x, y, s=1e-4):
    f = lambda v: 0.5 * float(m.F(np.asarray(x, float), np.asarray(v, float))) ** 2
    y = np.asarray(y, float)
    H = np.zeros((2, 2))
    E = np.eye(2) * s
    for i in range(2):
        for j in range(2):
            H[i, j] = (f(y + E[i] + E[j]) - f(y + E[i] - E[j]) - f(y - E[i] + E[j]) + f(y - E[i] - E[j])) / (4 * s * s)
    return H


def fd_third_quarter_F2(m, x, y, s=1e-3):
    """D^3_y (F^2/4) by central differences of the analytic Hessian-free F."""
    f = lambda v: 0.25 * float(m.F(np.asarray(x, float), np.asarray(v, float))) ** 2
    y = np.asarray(y, float)
    E = np.eye(2) * s
    C = np.zeros((2, 2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                acc = 0.0
                for si in (1, -1):
                    for sj in (1, -1):
                        for sk in (1, -1):
                            acc += si * sj * sk * f(y + si * E[i] + sj * E[j] + sk * E[k])
                C[i, j, k] = acc / (8 * s**3)
    return C


def sample_points(region, n, seed):
    return region.sample(n, seed)


# ---------------------------------------------------------------------------
# evaluation


def test_eval_euclidean_norm(euclid):
    assert eval_metric(euclid, (0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0, abs=1e-14)


def test_eval_randers_forward_direction(randers):
    for x in [(0.0, 0.0), (5.0, -2.0)]:
        assert eval_metric(randers, x, (1.0, 0.0)) == pytest.approx(1.3, abs=1e-14)


def test_eval_sphere_conformal_factor():
    assert eval_metric(MetricModel.sphere(), (0.0, 0.0), (1.0, 0.0)) == pytest.approx(2.0, abs=1e-14)


def test_eval_zero_vector_is_zero(randers):
    assert eval_metric(randers, (0.3, 0.1), (0.0, 0.0)) == 0.0


def test_hyperbolic_chart_rejects_outside_points():
    with pytest.raises(OutOfChart):
        eval_metric(MetricModel.hyperbolic(), (1.2, 0.0), (1.0, 0.0))


def test_randers_drift_must_be_short():
    with pytest.raises(NotPositiveDefinite):
        MetricModel.randers((1.0, 0.0))


def test_unknown_kind_lists_admissible():
    with pytest.raises(ValueError, match="euclidean"):
        MetricModel("elliptic")


# ---------------------------------------------------------------------------
# fundamental and Cartan tensors


def test_fundamental_tensor_euclidean_identity(euclid):
    np.testing.assert_allclose(fundamental_tensor(euclid, (0.4, 0.2), (1.0, 0.0)), np.eye(2), atol=1e-15)


def test_fundamental_tensor_randers_matches_fd_hessian(randers):
    g = fundamental_tensor(randers, (0.0, 0.0), (1.0, 0.0))
    np.testing.assert_allclose(g, fd_hessian_half_F2(randers, (0.0, 0.0), (1.0, 0.0)), atol=1e-6)
    gfd = fundamental_tensor(randers.with_mode("fd"), (0.0, 0.0), (1.0, 0.0))
    np.testing.assert_allclose(g, gfd, atol=1e-5)


def test_fundamental_tensor_rejects_zero_direction(randers):
    with pytest.raises(DegenerateDirection):
        fundamental_tensor(randers, (0.0, 0.0), (0.0, 0.0))


@pytest.mark.parametrize("name,m,region", MODELS, ids=IDS)
def test_euler_identity_g_y_y_equals_F2(name, m, region):
    rng = np.random.default_rng(1)
    X = sample_points(region, 50, 3)
    Y = rng.normal(size=(50, 2))
    F2 = m.F(X, Y) ** 2
    for mode, tol in (("analytic", 1e-8), ("fd", 1e-5)):
        g = fundamental_tensor(m.with_mode(mode), X, Y)
        gyy = np.einsum("...i,...ij,...j->...", Y, g, Y)
        np.testing.assert_allclose(gyy, F2, rtol=tol)


def test_cartan_euclidean_vanishes(euclid):
    np.testing.assert_allclose(cartan_tensor(euclid, (0.1, 0.2), (0.3, 1.0)), np.zeros((2, 2, 2)), atol=1e-14)


def test_cartan_randers_matches_third_difference(randers):
    C = cartan_tensor(randers, (0.0, 0.0), (0.0, 1.0))
    ref = fd_third_quarter_F2(randers, (0.0, 0.0), (0.0, 1.0))
    assert np.max(np.abs(C)) > 0.05
    np.testing.assert_allclose(C, ref, atol=2e-5)


@pytest.mark.parametrize("name,m,region", MODELS, ids=IDS)
def test_cartan_symmetric_and_annihilates_y(name, m, region):
    rng = np.random.default_rng(2)
    X = sample_points(region, 20, 5)
    Y = rng.normal(size=(20, 2))
    C = cartan_tensor(m, X, Y)
    for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
        np.testing.assert_allclose(C, np.transpose(C, (0,) + tuple(p + 1 for p in perm)), atol=1e-12)
    np.testing.assert_allclose(np.einsum("...ijk,...i->...jk", C, Y), 0.0, atol=1e-6)


# ---------------------------------------------------------------------------
# Legendre transform and co-metric


def test_legendre_examples(euclid, randers):
    np.testing.assert_allclose(legendre(euclid, (0.0, 0.0), (1.0, 0.0)), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(legendre(randers, (0.0, 0.0), (1.0, 0.0)), [1.69, 0.0], atol=1e-14)
    np.testing.assert_array_equal(legendre(randers, (0.0, 0.0), (0.0, 0.0)), [0.0, 0.0])


def test_legendre_inverse_examples(euclid, randers):
    np.testing.assert_allclose(legendre_inverse(randers, (0.0, 0.0), (1.69, 0.0)), [1.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(legendre_inverse(euclid, (0.0, 0.0), (0.0, 2.0)), [0.0, 2.0], atol=1e-12)
    np.testing.assert_array_equal(legendre_inverse(randers, (0.0, 0.0), (0.0, 0.0)), [0.0, 0.0])


def test_legendre_inverse_reports_failure(randers):
    with pytest.raises(NoConvergence):
        legendre_inverse(randers, (0.0, 0.0), (1.0, 0.3), max_iter=1)


@pytest.mark.parametrize("name,m,region", MODELS, ids=IDS)
def test_legendre_round_trip_random(name, m, region):
    rng = np.random.default_rng(7)
    X = sample_points(region, 100, 11)
    Y = rng.normal(size=(100, 2))
    back = legendre_inverse(m, X, legendre(m, X, Y))
    np.testing.assert_allclose(back, Y, atol=1e-8 * np.max(np.abs(Y)))


def test_dual_metric_examples(euclid, randers):
    assert dual_metric(euclid, (0.0, 0.0), (0.0, 1.0)) == pytest.approx(1.0)
    # angle-grid oracle, then the closed fractions
    for xi, frac in (((1.0, 0.0), 10 / 13), ((-1.0, 0.0), 10 / 7)):
        oracle = angle_dual(randers, (0.0, 0.0), xi)
        assert oracle == pytest.approx(frac, abs=1e-6)
        assert dual_metric(randers, (0.0, 0.0), xi) == pytest.approx(oracle, abs=1e-6)


@pytest.mark.parametrize("name,m,region", MODELS, ids=IDS)
def test_dual_metric_is_support_function(name, m, region):
    rng = np.random.default_rng(3)
    for x in sample_points(region, 4, 9):
        for xi in rng.normal(size=(3, 2)):
            assert dual_metric(m, x, xi) == pytest.approx(angle_dual(m, x, xi, 20_000), rel=1e-6)


def test_dual_metric_fd_mode_agrees(randers):
    xi = np.array([[0.3, -1.2], [1.0, 0.0], [-0.5, 0.5]])
    X = np.zeros_like(xi)
    np.testing.assert_allclose(dual_metric(randers.with_mode("fd"), X, xi), dual_metric(randers, X, xi), rtol=1e-7)


def test_gradient_vector_inverts_legendre(randers):
    xi = np.array([[1.0, 0.0], [0.2, -0.7], [0.0, 0.0]])
    X = np.zeros_like(xi)
    np.testing.assert_allclose(gradient_vector(randers, X, xi), legendre_inverse(randers, X, xi), atol=1e-9)


# ---------------------------------------------------------------------------
# reversibility and uniform constants


def test_reversibility_values(euclid, randers):
    assert reversibility(euclid, Ball((0.0, 0.0), 1.0)) == 1.0
    assert reversibility(MetricModel.sphere(), Ball((0.0, 0.0), 1.0)) == 1.0
    oracle = max((1 + 0.3 * c) / (1 - 0.3 * c) for c in np.cos(2 * np.pi * np.arange(10_000) / 10_000))
    assert oracle == pytest.approx(13 / 7, abs=1e-9)
    assert reversibility(randers, Ball((0.0, 0.0), 1.0), samples=4) == pytest.approx(oracle, abs=1e-6)


def test_reversibility_needs_samples(randers):
    with pytest.raises(ValueError):
        reversibility(randers, Ball((0.0, 0.0), 1.0), samples=0)


def test_uniform_constants_euclidean(euclid):
    uc = uniform_constants(euclid, Ball((0.0, 0.0), 1.0))
    assert (uc.lam, uc.kappa, uc.kappa_star) == (1.0, 1.0, 1.0)


def test_uniform_constants_randers_against_eigen_sweep(randers):
    uc = uniform_constants(randers, Ball((0.0, 0.0), 1.0), samples=2)
    V = angle_grid(1440)
    g = fundamental_tensor(randers, np.zeros_like(V), V)
    W = angle_grid(1440)
    F2 = randers.F(np.zeros_like(W), W) ** 2
    q = np.einsum("vij,wi,wj->vw", g, W, W) / F2[None, :]
    assert uc.kappa == pytest.approx(q.max(), rel=1e-5)
    assert uc.kappa_star == pytest.approx(q.min(), rel=1e-5)
    assert uc.kappa_star <= 1 <= uc.kappa
    assert uc.lam <= min(np.sqrt(uc.kappa), np.sqrt(1 / uc.kappa_star)) + 1e-9
    fd = uniform_constants(randers.with_mode("fd"), Ball((0.0, 0.0), 1.0), samples=2)
    assert fd.kappa == pytest.approx(uc.kappa, abs=1e-4)


# ---------------------------------------------------------------------------
# properties

coord = st.floats(-0.5, 0.5)
vec = st.tuples(st.floats(-3, 3), st.floats(-3, 3)).filter(lambda v: np.hypot(*v) > 1e-3)
scale = st.floats(0.01, 100)
model = st.sampled_from(MODELS)


@settings(max_examples=60, deadline=None)
@given(model, st.tuples(coord, coord), vec, scale)
def test_property_positive_homogeneity(mdl, x, y, t):
    _, m, _ = mdl
    y = np.array(y)
    assert m.F(x, t * y) == pytest.approx(t * m.F(x, y), rel=1e-12)
    np.testing.assert_allclose(fundamental_tensor(m, x, t * y), fundamental_tensor(m, x, y), rtol=1e-9, atol=1e-12)
    assert dual_metric(m, x, t * y) == pytest.approx(t * dual_metric(m, x, y), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(model, st.tuples(coord, coord), vec, vec)
def test_property_young_inequality(mdl, x, y, xi):
    _, m, _ = mdl
    assert np.dot(xi, y) <= dual_metric(m, x, xi) * m.F(x, y) * (1 + 1e-12) + 1e-14


@settings(max_examples=60, deadline=None)
@given(model, st.tuples(coord, coord), vec)
def test_property_legendre_preserves_norm(mdl, x, y):
    _, m, _ = mdl
    xi = legendre(m, x, y)
    assert dual_metric(m, x, xi) == pytest.approx(m.F(x, y), rel=1e-10)
    assert float(np.dot(xi, y)) == pytest.approx(float(m.F(x, y)) ** 2, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.tuples(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9)).filter(lambda b: np.hypot(*b) < 0.95), vec)
def test_property_randers_reverse_swaps_direction(b, y):
    m = MetricModel.randers(b)
    assert m.reverse().F((0.0, 0.0), y) == pytest.approx(m.F((0.0, 0.0), -np.asarray(y)), rel=1e-12)
