"""Verification harness for Poincare, Sobolev, mean-value, gradient,
level-set and Harnack inequalities.

Constants in these inequalities are never explicit, so every checker
reports the smallest constant that makes the inequality hold on the data
(the empirical constant) together with its behaviour under rescaling.

Static functionals are discretized with P1 elements on the grid cells of
the forward ball (each cell split into two triangles, kept when the
centroid distance is below R) and edge-midpoint quadrature, which is
exact for the quadratic forms of the p = 2 case.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.interpolate import BSpline
from scipy.optimize import minimize
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .curvature import curvature_bounds
from .errors import DegenerateRegion, EigenFailure, HypothesisFail, SideMismatch
from .geodesy import _reach_grid, distance_field, forward_ball
from .grid import Ball, ScalarField
from .heatflow import ParabolicCylinder, differential, parabolic_residual
from .metric import dual_metric, reversibility
from .report import InequalityReport

NU_DEFAULT = 4.0


# ---------------------------------------------------------------------------
# weight profiles


@dataclass(frozen=True)
class WeightProfile:
    """Nonincreasing xi: [0, inf) -> [0, 1] vanishing exactly from t = 1 on,
    with xi(t + min(1 - t, 1/2)/2) >= alpha xi(t) on (0, 1)."""

    xi: object
    alpha: float
    name: str = "custom"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        ok, why = self.admissible()
        if not ok:
            raise ValueError(f"weight profile {self.name!r} is not admissible: {why}")

    def __call__(self, t):
        return np.asarray(self.xi(np.asarray(t, dtype=float)), dtype=float)

    def admissible(self, n=2001):
        t = np.linspace(0.0, 1.0, n)[1:-1]
        v = self(t)
        if np.any(v < -1e-15) or np.any(v > 1 + 1e-15):
            return False, "values outside [0, 1]"
        if np.any(np.diff(self(np.linspace(0.0, 2.0, 2 * n))) > 1e-12):
            return False, "not nonincreasing"
        if np.any(v <= 0) or np.any(self(np.linspace(1.0 + 1e-9, 2.0, 64)) != 0):
            return False, "zero set must start at t = 1"
        step = self(t + 0.5 * np.minimum(1 - t, 0.5))
        if np.any(step < self.alpha * v * (1 - 1e-12)):
            return False, f"step condition fails for alpha = {self.alpha}"
        return True, ""

    @classmethod
    def indicator(cls):
        return cls(lambda t: (np.asarray(t) <= 1.0).astype(float), 1.0, "indicator")

    @classmethod
    def cutoff(cls, delta, power=1):
        """zeta^power with zeta = 1 on [0, delta], linear down to 0 at 1."""
        if not 0 <= delta < 1:
            raise ValueError("need 0 <= delta < 1")

        def xi(t):
            return np.clip((1.0 - np.asarray(t)) / (1.0 - delta), 0.0, 1.0) ** power

        return cls(xi, 0.5**power, f"cutoff(delta={delta}, power={power})")


def cutoff_profile(t, delta):
    """zeta(t): 1 on [0, delta], (1 - t)/(1 - delta) on [delta, 1], 0 beyond."""
    return np.clip((1.0 - np.asarray(t, dtype=float)) / (1.0 - delta), 0.0, 1.0)


# ---------------------------------------------------------------------------
# test-function dictionary


@dataclass(frozen=True)
class TestFunction:
    """A function of normalized coordinates z = (x - x0)/R."""

    __test__ = False  # not a pytest class

    name: str
    f: object

    def on(self, X, Y, x0, R):
        return np.broadcast_to(self.f((X - x0[0]) / R, (Y - x0[1]) / R), X.shape).astype(float)


_B3 = BSpline.basis_element(np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), extrapolate=False)


def _b3(t):
    return np.nan_to_num(_B3(t), nan=0.0)


def _bump(cx, cy, s):
    return lambda z1, z2: _b3((z1 - cx) / s) * _b3((z2 - cy) / s)


def _random_field(rng, modes=6, freq=2.0):
    w = rng.normal(0.0, freq, size=(modes, 2))
    ph = rng.uniform(0, 2 * np.pi, size=modes)
    a = rng.normal(size=modes) / np.sqrt(modes)
    return lambda z1, z2: sum(a[k] * np.cos(w[k, 0] * z1 + w[k, 1] * z2 + ph[k]) for k in range(modes))


def test_dictionary(seed=0, scales=(0.5, 1 / 3, 0.2), n_random=20, degree=2):
    """Tensor cubic B-spline bumps at several scales, monomials up to
    ``degree`` and ``n_random`` seeded smooth random fields."""
    out = []
    for s in scales:
        k = int(np.floor(1.0 / s))
        for a in range(-k, k + 1):
            for b in range(-k, k + 1):
                cx, cy = a * s, b * s
                if np.hypot(cx, cy) < 1.0:
                    out.append(TestFunction(f"bspline(s={s:.3g},{cx:.3g},{cy:.3g})", _bump(cx, cy, s)))
    for d in range(degree + 1):
        for i in range(d + 1):
            j = d - i
            out.append(TestFunction(f"z1^{i} z2^{j}", lambda z1, z2, i=i, j=j: z1**i * z2**j))
    rng = np.random.default_rng(seed)
    for r in range(n_random):
        out.append(TestFunction(f"random[{seed}:{r}]", _random_field(rng)))
    return out


test_dictionary.__test__ = False


# ---------------------------------------------------------------------------
# P1 mesh on a forward ball


@dataclass
class BallMesh:
    """Triangles of the grid cells inside the forward ball B_R(x0)."""

    grid: object
    R: float
    nodes: np.ndarray  # flat grid indices of the mesh nodes
    tri: np.ndarray  # (T, 3) local node indices
    area: np.ndarray
    centroid: np.ndarray  # (T, 2)
    dist: np.ndarray  # distance at the centroid
    density: np.ndarray  # exp(phi) at the centroid
    midpoint_density: np.ndarray  # (T, 3)
    Gx: sp.csr_matrix  # node values -> per-triangle d/dx
    Gy: sp.csr_matrix
    Q: sp.csr_matrix  # node values -> edge-midpoint values, (3T, N)
    A: np.ndarray = field(repr=False, default=None)  # co-metric quadratic part at centroids
    beta: np.ndarray = field(repr=False, default=None)

    @property
    def n(self):
        return len(self.nodes)

    def values(self, full):
        """Restrict a full-grid array to the mesh nodes."""
        return np.asarray(full).reshape(-1)[self.nodes]

    def weights(self, psi_t=None):
        """Per-triangle measure area * exp(phi) * psi."""
        w = self.area * self.density
        return w if psi_t is None else w * psi_t

    def midpoint_weights(self, psi_t=None):
        w = (self.area / 3)[:, None] * self.midpoint_density
        if psi_t is not None:
            w = w * psi_t[:, None]
        return w.reshape(-1)

    def gradients(self, vals):
        """(T, 2) constant gradients of the P1 interpolant."""
        return np.column_stack([self.Gx @ vals, self.Gy @ vals])

    def measure(self):
        return float(np.sum(self.midpoint_weights()))


def ball_mesh(df, R, mu, metric=None):
    """P1 mesh of the forward ball of radius R of a distance field."""
    g = df.grid
    d = np.where(np.isfinite(df.values), df.values, np.inf)
    j, i = np.mgrid[0 : g.ny - 1, 0 : g.nx - 1]
    j, i = j.ravel(), i.ravel()
    n00 = j * g.nx + i
    n10 = n00 + 1
    n01 = n00 + g.nx
    n11 = n01 + 1
    tris = np.concatenate([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    dflat = d.ravel()
    dc = dflat[tris].mean(axis=1)
    keep = dc < R
    tris = tris[keep]
    if len(tris) < 8:
        raise DegenerateRegion(f"ball of radius {R} holds fewer than 8 triangles at h = {g.h}")
    if np.any(g.boundary_mask().ravel()[np.unique(tris)]):
        from .errors import BallClipped

        raise BallClipped(f"ball of radius {R} touches the grid boundary")
    nodes, local = np.unique(tris, return_inverse=True)
    local = local.reshape(tris.shape)
    P = g.points().reshape(-1, 2)[nodes]
    V = P[local]  # (T, 3, 2)
    e1 = V[:, 1] - V[:, 0]
    e2 = V[:, 2] - V[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of the barycentric functions
    inv = np.stack([np.column_stack([e2[:, 1], -e1[:, 1]]), np.column_stack([-e2[:, 0], e1[:, 0]])], axis=1)
    inv = inv / det[:, None, None]  # rows: d/dx, d/dy of (lambda1, lambda2)
    T = len(tris)
    gx = np.column_stack([-inv[:, 0, 0] - inv[:, 0, 1], inv[:, 0, 0], inv[:, 0, 1]])
    gy = np.column_stack([-inv[:, 1, 0] - inv[:, 1, 1], inv[:, 1, 0], inv[:, 1, 1]])
    rows = np.repeat(np.arange(T), 3)
    N = len(nodes)
    Gx = sp.csr_matrix((gx.ravel(), (rows, local.ravel())), shape=(T, N))
    Gy = sp.csr_matrix((gy.ravel(), (rows, local.ravel())), shape=(T, N))
    pairs = [(0, 1), (1, 2), (2, 0)]
    qr = np.concatenate([np.repeat(3 * np.arange(T) + k, 2) for k in range(3)])
    qc = np.concatenate([local[:, list(p)].ravel() for p in pairs])
    Q = sp.csr_matrix((np.full(len(qr), 0.5), (qr, qc)), shape=(3 * T, N))
    cen = V.mean(axis=1)
    mids = np.stack([0.5 * (V[:, a] + V[:, b]) for a, b in pairs], axis=1)
    mesh = BallMesh(g, float(R), nodes, local, area, cen, dc[keep], np.exp(mu.phi(cen)),
                    np.exp(mu.phi(mids)), Gx, Gy, Q)
    if metric is not None:
        mesh.A, mesh.beta = metric.dual_coefficients(cen)
    return mesh


def _ensure_df(m, x0, R, h, df):
    if df is not None:
        return df
    return distance_field(m, x0, _reach_grid(m, x0, R, h), "forward")


def _cometric(mesh, xi):
    """F*(xi) and dF*/dxi per triangle from the cached co-metric coefficients
    (zero gradient where xi = 0)."""
    Ax = np.einsum("tij,tj->ti", mesh.A, xi)
    a = np.sqrt(np.maximum(np.einsum("ti,ti->t", xi, Ax), 0.0))
    Fs = a + np.einsum("ti,ti->t", mesh.beta, xi)
    safe = np.where(a > 0, a, 1.0)
    grad = np.where((a > 0)[:, None], Ax / safe[:, None] + mesh.beta, 0.0)
    return Fs, grad


def _dual_p(mesh, m, xi, p):
    """F*(xi)^p per triangle."""
    return _cometric(mesh, xi)[0] ** p


# ---------------------------------------------------------------------------
# Poincare constants


@dataclass
class PoincareResult:
    constant: float
    eigenvalue: float
    symmetrized: bool
    h: float
    nodes: int
    eigenvector: np.ndarray = field(repr=False)


def _stiffness(mesh, psi_t=None, symmetric=True):
    """Quadratic form of int F*^2(du) psi dm; the symmetrized co-metric
    (F*^2(xi) + F*^2(-xi))/2 = xi.(A + beta beta^T)xi is used."""
    S = mesh.A + mesh.beta[:, :, None] * mesh.beta[:, None, :]
    w = mesh.weights(psi_t)
    D = sp.diags
    Gx, Gy = mesh.Gx, mesh.Gy
    K = (Gx.T @ D(w * S[:, 0, 0]) @ Gx + Gx.T @ D(w * S[:, 0, 1]) @ Gy
         + Gy.T @ D(w * S[:, 1, 0]) @ Gx + Gy.T @ D(w * S[:, 1, 1]) @ Gy)
    return K.tocsc()


def _mass(mesh, psi_t=None):
    return (mesh.Q.T @ sp.diags(mesh.midpoint_weights(psi_t)) @ mesh.Q).tocsc()


def poincare_eigen(m, mu, ball, h=None, df=None):
    """Smallest nonzero eigenvalue of int F*^2(du) dm / int |u - mean|^2 dm."""
    x0, R = tuple(ball.center), float(ball.radius)
    h = R / 100 if h is None else h
    df = _ensure_df(m, x0, R, h, df)
    mesh = ball_mesh(df, R, mu, m)
    K = _stiffness(mesh)
    M = _mass(mesh)
    sigma = -1e-3 / R**2
    try:
        vals, vecs = eigsh(K, k=3, M=M, sigma=sigma, which="LM")
    except (ArpackNoConvergence, RuntimeError) as exc:
        raise EigenFailure(str(exc)) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # the smallest eigenvalue belongs to the constants
    ones = np.ones(mesh.n)
    c0 = abs(ones @ (M @ vecs[:, 0])) / np.sqrt((ones @ (M @ ones)) * (vecs[:, 0] @ (M @ vecs[:, 0])))
    if abs(vals[0]) > 1e-8 * max(abs(vals[1]), 1e-300) or c0 < 1 - 1e-6:
        raise EigenFailure("constant mode not recovered as the bottom eigenpair")
    lam1 = float(vals[1])
    if not lam1 > 0:
        raise EigenFailure(f"nonpositive first nonzero eigenvalue {lam1}")
    return PoincareResult(1.0 / lam1, lam1, not m.is_riemannian, df.grid.h, mesh.n, vecs[:, 1])


def _span_basis(mesh, funcs, x0, R):
    X, Y = mesh.grid.mesh()
    cols = [mesh.values(t.on(X, Y, x0, R)) for t in funcs]
    return np.column_stack(cols)


def _reduce(Num, Den, rel=1e-10):
    """Basis of the span where Den is positive definite (columns)."""
    w, V = np.linalg.eigh(0.5 * (Den + Den.T))
    keep = w > rel * max(w.max(), 1e-300)
    return V[:, keep] / np.sqrt(w[keep])


class _Ratio:
    """int |u - u_psi|^p psi dm / int F*^p(du) psi dm on a coefficient span."""

    def __init__(self, mesh, m, B, p, psi_t=None):
        self.mesh, self.m, self.B, self.p = mesh, m, B, p
        self.wq = mesh.midpoint_weights(psi_t)
        self.wt = mesh.weights(psi_t)
        self.QB = mesh.Q @ B
        self.GB = np.stack([mesh.Gx @ B, mesh.Gy @ B], axis=1)  # (T, 2, k)
        self.mass = self.wq.sum()

    def value(self, c):
        v = self.QB @ c
        dev = v - self.wq @ v / self.mass
        num = np.sum(self.wq * np.abs(dev) ** self.p)
        xi = self.GB @ c
        den = np.sum(self.wt * _dual_p(self.mesh, self.m, xi, self.p))
        return num, den

    def neg_log_and_grad(self, c):
        p = self.p
        v = self.QB @ c
        dev = v - self.wq @ v / self.mass
        a = np.abs(dev)
        num = np.sum(self.wq * a**p)
        # d/dc of sum w |v - mean|^p, including the mean's dependence on c
        s = self.wq * p * a ** (p - 1) * np.sign(dev)
        dnum = self.QB.T @ (s - self.wq * s.sum() / self.mass)
        Fs, dF = _cometric(self.mesh, self.GB @ c)
        den = np.sum(self.wt * Fs**p)
        t = (self.wt * p * Fs ** (p - 1))[:, None] * dF
        dden = np.einsum("ti,tik->k", t, self.GB)
        if num <= 0 or den <= 0:
            return np.inf, np.zeros_like(c)
        return -(np.log(num) - np.log(den)), -(dnum / num - dden / den)


def _max_ratio(mesh, m, funcs, x0, R, p, psi_t=None, starts=3):
    """Largest ratio over the span of ``funcs``; also the best single element."""
    B0 = _span_basis(mesh, funcs, x0, R)
    Mw = (mesh.Q.T @ sp.diags(mesh.midpoint_weights(psi_t)) @ mesh.Q)
    mvec = mesh.Q.T @ mesh.midpoint_weights(psi_t)
    tot = mvec.sum()
    K = _stiffness(mesh, psi_t)
    Num = B0.T @ (Mw @ B0) - np.outer(B0.T @ mvec, B0.T @ mvec) / tot
    Den = B0.T @ (K @ B0)
    T = _reduce(Num, Den)
    if T.shape[1] == 0:
        return 0.0, 0.0, None
    # symmetrized p = 2 problem is a small dense generalized eigenproblem
    w, V = sla.eigh(T.T @ Num @ T)
    c_sym = T @ V[:, -1]
    ratio = _Ratio(mesh, m, B0, p, psi_t)
    single = []
    for k in range(B0.shape[1]):
        e = np.zeros(B0.shape[1])
        e[k] = 1.0
        nmr, dnm = ratio.value(e)
        single.append(nmr / dnm if dnm > 0 else 0.0)
    best_single = float(max(single))
    if p == 2 and m.is_riemannian:
        return float(w[-1]), best_single, c_sym
    # direct ascent of the (possibly asymmetric, p != 2) functional
    cands = [c_sym, -c_sym] + [T @ V[:, -k] for k in range(2, min(starts, V.shape[1]) + 1)]
    best, best_c = 0.0, None
    for c in cands:
        res = minimize(ratio.neg_log_and_grad, c, jac=True, method="L-BFGS-B", options={"maxiter": 200})
        val = float(np.exp(-res.fun)) if np.isfinite(res.fun) else 0.0
        if val > best:
            best, best_c = val, res.x
    return max(best, best_single), best_single, best_c


def poincare_constant(m, mu, ball, p=2.0, h=None, df=None, test_set=None):
    """Best constant C in int |u - mean|^p dm <= C int F*^p(du) dm on the ball.

    p = 2 uses the discrete eigenvalue (with the symmetrized co-metric for
    non-reversible metrics); other p maximize over the test dictionary.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if p == 2:
        return poincare_eigen(m, mu, ball, h, df).constant
    x0, R = tuple(ball.center), float(ball.radius)
    h = R / 100 if h is None else h
    df = _ensure_df(m, x0, R, h, df)
    mesh = ball_mesh(df, R, mu, m)
    best, _, _ = _max_ratio(mesh, m, test_set or test_dictionary(), x0, R, p)
    return best


# ---------------------------------------------------------------------------
# scale-series verdicts


def _growth_verdict(series, K, delta, tol):
    """Constants must be finite; with K + delta^2 = 0 they must also be
    scale-stable within ``tol``.  Returns (verdict, fitted exponent)."""
    R = np.array([r for r, _ in series], dtype=float)
    E = np.array([c for _, c in series], dtype=float)
    if not np.all(np.isfinite(E)):
        return "inconclusive", None
    pos = E > 0
    if not np.any(pos):
        return "consistent", None
    z = (K + delta**2) * R[pos] ** 2
    L = np.log(E[pos])
    if np.ptp(z) < 1e-12:
        return ("consistent" if np.ptp(L) <= np.log1p(tol) else "inconclusive"), 0.0
    c = float(np.polyfit(z, L, 1)[0])
    return "consistent", c


def _bounds_for(m, mu, x0, R, bounds):
    if bounds is not None:
        return bounds.K, bounds.delta
    b = curvature_bounds(m, mu, Ball(tuple(x0), R), samples=32, directions=16)
    return b.K, b.delta


# ---------------------------------------------------------------------------
# weighted Poincare and Sobolev


def weighted_poincare_check(m, mu, ball, profile=None, p=2.0, test_set=None, h=None, df=None,
                            factors=(0.25, 0.5, 1.0), bounds=None, tol=0.25):
    """int |u - u_Psi|^p Psi dm <= C R^p int F*^p(du) Psi dm, Psi = xi(d(x0, .)/R).

    The empirical constant is the largest ratio over the span of the test
    set; the scale series repeats the computation on B_{fR}(x0).
    """
    profile = profile or WeightProfile.indicator()
    funcs = test_set or test_dictionary()
    x0, R = tuple(ball.center), float(ball.radius)
    h = R / 100 if h is None else h
    Rmax = R * max(max(factors), 1.0)
    df = _ensure_df(m, x0, Rmax, h, df)
    K, delta = _bounds_for(m, mu, x0, R, bounds)
    series, main = [], None
    for f in sorted(set(factors) | {1.0}):
        r = R * f
        mesh = ball_mesh(df, r, mu, m)
        psi = profile(mesh.dist / r)
        best, single, c = _max_ratio(mesh, m, funcs, x0, r, p, psi)
        E = best / r**p
        if f in factors:
            series.append((r, E))
        if f == 1.0:
            main = (mesh, best, single, c, psi)
    mesh, best, single, c, psi = main
    if c is not None:
        num, den = _Ratio(mesh, m, _span_basis(mesh, funcs, x0, R), p, psi).value(c)
    else:
        num, den = 0.0, 0.0
    verdict, rate = _growth_verdict(series, K, delta, tol)
    return InequalityReport(
        "weighted_poincare", float(num), "c1 exp(c2 (K+delta^2) R^2) R^p int F*^p(du) Psi dm",
        float(best / R**p), verdict, scale_series=series,
        rhs=float(R**p * den) if den else None,
        details={"p": p, "R": R, "profile": profile.name, "alpha": profile.alpha, "K": K, "delta": delta,
                 "best_single_element": float(single / R**p), "test_functions": len(funcs),
                 "fitted_growth_rate": rate, "symmetrized_form": bool(p == 2 and not m.is_riemannian),
                 "h": df.grid.h, "tolerance": tol},
    )


def sobolev_ratio(mesh, m, vals, nu, R):
    """(int |u|^{2nu/(nu-2)})^{(nu-2)/nu} / (m(B)^{-2/nu} R^2 int (F*^2(du) + u^2/R^2))."""
    q = 2 * nu / (nu - 2)
    wq = mesh.midpoint_weights()
    um = mesh.Q @ vals
    lhs = np.sum(wq * np.abs(um) ** q) ** (1 / q * 2)
    F2 = _dual_p(mesh, m, mesh.gradients(vals), 2)
    vol = wq.sum()
    rhs = vol ** (-2 / nu) * R**2 * (np.sum(mesh.weights() * F2) + np.sum(wq * um**2) / R**2)
    return float(lhs), float(rhs)


def sobolev_check(m, mu, ball, nu=NU_DEFAULT, test_set=None, h=None, df=None,
                  factors=(0.25, 0.5, 1.0), bounds=None, tol=0.25):
    """Local Sobolev inequality with exponent 2nu/(nu - 2); maximum ratio over
    the test set, with a scale series over B_{fR}(x0)."""
    if not nu > 2:
        raise ValueError("nu must exceed 2")
    funcs = test_set or test_dictionary()
    x0, R = tuple(ball.center), float(ball.radius)
    h = R / 100 if h is None else h
    df = _ensure_df(m, x0, R * max(max(factors), 1.0), h, df)
    K, delta = _bounds_for(m, mu, x0, R, bounds)
    X, Y = df.grid.mesh()
    series, main = [], None
    for f in sorted(set(factors) | {1.0}):
        r = R * f
        mesh = ball_mesh(df, r, mu, m)
        best, arg = -np.inf, None
        for t in funcs:
            lhs, rhs = sobolev_ratio(mesh, m, mesh.values(t.on(X, Y, x0, r)), nu, r)
            if rhs > 0 and lhs / rhs > best:
                best, arg = lhs / rhs, (t.name, lhs, rhs)
        if f in factors:
            series.append((r, best))
        if f == 1.0:
            main = (best, arg)
    best, (name, lhs, rhs) = main
    verdict, rate = _growth_verdict(series, K, delta, tol)
    return InequalityReport(
        "sobolev", lhs, "c exp(c (K+delta^2) R^2) m(B_R)^(-2/nu) R^2 int (F*^2(du) + u^2/R^2) dm",
        best, verdict, scale_series=series, rhs=rhs,
        details={"nu": nu, "R": R, "K": K, "delta": delta, "maximizer": name,
                 "fitted_growth_rate": rate, "h": df.grid.h, "test_functions": len(funcs)},
    )


# ---------------------------------------------------------------------------
# space-time cylinders


def _time_integral(times, vals, t0, t1):
    """Trapezoid integral of samples over [t0, t1], interpolating at the ends."""
    times = np.asarray(times, dtype=float)
    vals = np.asarray(vals, dtype=float)
    if t0 < times[0] - 1e-12 or t1 > times[-1] + 1e-12:
        raise ValueError(f"time window [{t0}, {t1}] not covered by data [{times[0]}, {times[-1]}]")
    inner = (times > t0 + 1e-12) & (times < t1 - 1e-12)
    ts = np.concatenate([[t0], times[inner], [t1]])
    vs = np.concatenate([[np.interp(t0, times, vals)], vals[inner], [np.interp(t1, times, vals)]])
    return float(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts)))


def _window_idx(times, t0, t1):
    idx = np.nonzero((times >= t0 - 1e-12) & (times <= t1 + 1e-12))[0]
    if len(idx) == 0:
        raise ValueError(f"no snapshot inside [{t0}, {t1}]")
    return idx


@dataclass
class _Cyl:
    """Ball masks and densities for a cylinder on the data grid."""

    u: object
    df: object
    mu: object
    x0: tuple
    R: float
    s: float

    def __post_init__(self):
        self.dens = np.exp(self.mu.phi(self.u.grid.points()))
        self._balls = {}
        if self.s < self.R**2 - 1e-12:
            raise ValueError("the cylinder needs s >= R^2")

    def ball(self, frac):
        if frac not in self._balls:
            b = forward_ball(self.df, frac * self.R)
            if b.clipped:
                from .errors import BallClipped

                raise BallClipped(f"ball of radius {frac * self.R} touches the grid boundary")
            self._balls[frac] = b
        return self._balls[frac]

    def volume(self, frac):
        b = self.ball(frac)
        return float(np.sum(b.weights * self.dens) * self.u.grid.h**2)

    def integral(self, frac, t0, t1, fn):
        """int_{t0}^{t1} int_{B_{frac R}} fn(u) dm dt."""
        b = self.ball(frac)
        w = b.weights * self.dens * self.u.grid.h**2
        nz = w > 0
        vals = np.array([np.sum(w[nz] * fn(v[nz])) for v in self.u.values])
        return _time_integral(self.u.times, vals, t0, t1)

    def extreme(self, frac, t0, t1, fn, kind="max"):
        b = self.ball(frac)
        idx = _window_idx(self.u.times, t0, t1)
        vals = fn(self.u.values[idx][:, b.mask])
        return float(vals.max() if kind == "max" else vals.min())


def _cyl_setup(m, u, cylinder, df):
    x0 = tuple(cylinder.x0)
    if df is None:
        df = distance_field(m, x0, u.grid, "forward")
    return df


def _residual_gate(m, mu, u, f, side, tol, periodic=False):
    res = parabolic_residual(m, mu, u, f, side, tol=tol, periodic=periodic)
    if not res["pass"]:
        raise SideMismatch(f"field fails the {side}solution check: worst {res['worst']:.3e} at {res['at']}")
    return res


def _Lambda(m, x0, R, lam):
    if lam is not None:
        return float(lam)
    return reversibility(m, Ball(tuple(x0), R), samples=32, n_angles=1024)


def _mean_value_constant(cyl, p, delta, delta_prime, side, Xi, nu):
    R, s = cyl.R, cyl.s
    sgn = 1.0 if side == "sub" else -1.0

    def powf(v):
        return v ** (sgn * p)

    sup = cyl.extreme(delta, s - delta * R**2, s, powf, "max")
    integ = cyl.integral(delta_prime, s - delta_prime * R**2, s, powf)
    vol = cyl.volume(1.0)
    shape = Xi * (delta_prime - delta) ** (-(2 + nu)) * R**-2 / vol * integ
    return sup, integ, vol, sup / shape


def mean_value_check(m, mu, u, cylinder, p=1.0, delta=0.5, delta_prime=0.75, f=0.0, side="sub",
                     nu=NU_DEFAULT, bounds=None, df=None, lam=None, residual_tol=2e-2,
                     check_residual=True, periodic=False):
    """Mean value inequality for positive sub- (side='sub', u^p) or
    supersolutions (side='super', u^{-p}) of (Delta - d/dt)u = -/+ f u.

    The empirical constant E = e^{C(1 + (K + delta_S^2)R^2)} solves the
    inequality with equality; the scale series repeats the computation on
    the parabolically rescaled cylinder (R/2, R^2/4) of the same data.
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    if not 0 < delta < delta_prime <= 1:
        raise ValueError("need 0 < delta < delta' <= 1")
    if not p > 0:
        raise ValueError("p must be positive")
    if np.any(u.values <= 0):
        raise ValueError("mean value checks need a positive field")
    x0, R, s = tuple(cylinder.x0), float(cylinder.R), float(cylinder.s)
    fv = f.values if isinstance(f, ScalarField) else f
    A = float(np.max(fv))
    if A < 0:
        raise ValueError("f must be nonnegative")
    res = _residual_gate(m, mu, u, fv, side, residual_tol, periodic) if check_residual else None
    df = _cyl_setup(m, u, cylinder, df)
    K, dS = _bounds_for(m, mu, x0, R, bounds)
    Lam = _Lambda(m, x0, R, lam)
    series = []
    out = None
    for scale in (1.0, 0.5):
        r = R * scale
        cyl = _Cyl(u, df, mu, x0, r, s)
        if side == "sub":
            Xi = (7 * Lam**2 + 2 * A * r**2) ** (1 + nu / 2)
        else:
            Xi = (3 * Lam**6 + A * r**2) ** (1 + nu / 2)
        sup, integ, vol, E = _mean_value_constant(cyl, p, delta, delta_prime, side, Xi, nu)
        series.append((r, E))
        if out is None:
            out = (sup, integ, vol, E, Xi)
    sup, integ, vol, E, Xi = out
    C = np.log(E) / (1 + (K + dS**2) * R**2) if E > 0 else None
    verdict = "consistent" if np.isfinite(E) else "inconclusive"
    name = "mean_value_sub" if side == "sub" else "mean_value_super"
    return InequalityReport(
        name, sup, "exp(C(1+(K+delta^2)R^2)) Xi (delta'-delta)^(-(2+nu)) R^-2 m(B_R)^-1 int_Q u^(+/-p)",
        E, verdict, scale_series=series,
        rhs=float(Xi * (delta_prime - delta) ** (-(2 + nu)) * R**-2 / vol * integ),
        details={"side": side, "p": p, "delta": delta, "delta_prime": delta_prime, "nu": nu, "Lambda": Lam,
                 "A": A, "Xi": Xi, "integral": integ, "m_BR": vol, "K": K, "delta_S": dS,
                 "exponent_constant": C, "R": R, "s": s,
                 "residual": res},
    )


def gradient_estimate_check(m, mu, u, cylinder, nu=NU_DEFAULT, bounds=None, df=None, check_residual=True,
                            residual_tol=2e-2, periodic=False):
    """sup_{Q_{1/2}} F^2(grad u) against (1+KR^2)^{1+nu/2} R^-4 m(B_R)^-1 int_{Q_{3/4}} u^2."""
    x0, R, s = tuple(cylinder.x0), float(cylinder.R), float(cylinder.s)
    res = None
    if check_residual:
        res = {side: _residual_gate(m, mu, u, 0.0, side, residual_tol, periodic) for side in ("sub", "super")}
    df = _cyl_setup(m, u, cylinder, df)
    K, dS = _bounds_for(m, mu, x0, R, bounds)
    P = u.grid.points()
    series = []
    out = None
    for scale in (1.0, 0.5):
        r = R * scale
        cyl = _Cyl(u, df, mu, x0, r, s)
        b = cyl.ball(0.5)
        idx = _window_idx(u.times, s - 0.5 * r**2, s)
        lhs = 0.0
        for k in idx:
            du = differential(u.at(k), periodic).values[b.mask]
            nz = np.hypot(du[:, 0], du[:, 1]) > 0
            if np.any(nz):
                lhs = max(lhs, float(np.max(dual_metric(m, P[b.mask][nz], du[nz]) ** 2)))
        integ = cyl.integral(0.75, s - 0.75 * r**2, s, np.square)
        vol = cyl.volume(1.0)
        shape = (1 + K * r**2) ** (1 + nu / 2) * r**-4 / vol * integ
        E = lhs / shape if shape > 0 else np.inf
        series.append((r, E))
        if out is None:
            out = (lhs, integ, vol, shape, E)
    lhs, integ, vol, shape, E = out
    return InequalityReport(
        "gradient_estimate", lhs, "exp(C(1+(K+delta^2)R^2)) (1+KR^2)^(1+nu/2) R^-4 m(B_R)^-1 int_{Q_3/4} u^2",
        E, "consistent" if np.isfinite(E) else "inconclusive", scale_series=series, rhs=shape,
        details={"nu": nu, "K": K, "delta_S": dS, "integral": integ, "m_BR": vol, "R": R, "s": s,
                 "exponent_constant": (np.log(E) / (1 + (K + dS**2) * R**2)) if E > 0 else None,
                 "residual": res},
    )


def log_levelset_check(m, mu, u, cylinder, delta=0.5, tau=0.5, lambdas=None, df=None):
    """Level sets of log u on K+ = B_{dR} x (s - tR^2, s) and K- = B_{dR} x (s - R^2, s - tR^2).

    c = w_{psi^2}(s - tau R^2) with w = -log u and psi = zeta(d(x0, .)/R);
    the empirical C0 is max over lambda of lambda m(level set)/m(Q).
    """
    if not (0 < delta < 1 and 0 < tau < 1):
        raise ValueError("need delta, tau in (0, 1)")
    if np.any(u.values <= 0):
        raise ValueError("level-set checks need a positive field")
    lambdas = np.geomspace(0.5, 8.0, 17) if lambdas is None else np.asarray(lambdas, dtype=float)
    x0, R, s = tuple(cylinder.x0), float(cylinder.R), float(cylinder.s)
    df = _cyl_setup(m, u, cylinder, df)
    cyl = _Cyl(u, df, mu, x0, R, s)
    g = u.grid
    sp_ = s - tau * R**2
    _time_integral(u.times, np.zeros(len(u.times)), s - R**2, s)  # coverage check
    psi2 = cutoff_profile(np.where(np.isfinite(df.values), df.values, np.inf) / R, delta) ** 2
    w_node = psi2 * cyl.dens * g.h**2
    wpsi = np.array([np.sum(w_node * -np.log(v)) for v in u.values]) / np.sum(w_node)
    c = float(np.interp(sp_, u.times, wpsi))
    logu = np.log(u.values)
    mQ = cyl.volume(1.0) * R**2
    plus, minus = [], []
    for lam_ in lambdas:
        plus.append(cyl.integral(delta, sp_, s, lambda v, L=lam_: (np.log(v) < -L - c).astype(float)))
        minus.append(cyl.integral(delta, s - R**2, sp_, lambda v, L=lam_: (np.log(v) > L - c).astype(float)))
    plus, minus = np.array(plus), np.array(minus)
    prod = lambdas * np.maximum(plus, minus) / mQ
    C0 = float(prod.max())
    return InequalityReport(
        "log_levelset", float(max(plus.max(), minus.max())), "C0 m(Q) / lambda", C0,
        "consistent" if np.isfinite(C0) else "inconclusive",
        scale_series=[(float(L), float(pv)) for L, pv in zip(lambdas, prod)],
        details={"c": c, "delta": delta, "tau": tau, "lambdas": lambdas, "measure_plus": plus,
                 "measure_minus": minus, "m_Q": mQ, "log_u_range": [float(logu.min()), float(logu.max())]},
    )


def iteration_lemma_check(family, g, weights, alpha0, gamma, C, delta=0.5, sigmas=None, alphas=None,
                          lambdas=None, rtol=1e-9):
    """Check the hypotheses of the abstract iteration lemma on sampled data and
    evaluate its conclusion.

    ``family(sigma)`` returns a boolean mask of U_sigma (U = family(1)),
    ``g`` a positive array and ``weights`` the cell measures.  The minimal
    constants for which each hypothesis holds are reported; HypothesisFail
    names the hypotheses that fail for the supplied C.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(g <= 0):
        raise ValueError("g must be positive")
    if not 0 < delta < 1:
        raise ValueError("need 0 < delta < 1")
    sigmas = np.linspace(delta, 1.0, 6) if sigmas is None else np.asarray(sigmas, dtype=float)
    inf0 = not np.isfinite(alpha0)
    amax = 1.0 if inf0 else min(1.0, alpha0 / 2)
    alphas = np.linspace(amax / 8, amax, 8) if alphas is None else np.asarray(alphas, dtype=float)
    U = np.asarray(family(1.0), dtype=bool)
    mU = float(np.sum(w[U]))
    if mU <= 0:
        raise ValueError("U has zero measure")
    masks = {float(sg): np.asarray(family(sg), dtype=bool) for sg in sigmas}
    for a, b in zip(sigmas[:-1], sigmas[1:]):
        if np.any(masks[float(a)] & ~masks[float(b)]):
            raise ValueError("family is not nested")

    def norm(mask, a):
        if not np.isfinite(a):
            return float(g[mask].max()) if np.any(mask) else 0.0
        return float(np.sum(w[mask] * g[mask] ** a)) ** (1 / a)

    need_alpha = 0.0
    for i, s1 in enumerate(sigmas):
        for s2 in sigmas[i + 1:]:
            lhs = norm(masks[float(s1)], alpha0)
            for a in alphas:
                e = 1 / a - (0.0 if inf0 else 1 / alpha0)
                rhs = norm(masks[float(s2)], a)
                if lhs <= 0:
                    continue
                # smallest C with lhs <= [C (s2 - s1)^-gamma / m(U)]^e rhs
                need = (lhs / rhs) ** (1 / e) * (s2 - s1) ** gamma * mU if rhs > 0 else np.inf
                need_alpha = max(need_alpha, float(need))
    logg = np.log(g[U])
    wu = w[U]
    if lambdas is None:
        top = max(float(logg.max()), 1e-3)
        lambdas = np.geomspace(1e-3, top, 64)
    need_L = 0.0
    for L in np.asarray(lambdas, dtype=float):
        need_L = max(need_L, float(L * np.sum(wu[logg > L]) / mU))
    failed = []
    if need_alpha > C * (1 + rtol):
        failed.append("alpha")
    if need_L > C * (1 + rtol):
        failed.append("Lcondi2")
    if failed:
        raise HypothesisFail(failed, f"hypotheses fail: {failed} (needed C_alpha = {need_alpha:.4g}, "
                                     f"C_L = {need_L:.4g}, supplied C = {C:.4g})")
    lhs = norm(masks[float(sigmas[0])] if np.isclose(sigmas[0], delta) else np.asarray(family(delta), bool),
               alpha0)
    C0 = lhs / (mU ** (0.0 if inf0 else 1 / alpha0))
    return InequalityReport(
        "iteration_lemma", lhs, "C0 m(U)^(1/alpha0)", float(C0), "consistent",
        details={"alpha0": alpha0, "gamma": gamma, "C": C, "delta": delta, "m_U": mU,
                 "min_C_alpha": need_alpha, "min_C_levelset": need_L},
    )


def harnack_ratio(m, mu, u, cylinder, eps, tau, delta, df=None):
    """(sup over Q-, inf over Q+) with Q- = B_{dR} x (s - dR^2, s - tR^2), Q+ = B_{dR} x (s - eR^2, s)."""
    x0, R, s = tuple(cylinder.x0), float(cylinder.R), float(cylinder.s)
    df = _cyl_setup(m, u, cylinder, df)
    cyl = _Cyl(u, df, mu, x0, R, s)
    sup = cyl.extreme(delta, s - delta * R**2, s - tau * R**2, lambda v: v, "max")
    inf = cyl.extreme(delta, s - eps * R**2, s, lambda v: v, "min")
    return sup, inf


def harnack_check(m, mu, u, cylinder, eps=0.2, tau=0.4, delta=0.6, bounds=None, df=None, runs=(),
                  tol=0.1, check_residual=True, residual_tol=2e-2, periodic=False):
    """Parabolic Harnack inequality sup_{Q-} u <= e^{C(1+(K+delta^2)R^2)} inf_{Q+} u.

    The empirical C is log(sup/inf)/(1 + (K + delta_S^2)R^2).  The series
    holds C on the given cylinder, on the rescaled cylinders (R/2, R/4) of
    the same data, and on every extra run in ``runs``: tuples
    (label, m, mu, u, cylinder).  The verdict is consistent when no series
    value exceeds the primary C by more than the relative tolerance.
    """
    if not 0 < eps < tau < delta < 1:
        raise ValueError("need 0 < eps < tau < delta < 1")
    if np.any(u.values <= 0):
        raise ValueError("Harnack checks need a positive field")
    res = None
    if check_residual:
        res = {side: _residual_gate(m, mu, u, 0.0, side, residual_tol, periodic) for side in ("sub", "super")}
    x0, R, s = tuple(cylinder.x0), float(cylinder.R), float(cylinder.s)
    df = _cyl_setup(m, u, cylinder, df)
    K, dS = _bounds_for(m, mu, x0, R, bounds)

    def const(sup, inf, r, K_, d_):
        return float(np.log(sup / inf) / (1 + (K_ + d_**2) * r**2))

    sup, inf = harnack_ratio(m, mu, u, cylinder, eps, tau, delta, df)
    C = const(sup, inf, R, K, dS)
    series, labels = [(R, C)], ["primary"]
    for f in (0.5, 0.25):
        r = R * f
        if delta * r < 3 * u.grid.h * (1 - 1e-9):
            continue
        su, iu = harnack_ratio(m, mu, u, ParabolicCylinder(x0, r, s), eps, tau, delta, df)
        series.append((r, const(su, iu, r, K, dS)))
        labels.append(f"same data, R*{f}")
    for label, m2, mu2, u2, cyl2 in runs:
        K2, d2 = _bounds_for(m2, mu2, tuple(cyl2.x0), cyl2.R, None) if bounds is None else (K, dS)
        su, iu = harnack_ratio(m2, mu2, u2, cyl2, eps, tau, delta)
        series.append((float(cyl2.R), const(su, iu, cyl2.R, K2, d2)))
        labels.append(str(label))
    others = [c for _, c in series[1:]]
    stable = all(np.isfinite(c) and c <= C * (1 + tol) + 1e-12 for c in others)
    verdict = "consistent" if np.isfinite(C) and stable else "inconclusive"
    return InequalityReport(
        "harnack", sup, "exp(C(1+(K+delta^2)R^2)) inf_{Q+} u", C, verdict, scale_series=series, rhs=inf,
        details={"ratio": sup / inf, "eps": eps, "tau": tau, "delta": delta, "K": K, "delta_S": dS,
                 "R": R, "s": s, "series_labels": labels, "tolerance": tol, "residual": res},
    )
