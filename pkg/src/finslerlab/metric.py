"""Pointwise Finsler metric algebra on 2-D charts.

Every built-in model has the conformal Randers form

    F(x, y) = lam(x) |y| + b(x) . y,      |b(x)| < lam(x),

which covers Euclidean space, Minkowski-Randers drifts, conformally flat
Riemannian metrics and the two constant-curvature patches.  All routines
accept arrays of points and vectors with a trailing axis of length 2 and
broadcast over the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirection, NoConvergence, NotPositiveDefinite, OutOfChart
from .grid import Ball

KINDS = ("euclidean", "randers", "conformal", "sphere", "hyperbolic")


def _as2(v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 2:
        raise ValueError("last axis must have length 2")
    return v


def _norm(v):
    return np.hypot(v[..., 0], v[..., 1])


def inv2(g):
    """Inverse of a stack of 2x2 matrices."""
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1]
    out[..., 1, 1] = g[..., 0, 0]
    out[..., 0, 1] = -g[..., 0, 1]
    out[..., 1, 0] = -g[..., 1, 0]
    return out / det[..., None, None]


def det2(g):
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def _fd_grad(f, x, step):
    """Central-difference gradient of a scalar function of points."""
    x = _as2(x)
    out = np.empty(np.broadcast(f(x), x[..., 0]).shape + (2,))
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        out[..., k] = (f(x + e) - f(x - e)) / (2 * step)
    return out


class MetricModel:
    """Conformal Randers metric F(x,y) = lam(x)|y| + b(x).y.

    Use the constructors :meth:`euclidean`, :meth:`randers`,
    :meth:`conformal`, :meth:`sphere` and :meth:`hyperbolic`.
    ``derivative_mode`` selects closed-form y-derivatives (``"analytic"``)
    or central differences (``"fd"``) with relative step ``fd_step``.
    """

    def __init__(self, kind, lam=None, lam_grad=None, drift=None, drift_jac=None,
                 derivative_mode="analytic", fd_step=1e-4, params=None):
        if kind not in KINDS:
            raise ValueError(f"unknown metric kind {kind!r}; expected one of {', '.join(KINDS)}")
        if derivative_mode not in ("analytic", "fd"):
            raise ValueError("derivative_mode must be 'analytic' or 'fd'")
        self.kind = kind
        self._lam = lam
        self._lam_grad = lam_grad
        self._drift = drift
        self._drift_jac = drift_jac
        self.derivative_mode = derivative_mode
        self.fd_step = float(fd_step)
        self.params = dict(params or {})

    # constructors ------------------------------------------------------

    @classmethod
    def euclidean(cls, **kw):
        return cls("euclidean", **kw)

    @classmethod
    def randers(cls, b, jac=None, **kw):
        """Randers drift; ``b`` is a constant 2-vector or a callable of points."""
        if callable(b):
            return cls("randers", drift=b, drift_jac=jac, **kw)
        b0 = np.asarray(b, dtype=float)
        if _norm(b0) >= 1:
            raise NotPositiveDefinite("Randers drift must satisfy |b| < 1")
        return cls(
            "randers",
            drift=lambda x: np.broadcast_to(b0, np.shape(x)[:-1] + (2,)),
            drift_jac=lambda x: np.zeros(np.shape(x)[:-1] + (2, 2)),
            params={"b": b0.tolist()},
            **kw,
        )

    @classmethod
    def conformal(cls, lam, grad=None, **kw):
        """Conformally flat Riemannian metric lam(x)|y|."""
        return cls("conformal", lam=lam, lam_grad=grad, **kw)

    @classmethod
    def conformal_gaussian(cls, a, **kw):
        """lam(x) = exp(a|x|^2); Gauss curvature -4a exp(-2a|x|^2)."""

        def lam(x):
            return np.exp(a * np.sum(np.asarray(x) ** 2, axis=-1))

        def grad(x):
            x = np.asarray(x, dtype=float)
            return 2 * a * lam(x)[..., None] * x

        m = cls("conformal", lam=lam, lam_grad=grad, params={"a": float(a)}, **kw)
        return m

    @classmethod
    def sphere(cls, **kw):
        """Stereographic chart of the unit round sphere."""
        return cls("sphere", **kw)

    @classmethod
    def hyperbolic(cls, **kw):
        """Poincare disk model of curvature -1."""
        return cls("hyperbolic", **kw)

    def with_mode(self, derivative_mode, fd_step=None):
        return MetricModel(self.kind, self._lam, self._lam_grad, self._drift, self._drift_jac,
                           derivative_mode, self.fd_step if fd_step is None else fd_step, self.params)

    def reverse(self):
        """The reverse metric F(x, -y)."""
        if self._drift is None:
            return self
        d, jac = self._drift, self._drift_jac
        return MetricModel(
            self.kind, self._lam, self._lam_grad,
            lambda x: -np.asarray(d(x)),
            None if jac is None else (lambda x: -np.asarray(jac(x))),
            self.derivative_mode, self.fd_step,
            {**self.params, "reversed": not self.params.get("reversed", False)},
        )

    @property
    def is_riemannian(self):
        return self._drift is None

    def describe(self):
        return {"kind": self.kind, "derivative_mode": self.derivative_mode, **self.params}

    # coefficient fields -------------------------------------------------

    def in_chart(self, x):
        x = _as2(x)
        if self.kind == "hyperbolic":
            return np.sum(x * x, axis=-1) < 1.0
        return np.all(np.isfinite(x), axis=-1)

    def check_chart(self, x):
        if not np.all(self.in_chart(x)):
            raise OutOfChart(f"point outside the {self.kind} chart")

    def lam(self, x):
        x = _as2(x)
        r2 = np.sum(x * x, axis=-1)
        if self.kind == "sphere":
            return 2.0 / (1.0 + r2)
        if self.kind == "hyperbolic":
            return 2.0 / (1.0 - r2)
        if self._lam is not None:
            return np.broadcast_to(np.asarray(self._lam(x), dtype=float), r2.shape)
        return np.ones_like(r2)

    def lam_grad(self, x):
        x = _as2(x)
        if self.kind == "sphere":
            return -(self.lam(x) ** 2)[..., None] * x
        if self.kind == "hyperbolic":
            return (self.lam(x) ** 2)[..., None] * x
        if self._lam is None:
            return np.zeros(x.shape)
        if self._lam_grad is not None:
            return np.broadcast_to(np.asarray(self._lam_grad(x), dtype=float), x.shape)
        return _fd_grad(self.lam, x, 1e-6)

    def drift(self, x):
        x = _as2(x)
        if self._drift is None:
            return np.zeros(x.shape)
        return np.broadcast_to(np.asarray(self._drift(x), dtype=float), x.shape)

    def drift_jac(self, x):
        """J[..., k, l] = d b_l / d x^k."""
        x = _as2(x)
        if self._drift is None:
            return np.zeros(x.shape + (2,))
        if self._drift_jac is not None:
            return np.broadcast_to(np.asarray(self._drift_jac(x), dtype=float), x.shape + (2,))
        out = np.empty(x.shape + (2,))
        s = 1e-6
        for k in range(2):
            e = np.zeros(2)
            e[k] = s
            out[..., k, :] = (self.drift(x + e) - self.drift(x - e)) / (2 * s)
        return out

    # metric and y-derivatives -------------------------------------------

    def F(self, x, y):
        x, y = _as2(x), _as2(y)
        return self.lam(x) * _norm(y) + np.sum(self.drift(x) * y, axis=-1)

    def _parts(self, x, y):
        lam = self.lam(x)
        b = self.drift(x)
        r = _norm(y)
        if np.any(r == 0):
            raise DegenerateDirection("direction-dependent quantity requested at y = 0")
        u = y / r[..., None]
        return lam, b, r, u

    def dF(self, x, y):
        """First y-derivatives of F."""
        x, y = _as2(x), _as2(y)
        if self.derivative_mode == "fd":
            return self._fd_y(x, y, order=1)
        lam, b, r, u = self._parts(x, y)
        return lam[..., None] * u + b

    def d2F(self, x, y):
        x, y = _as2(x), _as2(y)
        if self.derivative_mode == "fd":
            return self._fd_y(x, y, order=2) / (2 * self.F(x, y))[..., None, None] - _outer(
                self._fd_y(x, y, order=1)) / self.F(x, y)[..., None, None]
        lam, b, r, u = self._parts(x, y)
        P = np.eye(2) - u[..., :, None] * u[..., None, :]
        return (lam / r)[..., None, None] * P

    def fundamental_tensor(self, x, y):
        x, y = _as2(x), _as2(y)
        if self.derivative_mode == "fd":
            g = 0.5 * self._fd_y(x, y, order=2)
        else:
            Fy = self.dF(x, y)
            g = _outer(Fy) + self.F(x, y)[..., None, None] * self.d2F(x, y)
        _check_pd(g)
        return g

    def cartan_tensor(self, x, y):
        x, y = _as2(x), _as2(y)
        if self.derivative_mode == "fd":
            return 0.25 * self._fd_y(x, y, order=3)
        lam, b, r, u = self._parts(x, y)
        F = self.F(x, y)
        Fy = lam[..., None] * u + b
        Fyy = (lam / r)[..., None, None] * (np.eye(2) - u[..., :, None] * u[..., None, :])
        d = np.eye(2)
        F3 = (
            3 * np.einsum("...i,...j,...k->...ijk", u, u, u)
            - np.einsum("...i,jk->...ijk", u, d)
            - np.einsum("...j,ik->...ijk", u, d)
            - np.einsum("...k,ij->...ijk", u, d)
        ) * (lam / r**2)[..., None, None, None]
        C = 0.5 * (
            np.einsum("...ij,...k->...ijk", Fyy, Fy)
            + np.einsum("...ik,...j->...ijk", Fyy, Fy)
            + np.einsum("...jk,...i->...ijk", Fyy, Fy)
            + F[..., None, None, None] * F3
        )
        return C

    def _fd_y(self, x, y, order):
        """Central differences of F^2 in y: gradient, Hessian or third derivative."""
        r = _norm(y)
        if np.any(r == 0):
            raise DegenerateDirection("direction-dependent quantity requested at y = 0")
        scale = {1: 1e-6, 2: self.fd_step, 3: 1e-3}[order] * r
        s = scale[..., None]

        def F2(z):
            return self.F(x, z) ** 2

        E = np.eye(2)
        if order == 1:
            # gradient of F itself (not F^2)
            out = np.empty(y.shape)
            for i in range(2):
                out[..., i] = (self.F(x, y + s * E[i]) - self.F(x, y - s * E[i])) / (2 * scale)
            return out
        if order == 2:
            out = np.empty(y.shape + (2,))
            f0 = F2(y)
            for i in range(2):
                out[..., i, i] = (F2(y + s * E[i]) - 2 * f0 + F2(y - s * E[i])) / scale**2
            c = (F2(y + s * (E[0] + E[1])) - F2(y + s * (E[0] - E[1]))
                 - F2(y - s * (E[0] - E[1])) + F2(y - s * (E[0] + E[1]))) / (4 * scale**2)
            out[..., 0, 1] = out[..., 1, 0] = c
            return out
        # third derivative: central difference of the analytic-free Hessian
        out = np.empty(y.shape + (2, 2))
        for k in range(2):
            hp = self._fd_hess_at(x, y + s * E[k], r)
            hm = self._fd_hess_at(x, y - s * E[k], r)
            out[..., :, :, k] = (hp - hm) / (2 * scale)[..., None, None]
        return _symmetrize3(out)

    def _fd_hess_at(self, x, y, r):
        s1 = (1e-3 * r)[..., None]
        sc = 1e-3 * r

        def F2(z):
            return self.F(x, z) ** 2

        E = np.eye(2)
        out = np.empty(y.shape + (2,))
        f0 = F2(y)
        for i in range(2):
            out[..., i, i] = (F2(y + s1 * E[i]) - 2 * f0 + F2(y - s1 * E[i])) / sc**2
        c = (F2(y + s1 * (E[0] + E[1])) - F2(y + s1 * (E[0] - E[1]))
             - F2(y - s1 * (E[0] - E[1])) + F2(y - s1 * (E[0] + E[1]))) / (4 * sc**2)
        out[..., 0, 1] = out[..., 1, 0] = c
        return out

    # x-derivatives used by the spray ------------------------------------

    def dF_dx(self, x, y):
        """F_{x^k}(x, y)."""
        x, y = _as2(x), _as2(y)
        return self.lam_grad(x) * _norm(y)[..., None] + np.einsum("...kl,...l->...k", self.drift_jac(x), y)

    def d2F_dxdy(self, x, y):
        """M[..., k, l] = F_{x^k y^l}(x, y)."""
        x, y = _as2(x), _as2(y)
        r = _norm(y)
        if np.any(r == 0):
            raise DegenerateDirection("direction-dependent quantity requested at y = 0")
        u = y / r[..., None]
        return self.lam_grad(x)[..., :, None] * u[..., None, :] + self.drift_jac(x)

    # co-metric -----------------------------------------------------------

    def dual_coefficients(self, x):
        """(A, beta) with F*(x, xi) = sqrt(xi.A xi) + beta.xi."""
        x = _as2(x)
        lam = self.lam(x)
        bt = self.drift(x) / lam[..., None]
        c = 1.0 - np.sum(bt * bt, axis=-1)
        if np.any(c <= 0):
            raise NotPositiveDefinite("Randers drift must satisfy |b| < lam")
        A = (c[..., None, None] * np.eye(2) + _outer(bt)) / (c**2 * lam**2)[..., None, None]
        beta = -bt / (c * lam)[..., None]
        return A, beta


def _outer(v):
    return v[..., :, None] * v[..., None, :]


def _symmetrize3(t):
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    n = t.ndim
    acc = 0
    for p in perms:
        acc = acc + np.transpose(t, tuple(range(n - 3)) + tuple(n - 3 + q for q in p))
    return acc / 6.0


def _check_pd(g):
    tr = g[..., 0, 0] + g[..., 1, 1]
    if np.any(det2(g) <= 0) or np.any(tr <= 0) or not np.all(np.isfinite(g)):
        raise NotPositiveDefinite("fundamental tensor is not positive definite")


# ---------------------------------------------------------------------------
# operations


def eval_metric(m, x, y):
    """F(x, y); zero exactly when y = 0."""
    m.check_chart(x)
    return m.F(x, y)


def fundamental_tensor(m, x, y):
    """g_y = Hess_y(F^2)/2 as an array of shape (..., 2, 2)."""
    m.check_chart(x)
    return m.fundamental_tensor(x, y)


def cartan_tensor(m, x, y):
    """C_y = D^3_y(F^2)/4 as an array of shape (..., 2, 2, 2)."""
    m.check_chart(x)
    return m.cartan_tensor(x, y)


def legendre(m, x, y):
    """Legendre transform y -> g_y(y, .) = F dF/dy; maps 0 to 0."""
    m.check_chart(x)
    x, y = np.broadcast_arrays(_as2(x), _as2(y))
    out = np.zeros(y.shape)
    nz = _norm(y) > 0
    if np.any(nz):
        out[nz] = m.F(x[nz], y[nz])[..., None] * m.dF(x[nz], y[nz])
    return out


def dual_metric(m, x, xi):
    """Co-metric F*(x, xi) = sup_y xi(y)/F(x, y).

    Closed form in analytic mode; in finite-difference mode it is
    evaluated as F(x, legendre_inverse(xi)).
    """
    m.check_chart(x)
    x, xi = _as2(x), _as2(xi)
    if m.derivative_mode == "fd":
        return m.F(x, legendre_inverse(m, x, xi))
    A, beta = m.dual_coefficients(x)
    q = np.einsum("...i,...ij,...j->...", xi, A, xi)
    return np.sqrt(np.maximum(q, 0.0)) + np.sum(beta * xi, axis=-1)


def dual_gradient(m, x, xi):
    """d F*/d xi for xi != 0 (closed form)."""
    A, beta = m.dual_coefficients(x)
    Ax = np.einsum("...ij,...j->...i", A, xi)
    a = np.sqrt(np.einsum("...i,...i->...", xi, Ax))
    if np.any(a == 0):
        raise DegenerateDirection("co-metric gradient requested at xi = 0")
    return Ax / a[..., None] + beta


def dual_fundamental_tensor(m, x, xi):
    """g*_xi = Hess_xi(F*^2)/2, the inverse of g at legendre_inverse(xi)."""
    x, xi = np.broadcast_arrays(_as2(x), _as2(xi))
    A, beta = m.dual_coefficients(x)
    if m.is_riemannian:
        return np.broadcast_to(A, xi.shape + (2,)).copy()
    Ax = np.einsum("...ij,...j->...i", A, xi)
    a = np.sqrt(np.einsum("...i,...i->...", xi, Ax))
    if np.any(a == 0):
        raise DegenerateDirection("dual tensor requested at xi = 0")
    grad = Ax / a[..., None] + beta
    Fs = a + np.sum(beta * xi, axis=-1)
    hess = (A - _outer(Ax) / (a**2)[..., None, None]) / a[..., None, None]
    return _outer(grad) + Fs[..., None, None] * hess


def legendre_inverse(m, x, xi, max_iter=50, tol=1e-10):
    """Vector y with legendre(y) = xi, by damped Newton on J(y) = F^2/2 - xi(y).

    The Newton step solves g_y s = xi - L(y); Armijo backtracking on the
    convex merit J keeps strongly anisotropic starts stable.
    """
    m.check_chart(x)
    x, xi = np.broadcast_arrays(_as2(x), _as2(xi))
    x = np.array(x, dtype=float)
    xi = np.array(xi, dtype=float)
    out = np.zeros(xi.shape)
    act = _norm(xi) > 0
    if not np.any(act):
        return out
    xa, ka = x[act], xi[act]
    lam = m.lam(xa)
    y = ka / (lam**2)[:, None]
    scale = np.maximum(_norm(ka), 1e-300)

    def merit(z):
        return 0.5 * m.F(xa, z) ** 2 - np.sum(ka * z, axis=-1)

    J = merit(y)
    for _ in range(max_iter):
        res = legendre(m, xa, y) - ka
        err = _norm(res) / scale
        if np.all(err <= tol):
            out[act] = y
            return out
        g = m.fundamental_tensor(xa, y)
        step = -np.einsum("...ij,...j->...i", inv2(g), res)
        slope = np.sum(res * step, axis=-1)
        t = np.ones(len(y))
        todo = err > tol
        for _ in range(30):
            trial = y + t[:, None] * step
            bad = _norm(trial) == 0
            trial[bad] = y[bad]
            Jt = merit(trial)
            fail = todo & (Jt > J + 1e-4 * t * slope + 1e-15 * np.abs(J))
            if not np.any(fail):
                break
            t[fail] *= 0.5
        y = np.where(todo[:, None], y + t[:, None] * step, y)
        J = merit(y)
    res = legendre(m, xa, y) - ka
    if np.any(_norm(res) / scale > max(tol, 1e-9)):
        raise NoConvergence("Legendre inverse did not converge")
    out[act] = y
    return out


def angle_grid(n=4096):
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(t), np.sin(t)])


@dataclass(frozen=True)
class UniformConstants:
    lam: float
    kappa: float
    kappa_star: float
    region: Ball
    samples: int

    def __post_init__(self):
        if not (self.kappa_star <= 1.0 + 1e-12 <= self.kappa + 2e-12):
            raise ValueError("kappa_star <= 1 <= kappa violated")


def reversibility(m, region, samples=64, n_angles=4096, seed=0):
    """Sampled sup of F(x,y)/F(x,-y) over the region and unit directions."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if m.is_riemannian:
        return 1.0
    pts = region.sample(samples, seed)
    Y = angle_grid(n_angles)
    best = 1.0
    for p in pts:
        X = np.broadcast_to(p, Y.shape)
        best = max(best, float(np.max(m.F(X, Y) / m.F(X, -Y))))
    return best


def _ratio_extremes(m, p, n):
    """min and max of g_V(W,W)/F^2(W) over an n x n angle grid at p."""
    V = angle_grid(n)
    W = angle_grid(n)
    X = np.broadcast_to(p, V.shape)
    g = m.fundamental_tensor(X, V)  # (n,2,2)
    F2 = m.F(X, W) ** 2  # (n,)
    q = np.einsum("vij,wi,wj->vw", g, W, W) / F2[None, :]
    return q


def uniform_constants(m, region, samples=16, n_angles=512, seed=0):
    """Sampled uniform smoothness kappa and convexity kappa_star.

    A coarse angle grid locates the extremes, which are then polished on a
    local grid four times finer around each extremal pair.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    lam = reversibility(m, region, samples, seed=seed)
    if m.is_riemannian:
        return UniformConstants(1.0, 1.0, 1.0, region, samples)
    kmax, kmin = 1.0, 1.0
    pts = region.sample(samples, seed)
    for p in pts:
        q = _ratio_extremes(m, p, n_angles)
        for pick, better in ((np.argmax, max), (np.argmin, min)):
            iv, iw = np.unravel_index(pick(q), q.shape)
            dt = 2 * np.pi / n_angles
            tv = 2 * np.pi * iv / n_angles + np.linspace(-dt, dt, 65)
            tw = 2 * np.pi * iw / n_angles + np.linspace(-dt, dt, 65)
            V = np.column_stack([np.cos(tv), np.sin(tv)])
            W = np.column_stack([np.cos(tw), np.sin(tw)])
            g = m.fundamental_tensor(np.broadcast_to(p, V.shape), V)
            F2 = m.F(np.broadcast_to(p, W.shape), W) ** 2
            qq = np.einsum("vij,wi,wj->vw", g, W, W) / F2[None, :]
            val = float(qq.max() if pick is np.argmax else qq.min())
            if pick is np.argmax:
                kmax = better(kmax, val)
            else:
                kmin = better(kmin, val)
    return UniformConstants(lam, kmax, kmin, region, samples)


def gradient_vector(m, x, xi):
    """legendre_inverse for whole fields: F*(xi) dF*/dxi in closed form.

    Falls back to the Newton solver in finite-difference mode.  Zero
    covectors map to the zero vector.
    """
    x, xi = np.broadcast_arrays(_as2(x), _as2(xi))
    if m.derivative_mode == "fd":
        return legendre_inverse(m, x, xi)
    out = np.zeros(xi.shape)
    nz = _norm(xi) > 0
    if np.any(nz):
        xs, ks = x[nz], xi[nz]
        out[nz] = dual_metric(m, xs, ks)[:, None] * dual_gradient(m, xs, ks)
    return out
