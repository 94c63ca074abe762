"""Spray-based curvature: geodesic coefficients, Ricci trace, distortion,
S-curvature and weighted Ricci curvature, plus sampled regional bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirection, GeodesicEscape, InvalidN
from .grid import Ball
from .metric import angle_grid, det2, inv2

DIM = 2


def _as2(v):
    return np.asarray(v, dtype=float)


def spray_coefficients(m, x, y):
    """G^i = g^{il}([F^2]_{x^k y^l} y^k - [F^2]_{x^l}) / 4."""
    x, y = np.broadcast_arrays(_as2(x), _as2(y))
    if np.any(np.hypot(y[..., 0], y[..., 1]) == 0):
        raise DegenerateDirection("spray requested at y = 0")
    F = m.F(x, y)
    Fy = m.dF(x, y)
    Fx = m.dF_dx(x, y)
    Fxy = m.d2F_dxdy(x, y)
    mixed = 2 * (Fx[..., :, None] * Fy[..., None, :] + F[..., None, None] * Fxy)
    rhs = np.einsum("...kl,...k->...l", mixed, y) - 2 * F[..., None] * Fx
    ginv = inv2(m.fundamental_tensor(x, y))
    return 0.25 * np.einsum("...il,...l->...i", ginv, rhs)


def geodesic_rhs(m, x, v):
    return -2 * spray_coefficients(m, x, v)


def rk4_step(m, x, v, dt):
    k1x, k1v = v, geodesic_rhs(m, x, v)
    k2x, k2v = v + 0.5 * dt * k1v, geodesic_rhs(m, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = v + 0.5 * dt * k2v, geodesic_rhs(m, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = v + dt * k3v, geodesic_rhs(m, x + dt * k3x, v + dt * k3v)
    return (
        x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
        v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v),
    )


def integrate_geodesic(m, x, v, dt, n):
    """RK4 states at times 0, dt, ..., n*dt; arrays of shape (n+1, ..., 2)."""
    x, v = np.broadcast_arrays(_as2(x), _as2(v))
    xs, vs = [x.copy()], [v.copy()]
    for _ in range(n):
        x, v = rk4_step(m, x, v, dt)
        if not np.all(m.in_chart(x)):
            raise GeodesicEscape("geodesic left the chart")
        xs.append(x)
        vs.append(v)
    return np.stack(xs), np.stack(vs)


# ---------------------------------------------------------------------------
# spray derivatives by central differences with one Richardson level


def _deriv(f, p, step):
    """d f / d p^k stacked on a new last axis; ``step`` has p's leading shape."""
    E = np.eye(2)
    out = []
    for k in range(2):
        e = step[..., None] * E[k]
        d1 = f(p + e) - f(p - e)
        d2 = f(p + 0.5 * e) - f(p - 0.5 * e)
        s = step.reshape(step.shape + (1,) * (d1.ndim - step.ndim))
        out.append((4 * d2 / s - d1 / (2 * s)) / 3)
    return np.stack(out, axis=-1)


def spray_jets(m, x, y, hx=1e-4, hy=1e-4):
    """Spray and its derivatives at (x, y).

    Returns G, Gx, Gy, Gxy, Gyy with Gx[..., i, k] = dG^i/dx^k,
    Gy[..., i, k] = dG^i/dy^k, Gxy[..., i, k] = y^j d2G^i/dx^j dy^k and
    Gyy[..., i, j, k] = d2G^i/dy^j dy^k.
    """
    x, y = np.broadcast_arrays(_as2(x), _as2(y))
    r = np.hypot(y[..., 0], y[..., 1])
    if np.any(r == 0):
        raise DegenerateDirection("spray requested at y = 0")
    sx = np.full(r.shape, hx)
    sy = hy * r
    yn = y / r[..., None]

    def G_of_y(b):
        return spray_coefficients(m, x, b)

    def along_y(b):
        # y^j dG/dx^j at (x, b), direction y held fixed
        d1 = spray_coefficients(m, x + hx * yn, b) - spray_coefficients(m, x - hx * yn, b)
        d2 = spray_coefficients(m, x + 0.5 * hx * yn, b) - spray_coefficients(m, x - 0.5 * hx * yn, b)
        return r[..., None] * (4 * d2 / hx - d1 / (2 * hx)) / 3

    G = G_of_y(y)
    Gx = _deriv(lambda a: spray_coefficients(m, a, y), x, sx)
    Gy = _deriv(G_of_y, y, sy)
    Gxy = _deriv(along_y, y, sy)
    Gyy = _deriv(lambda b: _deriv(G_of_y, b, sy), y, sy)
    return G, Gx, Gy, Gxy, Gyy


def ricci(m, x, y):
    """Ric(y) = trace of the spray curvature R^i_k; 2-homogeneous in y."""
    G, Gx, Gy, Gxy, Gyy = spray_jets(m, x, y)
    Rii = (
        2 * np.einsum("...ii->...", Gx)
        - np.einsum("...ii->...", Gxy)
        + 2 * np.einsum("...j,...iji->...", G, Gyy)
        - np.einsum("...ij,...ji->...", Gy, Gy)
    )
    return Rii


def gauss_curvature_conformal(m, x, h=1e-4):
    """-Laplacian(log lam)/lam^2 for a conformally flat Riemannian model."""
    x = _as2(x)
    E = np.eye(2)
    L = np.log(m.lam(x))
    lap = sum(np.log(m.lam(x + h * E[k])) - 2 * L + np.log(m.lam(x - h * E[k])) for k in range(2)) / h**2
    return -lap / m.lam(x) ** 2


# ---------------------------------------------------------------------------
# distortion and S-curvature


def distortion(m, mu, x, y):
    """tau = log(sqrt(det g_y) / exp(phi))."""
    return 0.5 * np.log(det2(m.fundamental_tensor(x, y))) - mu.phi(x)


def _tau_stencil(m, mu, x, y, ds=1e-3):
    """tau at geodesic times -2dt..2dt, with dt = ds / F(x, y)."""
    x, y = np.broadcast_arrays(_as2(x), _as2(y))
    if np.any(np.hypot(y[..., 0], y[..., 1]) == 0):
        raise DegenerateDirection("S-curvature requested at y = 0")
    dt = ds / m.F(x, y)
    dtv = dt[..., None]
    taus = {0: distortion(m, mu, x, y)}
    for sign in (1, -1):
        p, v = x, y
        for k in (1, 2):
            p, v = rk4_step(m, p, v, sign * dtv)
            if not np.all(m.in_chart(p)):
                raise GeodesicEscape("geodesic left the chart inside the differencing window")
            taus[sign * k] = distortion(m, mu, p, v)
    return taus, dt


def s_curvature(m, mu, x, y, ds=1e-3):
    """S(x, y) = d/dt tau along the geodesic through (x, y)."""
    t, dt = _tau_stencil(m, mu, x, y, ds)
    return (-t[2] + 8 * t[1] - 8 * t[-1] + t[-2]) / (12 * dt)


def s_curvature_rate(m, mu, x, y, ds=1e-3):
    """Second derivative of tau along the geodesic."""
    t, dt = _tau_stencil(m, mu, x, y, ds)
    return (-t[2] + 16 * t[1] - 30 * t[0] + 16 * t[-1] - t[-2]) / (12 * dt**2)


def s_curvature_pair(m, mu, x, y, ds=1e-3):
    """(S, S-dot) sharing one geodesic stencil."""
    t, dt = _tau_stencil(m, mu, x, y, ds)
    S = (-t[2] + 8 * t[1] - 8 * t[-1] + t[-2]) / (12 * dt)
    Sd = (-t[2] + 16 * t[1] - 30 * t[0] + 16 * t[-1] - t[-2]) / (12 * dt**2)
    return S, Sd


def weighted_ricci_inf(m, mu, x, y):
    return ricci(m, x, y) + s_curvature_rate(m, mu, x, y)


def weighted_ricci_n(m, mu, x, y, N):
    if N == DIM:
        raise InvalidN("weighted Ricci curvature needs N != 2")
    S, Sd = s_curvature_pair(m, mu, x, y)
    return ricci(m, x, y) + Sd - S**2 / (N - DIM)


@dataclass(frozen=True)
class CurvatureBounds:
    k_lower: float
    delta: float
    region: Ball
    samples: int
    directions: int

    @property
    def K(self):
        """Nonnegative lower-bound constant with Ric_inf >= -K F^2."""
        return max(0.0, -self.k_lower)

    def as_dict(self):
        return {
            "k_lower": self.k_lower, "K": self.K, "delta": self.delta,
            "region": {"center": list(self.region.center), "radius": self.region.radius},
            "samples": self.samples, "directions": self.directions,
        }


def curvature_bounds(m, mu, region, samples=64, directions=32, seed=0):
    """Sampled min of Ric_inf over F-unit vectors and max of |S|/F."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    # interior low-discrepancy points plus a ring on the rim, where |S| peaks
    rim = region.radius * angle_grid(max(8, directions // 2)) + np.asarray(region.center)
    pts = np.vstack([region.sample(samples, seed), rim])
    # the sample disk may poke out of a bounded chart; keep points inside
    pts = pts[m.in_chart(pts)]
    U = angle_grid(directions)
    X = np.repeat(pts, directions, axis=0)
    Y = np.tile(U, (len(pts), 1))
    Y = Y / m.F(X, Y)[:, None]
    S, Sd = s_curvature_pair(m, mu, X, Y)
    ric = ricci(m, X, Y) + Sd
    return CurvatureBounds(float(ric.min()), float(np.max(np.abs(S))), region, len(pts), directions)
