"""Distances, balls, polar volume densities and the comparison checkers.

Forward distances d(x0, .) solve F*(x, dd) = 1 with a factored
semi-Lagrangian fast-sweeping scheme: around each node the eight
neighbour triangles are searched for the best entry point, with the
metric sampled at edge midpoints and the solution split as
d = d0 + w where d0 is the exact distance of the metric frozen at x0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .curvature import rk4_step
from .errors import BallClipped, CutLocusReached, GeodesicEscape, NoConvergence
from .grid import Grid2D, ScalarField
from .metric import angle_grid, dual_metric, gradient_vector
from .report import InequalityReport

DIM = 2
DI = np.array([1, 1, 0, -1, -1, -1, 0, 1])
DJ = np.array([0, 1, 1, 1, 0, -1, -1, -1])
_BIG = 1e300
# coefficient stored at out-of-chart edge midpoints: any path through them is
# longer than every in-chart path
_WALL = 1e250


@dataclass
class DistanceField:
    x0: tuple
    grid: Grid2D
    values: np.ndarray
    direction: str
    metric: object
    stats: dict = field(default_factory=dict)

    def at(self, pts):
        """Bilinear interpolation of d at arbitrary points."""
        return self.grid.interpolate(self.values, pts)

    def to_csv(self, path):
        X, Y = self.grid.mesh()
        with open(path, "w") as fh:
            fh.write("x,y,d\n")
            for a, b, c in zip(X.ravel(), Y.ravel(), self.values.ravel()):
                fh.write(f"{a!r},{b!r},{c!r}\n")


def _midpoint_coefficients(m, grid):
    P = grid.points()
    lam = np.empty((8,) + grid.shape)
    b1 = np.empty_like(lam)
    b2 = np.empty_like(lam)
    for k in range(8):
        q = P + 0.5 * grid.h * np.array([DI[k], DJ[k]])
        inside = m.in_chart(q)
        qs = np.where(inside[..., None], q, 0.0)
        bb = m.drift(qs)
        lam[k] = np.where(inside, m.lam(qs), _WALL)
        b1[k] = np.where(inside, bb[..., 0], 0.0)
        b2[k] = np.where(inside, bb[..., 1], 0.0)
    return np.ascontiguousarray(lam), np.ascontiguousarray(b1), np.ascontiguousarray(b2)


def _node_coefficients(m, grid):
    P = grid.points()
    inside = m.in_chart(P)
    Ps = np.where(inside[..., None], P, 0.0)
    bb = m.drift(Ps)
    lam = np.where(inside, m.lam(Ps), _WALL)
    return (np.ascontiguousarray(lam), np.ascontiguousarray(np.where(inside, bb[..., 0], 0.0)),
            np.ascontiguousarray(np.where(inside, bb[..., 1], 0.0)), inside)


def distance_field(m, x0, grid, direction="forward", scheme="semi-lagrangian",
                   factored=True, tol=1e-12, maxit=500):
    """Forward distance d(x0, .) or backward distance d(., x0) on ``grid``.

    The backward field is the forward field of the reverse metric
    F(x, -y).  ``scheme`` is ``"semi-lagrangian"`` (default) or
    ``"lax-friedrichs"``.
    """
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    mm = m if direction == "forward" else m.reverse()
    j0, i0 = grid.index_of(x0)
    x0 = np.asarray(x0, dtype=float)
    m.check_chart(x0)
    fixed = np.zeros(grid.shape, dtype=np.uint8)
    P = grid.points()
    inside = m.in_chart(P)
    fixed[~inside] = 1
    if scheme == "semi-lagrangian":
        lam, b1, b2 = _midpoint_coefficients(mm, grid)
        if factored:
            l0 = float(mm.lam(x0))
            c1, c2 = (float(v) for v in mm.drift(x0))
        else:
            l0 = c1 = c2 = 0.0
        w = np.full(grid.shape, _BIG)
        w[j0, i0] = 0.0
        fixed[j0, i0] = 1
        it, err = kernels.sweep_semi_lagrangian(
            w, fixed, grid.origin[0], grid.origin[1], grid.h, x0[0], x0[1],
            l0, c1, c2, lam, b1, b2, tol, maxit)
        Z = P - x0
        d = w + l0 * np.hypot(Z[..., 0], Z[..., 1]) + c1 * Z[..., 0] + c2 * Z[..., 1]
        d[w > 1e200] = np.inf
    elif scheme == "lax-friedrichs":
        lam, b1, b2, _ = _node_coefficients(mm, grid)
        Z = P - x0
        exact = mm.F(np.broadcast_to(x0, Z.shape), Z)
        near = np.hypot(Z[..., 0], Z[..., 1]) <= 5 * grid.h + 1e-12
        span = grid.h * max(grid.nx, grid.ny)
        u = np.full(grid.shape, 10 * span * float(np.max(lam[inside])))
        u[near] = exact[near]
        fixed[near] = 1
        it, err = kernels.sweep_lax_friedrichs(u, fixed, lam, b1, b2, grid.h, tol, maxit)
        d = u
        d[~inside] = np.inf
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    d[~inside] = np.inf
    if it >= maxit and err > max(tol, 1e-8):
        raise NoConvergence(f"eikonal sweep stalled at change {err:.3e}")
    return DistanceField(tuple(float(v) for v in x0), grid, d, direction, m,
                         {"sweeps": int(it), "last_change": float(err), "scheme": scheme,
                          "backend": kernels.backend()})


def distance_from_set(m, grid, init, direction="forward", tol=1e-12, maxit=500):
    """Unfactored distance from a node set with prescribed initial values.

    ``init`` is an array with finite values on the source nodes and inf
    elsewhere; the result is min over sources of init(s) + d(s, .).
    """
    mm = m if direction == "forward" else m.reverse()
    lam, b1, b2 = _midpoint_coefficients(mm, grid)
    src = np.isfinite(init)
    inside = m.in_chart(grid.points())
    w = np.where(src, init, _BIG)
    fixed = (src | ~inside).astype(np.uint8)
    it, err = kernels.sweep_semi_lagrangian(
        w, fixed, grid.origin[0], grid.origin[1], grid.h, 0.0, 0.0, 0.0, 0.0, 0.0,
        lam, b1, b2, tol, maxit)
    w[w > 1e200] = np.inf
    w[~inside] = np.inf
    return w


def eikonal_residual(df, exclude=5):
    """|F*(x, dd) - 1| at interior nodes with central differences.

    Nodes within ``exclude`` cells of the base point or next to an
    unreached node are dropped.
    """
    g = df.grid
    d = df.values
    p1 = np.full(d.shape, np.nan)
    p2 = np.full(d.shape, np.nan)
    p1[:, 1:-1] = (d[:, 2:] - d[:, :-2]) / (2 * g.h)
    p2[1:-1, :] = (d[2:, :] - d[:-2, :]) / (2 * g.h)
    ok = np.isfinite(p1) & np.isfinite(p2)
    Z = g.points() - np.asarray(df.x0)
    ok &= np.max(np.abs(Z), axis=-1) > exclude * g.h
    res = np.full(d.shape, np.nan)
    mm = df.metric if df.direction == "forward" else df.metric.reverse()
    P = g.points()
    res[ok] = np.abs(dual_metric(mm, P[ok], np.stack([p1[ok], p2[ok]], axis=-1)) - 1.0)
    return res


# ---------------------------------------------------------------------------
# geodesics


def geodesic_shoot(m, x, v, T, dt):
    """RK4 geodesic from (x, v) up to time T; returns (points, velocities)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ValueError("initial velocity must be nonzero")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(np.ceil(T / dt - 1e-9))
    step = T / n if n else 0.0
    m.check_chart(x)
    xs, vs = [x], [v]
    for _ in range(n):
        x, v = rk4_step(m, x, v, step)
        if not np.all(m.in_chart(x)):
            raise GeodesicEscape("geodesic left the chart")
        xs.append(x)
        vs.append(v)
    return np.array(xs), np.array(vs)


def _shoot_rays(m, x0, dirs, r_list, ds):
    """Unit-speed geodesics from x0 along ``dirs``; states at each r in r_list."""
    x0 = np.asarray(x0, dtype=float)
    X = np.broadcast_to(x0, dirs.shape).copy()
    V = dirs / m.F(X, dirs)[:, None]
    out_x, out_v = [], []
    t = 0.0
    for r in r_list:
        n = int(np.ceil((r - t) / ds - 1e-9))
        for _ in range(n):
            X, V = rk4_step(m, X, V, (r - t) / n)
            if not np.all(m.in_chart(X)):
                raise GeodesicEscape("polar ray left the chart")
        t = r
        out_x.append(X.copy())
        out_v.append(V.copy())
    return np.array(out_x), np.array(out_v)


@dataclass
class PolarDensity:
    x0: tuple
    r: np.ndarray
    theta: np.ndarray
    sigma: np.ndarray  # (nr, ntheta)
    valid: np.ndarray
    points: np.ndarray  # (nr, ntheta, 2) endpoints

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("r,theta,sigma\n")
            for a, r in enumerate(self.r):
                for b, t in enumerate(self.theta):
                    fh.write(f"{r!r},{t!r},{self.sigma[a, b]!r}\n")


def polar_density(m, mu, x0, r_list, theta_list, df=None, dtheta=1e-4, ds=2e-3, strict=True):
    """sigma(x0, r, theta) with dm = sigma dr dtheta.

    Rays start with velocity e(theta)/F(x0, e(theta)), so r is arclength.
    The Jacobian of the polar map uses a central difference in theta.
    When a distance field is supplied, samples whose endpoint distance
    differs from r by more than 3h are treated as past the cut locus.
    """
    r_list = np.asarray(r_list, dtype=float)
    th = np.asarray(theta_list, dtype=float)
    if np.any(np.diff(r_list) <= 0) or r_list[0] <= 0:
        raise ValueError("r_list must be positive and increasing")
    allth = np.concatenate([th, th + dtheta, th - dtheta])
    dirs = np.column_stack([np.cos(allth), np.sin(allth)])
    X, V = _shoot_rays(m, x0, dirs, r_list, ds)
    n = len(th)
    x_c, v_c = X[:, :n], V[:, :n]
    dth = (X[:, n:2 * n] - X[:, 2 * n:]) / (2 * dtheta)
    jac = np.abs(v_c[..., 0] * dth[..., 1] - v_c[..., 1] * dth[..., 0])
    sigma = np.exp(mu.phi(x_c)) * jac
    valid = np.ones(sigma.shape, dtype=bool)
    if df is not None:
        dd = df.at(x_c)
        valid = np.abs(dd - r_list[:, None]) <= 3 * df.grid.h
        if strict and not np.all(valid):
            bad = np.argwhere(~valid)[0]
            raise CutLocusReached(
                f"sample r={r_list[bad[0]]:.4g}, theta={th[bad[1]]:.4g} fails the minimality test")
    return PolarDensity(tuple(np.asarray(x0, dtype=float)), r_list, th, sigma, valid, x_c)


def laplacian_polar(m, mu, x0, r_list, theta_list, dr=1e-3, **kw):
    """Delta r = d/dr log sigma at polar samples, by central differences."""
    r_list = np.asarray(r_list, dtype=float)
    rr = np.sort(np.concatenate([r_list - dr, r_list + dr]))
    pd = polar_density(m, mu, x0, rr, theta_list, **kw)
    ls = np.log(pd.sigma)
    lo, hi = ls[0::2], ls[1::2]
    return (hi - lo) / (2 * dr)


# ---------------------------------------------------------------------------
# balls


@dataclass
class BallMask:
    """Forward ball {d < R}: node mask plus fractional dual-cell weights."""

    grid: Grid2D
    R: float
    mask: np.ndarray
    weights: np.ndarray
    clipped: bool

    def volume(self, mu):
        P = self.grid.points()
        dens = np.zeros(self.grid.shape)
        nz = self.weights > 0
        dens[nz] = np.exp(mu.phi(P[nz]))
        return float(np.sum(self.weights * dens) * self.grid.h**2)

    def integrate(self, f, mu):
        """Integral of a node field over the ball against mu."""
        P = self.grid.points()
        nz = self.weights > 0
        return float(np.sum(self.weights[nz] * f[nz] * np.exp(mu.phi(P[nz]))) * self.grid.h**2)


def forward_ball(df, R, supersample=8):
    """Node mask and fractional weights of the forward ball of radius R.

    Dual cells whose 3x3 neighbourhood straddles the level R are
    supersampled with bilinear interpolation of d.
    """
    g = df.grid
    d = np.where(np.isfinite(df.values), df.values, 1e300)
    mask = d < R
    weights = mask.astype(float)
    lo = ndimage.minimum_filter(d, size=3, mode="nearest")
    hi = ndimage.maximum_filter(d, size=3, mode="nearest")
    edge = (lo < R) & (hi >= R)
    if np.any(edge):
        off = (np.arange(supersample) + 0.5) / supersample - 0.5
        ox, oy = np.meshgrid(off * g.h, off * g.h)
        P = g.points()[edge]
        sub = P[:, None, :] + np.stack([ox.ravel(), oy.ravel()], axis=-1)[None]
        ds = g.interpolate(d, sub)
        weights[edge] = np.mean(ds < R, axis=1)
    clipped = bool(np.any(weights[g.boundary_mask()] > 0))
    return BallMask(g, float(R), mask, weights, clipped)


def ball_volume(df, R, mu, allow_clipped=False):
    b = forward_ball(df, R)
    if b.clipped and not allow_clipped:
        raise BallClipped(f"ball of radius {R} touches the grid boundary")
    return b.volume(mu)


# ---------------------------------------------------------------------------
# Laplacian of the distance function, weak form


def _tent_kernels(a_cells):
    n = a_cells
    t = np.arange(-n, n + 1) / n
    phi1 = np.maximum(0.0, 1.0 - np.abs(t))
    # tent slope at nodes; at the kinks use the mean of the one-sided slopes
    dphi1 = -np.sign(t) / n
    dphi1[0], dphi1[-1] = 0.5 / n, -0.5 / n
    K0 = np.outer(phi1, phi1)
    Kx = np.outer(phi1, dphi1)  # rows: y offset, cols: x offset
    Ky = np.outer(dphi1, phi1)
    return K0, Kx, Ky


def laplacian_weak(df, mu, tent_cells=5, exclude_cells=5):
    """Delta r from the weak form against tent test functions.

    At each node p, Delta r(p) ~ -int dphi_p(grad r) dm / int phi_p dm
    with phi_p a tensor tent of half-width ``tent_cells`` grid steps.
    Tents whose support comes within ``exclude_cells`` steps of the base
    point, leaves the reached region or touches the grid edge give NaN.
    """
    g = df.grid
    d = df.values
    h = g.h
    fin = np.isfinite(d)
    dd = np.where(fin, d, 0.0)
    p1 = np.zeros(d.shape)
    p2 = np.zeros(d.shape)
    p1[:, 1:-1] = (dd[:, 2:] - dd[:, :-2]) / (2 * h)
    p2[1:-1, :] = (dd[2:, :] - dd[:-2, :]) / (2 * h)
    P = g.points()
    good = fin.copy()
    good[:, [0, -1]] = False
    good[[0, -1], :] = False
    good &= ndimage.minimum_filter(fin.astype(np.uint8), size=3, mode="constant", cval=0).astype(bool)
    mm = df.metric if df.direction == "forward" else df.metric.reverse()
    V = np.zeros(d.shape + (2,))
    V[good] = gradient_vector(mm, P[good], np.stack([p1[good], p2[good]], axis=-1))
    dens = np.zeros(d.shape)
    dens[fin] = np.exp(mu.phi(P[fin]))
    K0, Kx, Ky = _tent_kernels(tent_cells)
    num = ndimage.correlate(V[..., 0] * dens, Kx / h, mode="constant") + ndimage.correlate(
        V[..., 1] * dens, Ky / h, mode="constant")
    den = ndimage.correlate(dens, K0, mode="constant")
    out = np.full(d.shape, np.nan)
    size = 2 * tent_cells + 1
    ok = ndimage.minimum_filter(good.astype(np.uint8), size=size, mode="constant", cval=0).astype(bool)
    near = ndimage.minimum_filter(np.where(fin, d, np.inf), size=size, mode="nearest")
    ok &= near >= exclude_cells * h
    out[ok] = -num[ok] / den[ok]
    return ScalarField(g, out)


@dataclass
class DistanceLaplacian:
    """Delta r by two methods: on a polar lattice and on grid nodes."""

    polar: np.ndarray  # (nr, ntheta)
    r: np.ndarray
    theta: np.ndarray
    points: np.ndarray
    weak: ScalarField

    def weak_at_polar(self):
        g = self.weak.grid
        return g.interpolate(np.nan_to_num(self.weak.values, nan=np.nan), self.points)


def laplacian_of_distance(df, mu, r_list=None, theta_list=None, tent_cells=5):
    """Both Delta r estimates: (a) d/dr log sigma, (b) weak divergence on the grid."""
    m = df.metric if df.direction == "forward" else df.metric.reverse()
    if r_list is None:
        rmax = 0.8 * float(np.nanmax(np.where(np.isfinite(df.values), df.values, np.nan)))
        r_list = np.linspace(10 * df.grid.h, rmax / 2, 8)
    if theta_list is None:
        theta_list = 2 * np.pi * np.arange(32) / 32
    lp = laplacian_polar(m, mu, df.x0, r_list, theta_list, df=None)
    pd = polar_density(m, mu, df.x0, r_list, theta_list, df=df, strict=True)
    weak = laplacian_weak(df, mu, tent_cells)
    return DistanceLaplacian(lp, np.asarray(r_list), np.asarray(theta_list), pd.points, weak)


# ---------------------------------------------------------------------------
# comparison checkers


def _reach_grid(m, x0, rmax, h, margin=6):
    """Grid around x0 that contains the forward ball of radius rmax."""
    th = 2 * np.pi * np.arange(64) / 64
    X, _ = _shoot_rays(m, x0, np.column_stack([np.cos(th), np.sin(th)]), [rmax], 5e-3)
    ext = float(np.max(np.abs(X[0] - np.asarray(x0)))) * 1.05 + margin * h
    return Grid2D.centered(x0, ext, h)


def comparison_rhs(r, K, delta, n=DIM):
    return n / r + r * (K + delta**2) / 3


def check_laplacian_comparison(m, mu, x0, bounds, r1, r2, h=0.01, n_theta=64, n_r=16, tol=0.05, df=None):
    """Pointwise and integrated Laplacian comparison along sampled rays.

    Method (a) values on rays r in [r1, r2] and method (b) grid values in
    the same annulus are compared with n/r + r(K + delta^2)/3; the
    integrated form uses log sigma(r2) - log sigma(r1).
    """
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    K, delta = bounds.K, bounds.delta
    if df is None:
        df = distance_field(m, x0, _reach_grid(m, x0, r2, h), "forward")
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    rs = np.linspace(r1, r2, n_r)
    lap = laplacian_polar(m, mu, x0, rs, th)
    rhs = comparison_rhs(rs, K, delta)[:, None]
    rel = (lap - rhs) / rhs
    worst_a = float(np.max(rel))
    weak = laplacian_weak(df, mu)
    dv = df.values
    ann = np.isfinite(weak.values) & (dv >= max(r1, 5 * df.grid.h)) & (dv <= r2)
    if np.any(ann):
        rhs_b = comparison_rhs(dv[ann], K, delta)
        worst_b = float(np.max((weak.values[ann] - rhs_b) / rhs_b))
    else:
        worst_b = float("nan")
    pd = polar_density(m, mu, x0, [r1, r2], th, df=df, strict=True)
    integ = np.log(pd.sigma[1] / pd.sigma[0])
    irhs = DIM * np.log(r2 / r1) + (K + delta**2) * (r2**2 - r1**2) / 6
    worst_i = float(np.max(integ) - irhs)
    worst = max(worst_a, worst_b if np.isfinite(worst_b) else -np.inf)
    violated = worst > tol or worst_i > tol * abs(irhs)
    return InequalityReport(
        name="laplacian_comparison",
        lhs=float(np.max(lap * rs[:, None])),
        rhs_shape="n/r + r(K+delta^2)/3",
        empirical_constant=float(1 + worst_a),
        verdict="violated" if violated else "consistent",
        rhs=None,
        details={
            "K": K, "delta": delta, "r1": r1, "r2": r2, "tolerance": tol,
            "max_relative_excess_polar": worst_a, "max_relative_excess_grid": worst_b,
            "integrated_lhs_max": float(np.max(integ)), "integrated_rhs": float(irhs),
            "integrated_margin": float(irhs - np.max(integ)),
            "grid_nodes_checked": int(np.sum(ann)), "h": df.grid.h,
        },
    )


def check_volume_comparison(m, mu, x0, bounds, r1, r2, h=0.01, n_theta=64, tol=0.05, df=None):
    """sigma-ratio (exponent n) and ball-ratio (exponent n+1) comparisons."""
    if not 0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    K, delta = bounds.K, bounds.delta
    if df is None:
        df = distance_field(m, x0, _reach_grid(m, x0, r2, h), "forward")
    expo = np.exp((K + delta**2) * (r2**2 - r1**2) / 6)
    th = 2 * np.pi * np.arange(n_theta) / n_theta
    pd = polar_density(m, mu, x0, [r1, r2], th, df=df, strict=True)
    sig_ratio = float(np.max(pd.sigma[1] / pd.sigma[0]))
    sig_bound = float((r2 / r1) ** DIM * expo)
    v1 = ball_volume(df, r1, mu)
    v2 = ball_volume(df, r2, mu)
    ball_ratio = v2 / v1
    ball_bound = float((r2 / r1) ** (DIM + 1) * expo)
    common = {"K": K, "delta": delta, "r1": r1, "r2": r2, "tolerance": tol, "h": df.grid.h}
    return [
        InequalityReport("volcoe", sig_ratio, "(r2/r1)^n exp((K+delta^2)(r2^2-r1^2)/6)",
                         sig_ratio / sig_bound, "violated" if sig_ratio > sig_bound * (1 + tol) else "consistent",
                         rhs=sig_bound, details={**common, "margin": sig_bound - sig_ratio}),
        InequalityReport("volcom", ball_ratio, "(r2/r1)^(n+1) exp((K+delta^2)(r2^2-r1^2)/6)",
                         ball_ratio / ball_bound, "violated" if ball_ratio > ball_bound * (1 + tol) else "consistent",
                         rhs=ball_bound, details={**common, "margin": ball_bound - ball_ratio,
                                                  "volume_r1": v1, "volume_r2": v2}),
    ]


def doubling_constant(m, mu, x0, R, bounds, h=0.01, levels=4, df=None, tol=0.05):
    """max over dyadic r <= R/2 of m(B_2r)/m(B_r), against 2^(n+1) exp((K+delta^2)R^2/6)."""
    K, delta = bounds.K, bounds.delta
    if df is None:
        df = distance_field(m, x0, _reach_grid(m, x0, R, h), "forward")
    series = []
    r = R / 2
    for _ in range(levels):
        if r < 8 * df.grid.h:
            break
        series.append((r, ball_volume(df, 2 * r, mu) / ball_volume(df, r, mu)))
        r /= 2
    const = max(c for _, c in series)
    bound = 2 ** (DIM + 1) * np.exp((K + delta**2) * R**2 / 6)
    return InequalityReport(
        "doubling", const, "2^(n+1) exp((K+delta^2)R^2/6)", const,
        "violated" if const > bound * (1 + tol) else "consistent",
        scale_series=series, rhs=float(bound),
        details={"K": K, "delta": delta, "R": R, "margin": float(bound - const), "h": df.grid.h},
    )
