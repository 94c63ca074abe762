"""Field calculus and the nonlinear heat flow on a rectangular grid.

The Finsler Laplacian is discretized in conservative form.  On the face
between two neighbouring nodes the normal derivative is a one-cell
difference and the tangential derivative averages the central
differences at the two nodes; the face flux is the normal component of
exp(phi) L^{-1}(du).  Freezing g*(x, du) at a reference field turns the
operator into a linear weighted Laplacian, which is what the implicit
time stepping solves.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import splu

from .curvature import ricci, s_curvature_rate, spray_jets
from .errors import DegenerateRegion, NoConvergence, StabilityFailure
from .grid import CovecField, Grid2D, ScalarField, SpaceTimeField, VecField
from .metric import dual_fundamental_tensor, dual_metric, gradient_vector, inv2


@dataclass(frozen=True)
class Periodic:
    """Periodic in both axes with period (nx*h, ny*h)."""


@dataclass(frozen=True)
class Dirichlet:
    """Fixed boundary values: a constant or a full-shape array."""

    value: object = 0.0

    def values(self, grid):
        return np.broadcast_to(np.asarray(self.value, dtype=float), grid.shape)


@dataclass(frozen=True)
class ParabolicCylinder:
    """B_{delta R}(x0) x (s - delta R^2, s)."""

    x0: tuple
    R: float
    s: float
    delta: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta <= 1 or self.R <= 0:
            raise ValueError("need 0 < delta <= 1 and R > 0")

    @property
    def window(self):
        return (self.s - self.delta * self.R**2, self.s)

    def scaled(self, delta):
        return ParabolicCylinder(self.x0, self.R, self.s, delta)


# ---------------------------------------------------------------------------
# differentials


def differential(u, periodic=False):
    """Central differences (one-sided on the boundary unless periodic)."""
    g = u.grid
    v = u.values
    if periodic:
        p1 = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2 * g.h)
        p2 = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) / (2 * g.h)
    else:
        p1 = np.gradient(v, g.h, axis=1)
        p2 = np.gradient(v, g.h, axis=0)
    return CovecField(g, np.stack([p1, p2], axis=-1))


def _zero_threshold(du, scale=None):
    s = np.max(np.abs(du)) if scale is None else scale
    return 1e-9 * max(s, 1e-300)


def gradient_field(m, u, periodic=False):
    """grad u = L^{-1}(du) per node; zero where du vanishes."""
    du = differential(u, periodic).values
    P = u.grid.points()
    nrm = np.hypot(du[..., 0], du[..., 1])
    keep = nrm > _zero_threshold(du)
    V = np.zeros(du.shape)
    if np.any(keep):
        V[keep] = gradient_vector(m, P[keep], du[keep])
    return VecField(u.grid, V)


# ---------------------------------------------------------------------------
# face operators


class FaceOperators:
    """Sparse difference and averaging operators on a grid.

    x-faces sit between (j, i) and (j, i+1); y-faces between (j, i) and
    (j+1, i).  With ``periodic`` the last face wraps to column/row 0.
    """

    def __init__(self, grid, periodic=False):
        self.grid = grid
        self.periodic = periodic
        ny, nx, h = grid.ny, grid.nx, grid.h
        N = nx * ny
        idx = np.arange(N).reshape(ny, nx)
        ni = nx if periodic else nx - 1
        nj = ny if periodic else ny - 1
        a = idx[:, :ni].ravel()
        b = np.roll(idx, -1, axis=1)[:, :ni].ravel()
        self.Sx = self._diff(a, b, N, h)
        self.Ax = self._avg(a, b, N)
        a = idx[:nj, :].ravel()
        b = np.roll(idx, -1, axis=0)[:nj, :].ravel()
        self.Sy = self._diff(a, b, N, h)
        self.Ay = self._avg(a, b, N)
        self.Cx = self._central(grid, axis=1)
        self.Cy = self._central(grid, axis=0)
        X, Y = grid.mesh()
        self.xface = np.stack([X[:, :ni] + 0.5 * h, Y[:, :ni]], axis=-1).reshape(-1, 2)
        self.yface = np.stack([X[:nj, :], Y[:nj, :] + 0.5 * h], axis=-1).reshape(-1, 2)
        self.nodes = grid.points().reshape(-1, 2)

    @staticmethod
    def _diff(a, b, N, h):
        n = len(a)
        r = np.concatenate([np.arange(n), np.arange(n)])
        return sp.csr_matrix((np.concatenate([-np.ones(n), np.ones(n)]) / h, (r, np.concatenate([a, b]))), shape=(n, N))

    @staticmethod
    def _avg(a, b, N):
        n = len(a)
        r = np.concatenate([np.arange(n), np.arange(n)])
        return sp.csr_matrix((np.full(2 * n, 0.5), (r, np.concatenate([a, b]))), shape=(n, N))

    def _central(self, grid, axis):
        ny, nx, h = grid.ny, grid.nx, grid.h
        idx = np.arange(nx * ny).reshape(ny, nx)
        n = nx if axis == 1 else ny
        rows, cols, vals = [], [], []
        for k in range(n):
            sl = (slice(None), k) if axis == 1 else (k, slice(None))
            here = idx[sl]
            if self.periodic:
                nb = [((k + 1) % n, 0.5 / h), ((k - 1) % n, -0.5 / h)]
            elif k == 0:
                nb = [(1, 1 / h), (0, -1 / h)]
            elif k == n - 1:
                nb = [(n - 1, 1 / h), (n - 2, -1 / h)]
            else:
                nb = [(k + 1, 0.5 / h), (k - 1, -0.5 / h)]
            for kk, w in nb:
                sl2 = (slice(None), kk) if axis == 1 else (kk, slice(None))
                rows.append(here)
                cols.append(idx[sl2])
                vals.append(np.full(here.shape, w))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(nx * ny, nx * ny))

    def face_covectors(self, u):
        """Reference covectors (normal, tangential) on x- and y-faces."""
        u = u.ravel()
        cx, cy = self.Cx @ u, self.Cy @ u
        xi_x = np.stack([self.Sx @ u, self.Ax @ cy], axis=-1)
        xi_y = np.stack([self.Ay @ cx, self.Sy @ u], axis=-1)
        return xi_x, xi_y


def _face_tensor(m, pts, xi, weight, riemannian_cache=None):
    """exp(phi) g*(x, xi) on faces; zero where xi vanishes (non-Riemannian)."""
    if m.is_riemannian:
        if riemannian_cache is not None:
            return riemannian_cache
        return weight[:, None, None] * dual_fundamental_tensor(m, pts, np.ones_like(pts))
    G = np.zeros(xi.shape + (2,))
    nrm = np.hypot(xi[:, 0], xi[:, 1])
    keep = nrm > _zero_threshold(xi)
    if np.any(keep):
        G[keep] = weight[keep, None, None] * dual_fundamental_tensor(m, pts[keep], xi[keep])
    return G


class LaplacianAssembler:
    """Builds the frozen-coefficient weighted Laplacian A(ref) as a sparse matrix."""

    def __init__(self, m, mu, grid, periodic=False):
        self.m = m
        self.mu = mu
        self.ops = FaceOperators(grid, periodic)
        o = self.ops
        self.wx = np.exp(mu.phi(o.xface))
        self.wy = np.exp(mu.phi(o.yface))
        self.inv_node = sp.diags(np.exp(-mu.phi(o.nodes)))
        self._cache = None
        if m.is_riemannian:
            self._cache = (_face_tensor(m, o.xface, None, self.wx), _face_tensor(m, o.yface, None, self.wy))

    def matrix(self, ref):
        o = self.ops
        if self._cache is not None:
            Gx, Gy = self._cache
        else:
            xi_x, xi_y = o.face_covectors(ref)
            Gx = _face_tensor(self.m, o.xface, xi_x, self.wx)
            Gy = _face_tensor(self.m, o.yface, xi_y, self.wy)
        flux_x = sp.diags(Gx[:, 0, 0]) @ o.Sx + sp.diags(Gx[:, 0, 1]) @ (o.Ax @ o.Cy)
        flux_y = sp.diags(Gy[:, 1, 1]) @ o.Sy + sp.diags(Gy[:, 1, 0]) @ (o.Ay @ o.Cx)
        return (-(self.inv_node @ (o.Sx.T @ flux_x + o.Sy.T @ flux_y))).tocsc()

    def apply(self, u):
        """Nonlinear Laplacian of a node array (no frozen coefficients)."""
        o = self.ops
        xi_x, xi_y = o.face_covectors(u)
        fx = self.wx * _face_gradient(self.m, o.xface, xi_x)[:, 0]
        fy = self.wy * _face_gradient(self.m, o.yface, xi_y)[:, 1]
        return (-(self.inv_node @ (o.Sx.T @ fx + o.Sy.T @ fy))).reshape(u.shape)

    def energy(self, u):
        """Face-based Dirichlet energy  int F*^2(du) dm."""
        o = self.ops
        h2 = o.grid.h**2
        xi_x, xi_y = o.face_covectors(u)
        ex = np.sum(self.wx * dual_metric(self.m, o.xface, xi_x) ** 2)
        ey = np.sum(self.wy * dual_metric(self.m, o.yface, xi_y) ** 2)
        return float(0.5 * (ex + ey) * h2)


def _face_gradient(m, pts, xi):
    V = np.zeros(xi.shape)
    keep = np.hypot(xi[:, 0], xi[:, 1]) > _zero_threshold(xi)
    if np.any(keep):
        V[keep] = gradient_vector(m, pts[keep], xi[keep])
    return V


def finsler_laplacian(m, mu, u, periodic=False):
    """Conservative discrete Finsler Laplacian; boundary nodes are NaN unless periodic."""
    asm = LaplacianAssembler(m, mu, u.grid, periodic)
    out = asm.apply(u.values)
    if not periodic:
        out = out.copy()
        out[u.grid.boundary_mask()] = np.nan
    return ScalarField(u.grid, out)


def weak_pairing(m, mu, u, phi, periodic=False):
    """(sum phi Delta u dm, -sum dphi(grad u) dm) with grid quadrature."""
    g = u.grid
    lap = LaplacianAssembler(m, mu, g, periodic).apply(u.values)
    dens = np.exp(mu.phi(g.points()))
    inner = ~g.boundary_mask() if not periodic else np.ones(g.shape, bool)
    lhs = np.sum((phi * lap * dens)[inner]) * g.h**2
    V = gradient_field(m, u, periodic).values
    dphi = differential(ScalarField(g, phi), periodic).values
    rhs = -np.sum(np.sum(dphi * V, axis=-1) * dens) * g.h**2
    return float(lhs), float(rhs)


# ---------------------------------------------------------------------------
# heat solver


def heat_solve(m, mu, u0, T, dt, boundary=Periodic(), theta=1.0, save_every=1,
               max_fixed_point=5, fp_tol=1e-10, log_path=None, check_positive=True):
    """Solve du/dt = Delta u from u0 up to time T.

    Each step freezes g*(x, du) at the current iterate, solves the linear
    theta-scheme system and repeats (at most ``max_fixed_point`` times)
    until the update falls below ``fp_tol`` relative to max|u|.
    Riemannian models have u-independent coefficients and need one solve.
    """
    if dt <= 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    grid = u0.grid
    periodic = isinstance(boundary, Periodic)
    if check_positive and np.any(u0.values <= 0):
        raise ValueError("initial data must be positive")
    asm = LaplacianAssembler(m, mu, grid, periodic)
    N = grid.nx * grid.ny
    u = u0.values.ravel().copy()
    if periodic:
        free = np.ones(N, dtype=bool)
    else:
        free = ~grid.boundary_mask().ravel()
        u[~free] = boundary.values(grid).ravel()[~free]
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        raise ValueError("T must be an integer multiple of dt")
    I = sp.identity(N, format="csc")
    fi = np.nonzero(free)[0]
    bi = np.nonzero(~free)[0]
    times, snaps = [0.0], [u0.values.copy()]
    iters, changes, energies = [], [], [asm.energy(u.reshape(grid.shape))]
    factor = None
    u_prev = None
    t_start = time.perf_counter()
    A_old = asm.matrix(u)
    for n in range(nsteps):
        rhs_full = u + (1 - theta) * dt * (A_old @ u) if theta < 1 else u.copy()
        # second-order predictor for the lagged coefficients
        v = u + (u - u_prev) if u_prev is not None else u.copy()
        scale = max(np.max(np.abs(u)), 1e-300)
        converged = False
        for k in range(1, max_fixed_point + 1):
            if factor is not None:
                lu, Mfb = factor
            else:
                Msys = (I - theta * dt * asm.matrix(v)).tocsr()
                lu = splu(Msys[fi][:, fi].tocsc())
                Mfb = Msys[fi][:, bi]
                if m.is_riemannian:
                    factor = (lu, Mfb)
            new = v.copy()
            new[fi] = lu.solve(rhs_full[fi] - (Mfb @ u[bi] if len(bi) else 0.0))
            change = np.max(np.abs(new - v)) / scale
            v = new
            if m.is_riemannian or change < fp_tol:
                converged = True
                break
        if not converged:
            raise NoConvergence(f"fixed point stalled at step {n + 1} with change {change:.3e}")
        iters.append(k)
        changes.append(float(change))
        u_prev, u = u, v
        if check_positive and np.min(u) <= 0:
            raise StabilityFailure(f"non-positive value {np.min(u):.3e} at step {n + 1}")
        if theta < 1:
            A_old = asm.matrix(u)
        if (n + 1) % save_every == 0 or n + 1 == nsteps:
            times.append((n + 1) * dt)
            snaps.append(u.reshape(grid.shape).copy())
            energies.append(asm.energy(u.reshape(grid.shape)))
    stats = {
        "dt": dt, "T": T, "theta": theta, "save_every": save_every, "steps": nsteps,
        "boundary": "periodic" if periodic else "dirichlet",
        "fixed_point_iterations": iters, "max_fixed_point_change": max(changes) if changes else 0.0,
        "energy": energies, "wall_seconds": time.perf_counter() - t_start,
    }
    if log_path is not None:
        with open(log_path, "w") as fh:
            json.dump({k: v for k, v in stats.items()}, fh, indent=1)
    return SpaceTimeField(grid, np.array(times), np.array(snaps), positive=check_positive, stats=stats)


def mass(u, mu):
    """int u dm over the grid by the node rule."""
    g = u.grid
    return float(np.sum(u.values * np.exp(mu.phi(g.points()))) * g.h**2)


# ---------------------------------------------------------------------------
# weak sub/supersolution residual


def tent_family(grid, widths=(3, 6), stride=4):
    """Centers (j, i) on every ``stride``-th interior node and tent half-widths in cells."""
    out = []
    for w in widths:
        js = np.arange(w + 1, grid.ny - w - 1, stride)
        is_ = np.arange(w + 1, grid.nx - w - 1, stride)
        for j in js:
            for i in is_:
                out.append((int(j), int(i), int(w)))
    return out


def _tent(n):
    t = np.arange(-n, n + 1) / n
    p = np.maximum(0.0, 1 - np.abs(t))
    return np.outer(p, p)


def parabolic_residual(m, mu, u, f, side, tol=2e-2, widths=(3, 6), stride=4, periodic=False):
    """Weak check of (Delta - d/dt)u >= -f u (sub) or <= f u (super).

    Each tent phi is paired over every time slab; the pairing
    sum phi [(Delta u - du/dt) +/- f u] dm dt is divided by
    sum phi (|Delta u| + |du/dt| + |f u|) dm, floored at 1e-3 of the largest
    such scale in the slab so that tents where every term vanishes do not
    inflate the ratio.  Slabs use the implicit rule
    (Delta u at the later time) for solver output saved every step with
    theta = 1, and the trapezoid rule otherwise.
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    g = u.grid
    fv = np.broadcast_to(np.asarray(f.values if isinstance(f, ScalarField) else f, dtype=float), g.shape)
    asm = LaplacianAssembler(m, mu, g, periodic)
    dens = np.exp(mu.phi(g.points()))
    laps = np.array([asm.apply(v) for v in u.values])
    implicit = u.stats.get("theta") == 1.0 and u.stats.get("save_every") == 1
    sign = 1.0 if side == "sub" else -1.0
    worst = np.inf if side == "sub" else -np.inf
    worst_at = None
    tents = tent_family(g, widths, stride)
    if not tents:
        raise DegenerateRegion("grid too small for the tent family")
    kern = {w: _tent(w) for w in set(widths)}
    centers = {w: np.array([(j, i) for (j, i, ww) in tents if ww == w]) for w in set(widths)}
    for k in range(len(u.times) - 1):
        dtk = u.times[k + 1] - u.times[k]
        lap = laps[k + 1] if implicit else 0.5 * (laps[k] + laps[k + 1])
        ut = (u.values[k + 1] - u.values[k]) / dtk
        fu = fv * (u.values[k + 1] if implicit else 0.5 * (u.values[k] + u.values[k + 1]))
        lap = np.nan_to_num(lap)
        r = dens * (lap - ut + sign * fu)
        a = dens * (np.abs(lap) + np.abs(ut) + np.abs(fu))
        vals, scales, where = [], [], []
        for w, cj in centers.items():
            if len(cj) == 0:
                continue
            num = ndimage.correlate(r, kern[w], mode="constant")[cj[:, 0], cj[:, 1]]
            den = ndimage.correlate(a, kern[w], mode="constant")[cj[:, 0], cj[:, 1]]
            vals.append(num)
            scales.append(den)
            where.extend((int(j), int(i), int(w)) for j, i in cj)
        vals = np.concatenate(vals)
        scales = np.concatenate(scales)
        den = np.maximum(scales, 1e-3 * scales.max())
        ok_ = den > 0
        if not np.any(ok_):
            continue
        q = np.where(ok_, vals / np.where(ok_, den, 1.0), 0.0)
        kk = int(np.argmin(q)) if side == "sub" else int(np.argmax(q))
        if (side == "sub" and q[kk] < worst) or (side == "super" and q[kk] > worst):
            worst, worst_at = float(q[kk]), (float(u.times[k + 1]),) + where[kk]
    ok = worst >= -tol if side == "sub" else worst <= tol
    return {"side": side, "worst": float(worst), "at": worst_at, "tolerance": tol, "pass": bool(ok),
            "tests": len(tents), "slabs": len(u.times) - 1}


# ---------------------------------------------------------------------------
# Bochner-Weitzenbock identity


def _central(v, h, axis):
    out = np.full(v.shape, np.nan)
    if axis == 1:
        out[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * h)
    else:
        out[1:-1, :] = (v[2:, :] - v[:-2, :]) / (2 * h)
    return out


def _div_m(X, dens, h):
    """(1/e^phi) div(e^phi X) with central differences."""
    return (_central(dens * X[..., 0], h, 1) + _central(dens * X[..., 1], h, 0)) / dens


def chern_christoffel(m, x, y, hx=1e-5):
    """Gamma[..., i, j, k] of the Chern connection at (x, y)."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    g = m.fundamental_tensor(x, y)
    ginv = inv2(g)
    C = m.cartan_tensor(x, y)
    _, _, Gy, _, _ = spray_jets(m, x, y)
    N = Gy  # N[..., s, j] = dG^s/dy^j
    E = np.eye(2)
    gx = np.stack([(m.fundamental_tensor(x + hx * E[k], y) - m.fundamental_tensor(x - hx * E[k], y)) / (2 * hx)
                   for k in range(2)], axis=-3)  # gx[..., j, a, b] = d_{x^j} g_ab
    # delta_j g_ab = d_{x^j} g_ab - N^s_j * 2 C_sab
    dg = gx - 2 * np.einsum("...sj,...sab->...jab", N, C)
    t = (np.einsum("...jlk->...ljk", dg) + np.einsum("...kjl->...ljk", dg) - np.einsum("...ljk->...ljk", dg))
    return 0.5 * np.einsum("...il,...ljk->...ijk", ginv, t)


def bochner_terms(m, mu, u, threshold=1e-6, margin=3):
    """Node arrays of the four Bochner terms on the admissible region."""
    g = u.grid
    h = g.h
    v = u.values
    P = g.points()
    dens = np.exp(mu.phi(P))
    du = np.stack([_central(v, h, 1), _central(v, h, 0)], axis=-1)
    ok = np.all(np.isfinite(du), axis=-1)
    ok[:margin, :] = ok[-margin:, :] = False
    ok[:, :margin] = ok[:, -margin:] = False
    ok &= np.hypot(du[..., 0], du[..., 1]) > threshold
    V = np.zeros(du.shape)
    fin = np.all(np.isfinite(du), axis=-1) & (np.hypot(du[..., 0], du[..., 1]) > threshold)
    V[fin] = gradient_vector(m, P[fin], du[fin])
    # nested central differences reach two nodes out; drop nodes near |du| ~ 0
    ok &= ndimage.minimum_filter(fin.astype(np.uint8), size=5, mode="constant", cval=0).astype(bool)
    # Delta u and d(Delta u)(grad u)
    lap = _div_m(V, dens, h)
    dlap = np.stack([_central(lap, h, 1), _central(lap, h, 0)], axis=-1)
    t_dlap = np.sum(dlap * V, axis=-1)
    # weighted Laplacian of F^2(grad u)/2 with reference vector grad u
    w = 0.5 * m.F(P, V) ** 2
    dw = np.stack([_central(w, h, 1), _central(w, h, 0)], axis=-1)
    Gv = np.zeros(du.shape + (2,))
    Gv[fin] = inv2(m.fundamental_tensor(P[fin], V[fin]))
    gradw = np.einsum("...ij,...j->...i", Gv, dw)
    lapw = _div_m(gradw, dens, h)
    # Hessian with the Chern connection of the reference vector
    uxx = (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / h**2
    uyy = (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / h**2
    uxy = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4 * h**2)
    H = np.full(du.shape + (2,), np.nan)
    H[:, 1:-1, 0, 0] = uxx
    H[1:-1, :, 1, 1] = uyy
    H[1:-1, 1:-1, 0, 1] = H[1:-1, 1:-1, 1, 0] = uxy
    ric = np.full(g.shape, np.nan)
    hs = np.full(g.shape, np.nan)
    if np.any(ok):
        Gam = chern_christoffel(m, P[ok], V[ok])
        Hc = H[ok] - np.einsum("...kij,...k->...ij", Gam, du[ok])
        gi = Gv[ok]
        hs[ok] = np.einsum("...ik,...jl,...ij,...kl->...", gi, gi, Hc, Hc)
        ric[ok] = ricci(m, P[ok], V[ok]) + s_curvature_rate(m, mu, P[ok], V[ok])
    return {"mask": ok, "lap_w": lapw, "dlap": t_dlap, "ric_inf": ric, "hs": hs, "lap": lap}


def bochner_check(m, mu, u, region=None, threshold=1e-6):
    """Residual of Delta^{grad u}[F^2(grad u)/2] - d(Delta u)(grad u) = Ric_inf(grad u) + |Hess u|^2_HS.

    ``region`` is a Ball restricting the nodes; nodes with |du| below
    ``threshold`` are skipped.
    """
    t = bochner_terms(m, mu, u, threshold)
    ok = t["mask"]
    if region is not None:
        P = u.grid.points()
        ok = ok & (np.hypot(*(P - np.asarray(region.center)).transpose(2, 0, 1)) <= region.radius)
    if np.sum(ok) < 10:
        raise DegenerateRegion(f"only {int(np.sum(ok))} admissible nodes")
    lhs = t["lap_w"][ok] - t["dlap"][ok]
    rhs = t["ric_inf"][ok] + t["hs"][ok]
    res = np.abs(lhs - rhs)
    return {"max_residual": float(np.max(res)), "mean_residual": float(np.mean(res)),
            "nodes": int(np.sum(ok)), "lhs_mean": float(np.mean(lhs)), "rhs_mean": float(np.mean(rhs)),
            "h": u.grid.h}
