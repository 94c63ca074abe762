"""Whitney-type coverings of forward balls and their chain properties.

Balls are centered on grid nodes of B_R = B_R^+(x0) with radius
r = d(B, dB_R)/(10 Lambda^2)^3.  Writing D(x) for the distance from x to
dB_R, the triangle inequality gives d(B, dB_R) >= D - r, and the radius
rule becomes the fixed point r = D / ((10 Lambda^2)^3 + 1).  Membership in
a small ball B_r(x) uses the norm frozen at its center, F(x, z - x) < r.

When B_R does not fit in the grid (a window around part of the ball) D
is replaced by its lower bound R - d(x0, x).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ResolutionFloor
from .geodesy import distance_from_set
from .grid import Ball
from .metric import angle_grid, reversibility
from .report import InequalityReport

OVERLAP_DILATION = 200  # times Lambda^5


def whitney_factor(lam):
    """(10 Lambda^2)^3."""
    return (10.0 * lam**2) ** 3


def containment_factor(lam):
    """10^3 Lambda^6 + Lambda(Lambda + 3) + 4."""
    return 1e3 * lam**6 + lam * (lam + 3) + 4


@dataclass
class BallCover:
    """Disjoint balls of a Whitney-type cover with their chains."""

    x0: tuple
    R: float
    lam: float
    grid: object
    metric: object
    nodes: np.ndarray  # (k, 2) grid indices (j, i) of the centers
    centers: np.ndarray  # (k, 2)
    radii: np.ndarray
    central_index: int
    D: np.ndarray = field(repr=False)  # distance to dB_R (or its lower bound) per node
    dist: np.ndarray = field(repr=False)  # d(x0, .) per node
    windowed: bool = False
    min_radius: float = 0.0
    uncovered_fraction: float = 0.0
    floor_fraction: float = 0.0
    floor_width: float = 0.0
    chains: list = field(default_factory=list)
    paths: list = field(default_factory=list, repr=False)
    _stencils: dict = field(default_factory=dict, repr=False)

    @property
    def dilation(self):
        return self.lam + 1.0

    def __len__(self):
        return len(self.radii)

    # frozen-norm masks ---------------------------------------------------

    def _frozen(self, k):
        x = self.centers[k]
        lam = float(self.metric.lam(x))
        b = self.metric.drift(x)
        return lam, float(b[0]), float(b[1])

    def ball_nodes(self, k, factor=1.0, closed=False):
        """Flat indices of grid nodes in factor*B_k (frozen norm)."""
        key = (k, factor, closed)
        if key in self._stencils:
            return self._stencils[key]
        g = self.grid
        lam, b1, b2 = self._frozen(k)
        r = factor * self.radii[k]
        w = int(math.ceil(r / (g.h * (lam - math.hypot(b1, b2))))) + 1
        j0, i0 = (int(v) for v in self.nodes[k])
        dj, di = np.mgrid[-w : w + 1, -w : w + 1]
        jj, ii = j0 + dj, i0 + di
        ok = (jj >= 0) & (jj < g.ny) & (ii >= 0) & (ii < g.nx)
        vx, vy = di * g.h, dj * g.h
        F = lam * np.sqrt(vx * vx + vy * vy) + b1 * vx + b2 * vy
        inside = ok & ((F <= r) if closed else (F < r))
        out = np.sort(jj[inside] * g.nx + ii[inside])
        self._stencils[key] = out
        return out

    def norm_from(self, k, pts):
        """F(x_k, p - x_k) with the norm frozen at the center of ball k."""
        lam, b1, b2 = self._frozen(k)
        v = np.asarray(pts, dtype=float) - self.centers[k]
        return lam * np.hypot(v[..., 0], v[..., 1]) + b1 * v[..., 0] + b2 * v[..., 1]

    def to_dict(self):
        return {
            "x0": list(self.x0), "R": self.R, "Lambda": self.lam, "h": self.grid.h,
            "windowed": self.windowed, "min_radius": self.min_radius,
            "centers": self.centers.tolist(), "radii": self.radii.tolist(),
            "central_index": int(self.central_index), "chains": [list(map(int, c)) for c in self.chains],
            "uncovered_fraction": self.uncovered_fraction, "floor_fraction": self.floor_fraction,
            "floor_width": self.floor_width,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def _boundary_distance(df, R):
    """d(x, dB_R) from the sources just outside the ball (reverse-metric sweep)."""
    d = df.values
    inB = d < R
    near = np.zeros_like(inB)
    for sj, si in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        near |= np.roll(inB, (sj, si), axis=(0, 1))
    src = near & ~inB & np.isfinite(d)
    init = np.where(src, 0.0, np.inf)
    return distance_from_set(df.metric, df.grid, init, direction="backward")


def _descent_path(d, start, stop):
    """Grid path from ``start`` to ``stop`` by steepest descent of d (8 neighbours)."""
    ny, nx = d.shape
    j, i = start
    path = [(j, i)]
    while (j, i) != stop:
        best, nxt = d[j, i], None
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                jj, ii = j + dj, i + di
                if (dj or di) and 0 <= jj < ny and 0 <= ii < nx and d[jj, ii] < best:
                    best, nxt = d[jj, ii], (jj, ii)
        if nxt is None:
            break
        j, i = nxt
        path.append((j, i))
    return path[::-1]


def build_whitney_cover(df, R, lam=None, min_radius=None, chains=True, cover_tol=1e-3):
    """Greedy Whitney-type cover of the forward ball B_R(x0) of ``df``.

    Candidates are grid nodes of B_R whose rule radius is at least
    ``min_radius`` (default 2h); they are taken in order of decreasing
    radius, ties broken by the lexicographic order of the centers, and kept
    when disjoint from the balls already chosen.  ResolutionFloor is raised
    when the dilated balls leave more than ``cover_tol`` of the resolvable
    nodes uncovered.
    """
    g = df.grid
    m = df.metric
    x0 = tuple(df.x0)
    if lam is None:
        lam = reversibility(m, Ball(x0, R), samples=32, n_angles=2048)
    lam = float(lam)
    if lam < 1:
        raise ValueError("reversibility must be >= 1")
    h = g.h
    min_radius = 2 * h if min_radius is None else float(min_radius)
    d = np.where(np.isfinite(df.values), df.values, np.inf)
    inB = d < R
    edge = g.boundary_mask()
    windowed = bool(np.any(inB & edge))
    D = np.where(inB, R - d, 0.0) if windowed else np.where(inB, _boundary_distance(df, R), 0.0)
    rad = np.where(inB, D / (whitney_factor(lam) + 1), 0.0)
    P = g.points()
    lamN = m.lam(P)
    bN = m.drift(P)
    fmin = lamN - np.hypot(bN[..., 0], bN[..., 1])  # min of F(x, u) over Euclidean unit u
    halfw = np.ceil(rad / (h * fmin)).astype(np.int32) + 1
    J, I = np.mgrid[0 : g.ny, 0 : g.nx]
    fits = (J - halfw >= 0) & (J + halfw < g.ny) & (I - halfw >= 0) & (I + halfw < g.nx)
    cand = inB & (rad >= min_radius) & fits
    cj, ci = J[cand].astype(np.int32), I[cand].astype(np.int32)
    if len(cj) == 0:
        raise ResolutionFloor(f"no admissible ball of radius >= {min_radius:g} at h = {h:g}", 1.0)
    cr = rad[cand]
    rkey = np.array([float(f"{v:.12e}") for v in cr])
    order = np.lexsort((P[..., 1][cand], P[..., 0][cand], -rkey)).astype(np.int64)
    occ = np.full(g.shape, -1, dtype=np.int32)
    sel = kernels.greedy_pack(order, cj, ci, np.ascontiguousarray(cr), np.ascontiguousarray(lamN[cand]),
                              np.ascontiguousarray(bN[..., 0][cand]), np.ascontiguousarray(bN[..., 1][cand]),
                              np.ascontiguousarray(halfw[cand]), float(h), occ)
    nodes = np.column_stack([cj[sel], ci[sel]])
    cover = BallCover(x0, float(R), lam, g, m, nodes, P[nodes[:, 0], nodes[:, 1]], cr[sel], -1,
                      D, d, windowed, min_radius)
    # coverage by the dilated balls over the resolvable nodes
    covered = np.zeros(g.nx * g.ny, dtype=bool)
    for k in range(len(sel)):
        covered[cover.ball_nodes(k, cover.dilation)] = True
    covered = covered.reshape(g.shape)
    resolvable = cand
    cover.uncovered_fraction = float(np.sum(resolvable & ~covered) / max(np.sum(resolvable), 1))
    floor = inB & (rad < min_radius)
    cover.floor_fraction = float(np.sum(floor) / max(np.sum(inB), 1))
    cover.floor_width = float(min_radius * (whitney_factor(lam) + 1)) if np.any(floor) else 0.0
    j0, i0 = g.index_of(x0)
    gauge = np.array([cover.norm_from(k, P[j0, i0]) / cover.radii[k] for k in range(len(sel))])
    if len(gauge) == 0 or gauge.min() > cover.dilation:
        raise ResolutionFloor("no dilated ball contains the center x0", cover.uncovered_fraction)
    cover.central_index = int(np.argmin(gauge))
    if cover.uncovered_fraction > cover_tol:
        raise ResolutionFloor(f"dilated balls leave {cover.uncovered_fraction:.2e} of the resolvable nodes "
                              f"uncovered", cover.uncovered_fraction)
    if chains:
        build_chains(cover)
    return cover


def _dilate_index(cover):
    """node -> list of balls whose closed (Lambda+1)-dilate contains it."""
    idx = {}
    for k in range(len(cover)):
        for n in cover.ball_nodes(k, cover.dilation, closed=True).tolist():
            idx.setdefault(n, []).append(k)
    return idx


def build_chains(cover):
    """Chains F(B) from the central ball to every ball, walking grid geodesics."""
    g = cover.grid
    idx = _dilate_index(cover)
    sets = {}

    def dil(k):
        if k not in sets:
            sets[k] = set(cover.ball_nodes(k, cover.dilation, closed=True).tolist())
        return sets[k]

    j0, i0 = g.index_of(cover.x0)
    chains, paths = [], []
    for b in range(len(cover)):
        path = _descent_path(cover.dist, tuple(int(v) for v in cover.nodes[b]), (j0, i0))
        flat = [j * g.nx + i for j, i in path]
        chain = [cover.central_index]
        union = set(dil(cover.central_index))
        for n in flat:
            if n in union:
                continue
            cands = idx.get(n, [])
            if not cands:
                continue
            last = dil(chain[-1])
            # prefer balls whose dilate meets the last one, then larger radius, then lower index
            best = min(cands, key=lambda k: (not (dil(k) & last), -cover.radii[k], k))
            chain.append(best)
            union |= dil(best)
        if chain[-1] != b:
            chain.append(b)
        chains.append(chain)
        paths.append(flat)
    cover.chains, cover.paths = chains, paths
    return chains


def verify_chain_properties(cover, slack=None):
    """Radius, containment, consecutive-radius and adjacency checks on every chain.

    The explicit bounds are r(B) <= (Lambda+2) r(A) and B within
    (10^3 Lambda^6 + Lambda(Lambda+3) + 4) A for A in F(B), consecutive radii
    within a factor 1 + (10 Lambda)^-2, consecutive closed dilates sharing a
    grid node, and d(gamma_B, dB_R) >= 10^3 Lambda^6 r(B)/(Lambda+1) along
    the chain geodesic (up to ``slack``, default h).
    """
    lam = cover.lam
    g = cover.grid
    slack = g.h if slack is None else slack
    P = g.points().reshape(-1, 2)
    Dflat = cover.D.reshape(-1)
    lt = containment_factor(lam)
    q = 1 + (10 * lam) ** -2
    worst_ratio, worst_cons, worst_cont, worst_geo = 0.0, 1.0, 0.0, np.inf
    adjacency_fail, starts_ok, ends_ok = 0, True, True
    for b, chain in enumerate(cover.chains):
        starts_ok &= chain[0] == cover.central_index
        ends_ok &= chain[-1] == b
        rb = cover.radii[b]
        pts_b = P[cover.ball_nodes(b)]
        for a in chain:
            worst_ratio = max(worst_ratio, rb / cover.radii[a])
            worst_cont = max(worst_cont, float(np.max(cover.norm_from(a, pts_b))) / (lt * cover.radii[a]))
        for a, c in zip(chain[:-1], chain[1:]):
            ra, rc = cover.radii[a], cover.radii[c]
            worst_cons = max(worst_cons, ra / rc, rc / ra)
            da = cover.ball_nodes(a, cover.dilation, closed=True)
            dc = cover.ball_nodes(c, cover.dilation, closed=True)
            if len(np.intersect1d(da, dc, assume_unique=True)) == 0:
                adjacency_fail += 1
        if cover.paths:
            geo = float(np.min(Dflat[cover.paths[b]])) - 1e3 * lam**6 * rb / (lam + 1)
            worst_geo = min(worst_geo, geo)
    ok = (worst_ratio <= lam + 2 and worst_cons <= q and worst_cont < 1 and adjacency_fail == 0
          and starts_ok and ends_ok and worst_geo >= -slack)
    return InequalityReport(
        "whitney_chains", float(worst_ratio), "r(B) <= (Lambda+2) r(A)", float(worst_ratio),
        "consistent" if ok else "violated", rhs=float(lam + 2),
        details={"Lambda": lam, "chains": len(cover.chains),
                 "max_chain_length": max((len(c) for c in cover.chains), default=0),
                 "radius_ratio_max": worst_ratio, "radius_ratio_bound": lam + 2,
                 "consecutive_ratio_max": worst_cons, "consecutive_ratio_bound": q,
                 "containment_factor": lt, "containment_usage_max": worst_cont,
                 "adjacency_failures": adjacency_fail, "chains_start_central": bool(starts_ok),
                 "chains_end_own_ball": bool(ends_ok), "geodesic_margin_min": worst_geo, "slack": slack},
    )


def verify_overlap_bound(cover, probes=48):
    """Multiplicity of the dilated balls 200 Lambda^5 B at probe nodes.

    Probes are spread over the nodes whose multiplicity is fully determined
    by the cover: every center that could reach them through a dilated ball
    is resolvable inside the grid.  Without such nodes all nodes of B_R are
    probed and the counts are flagged as truncated.
    """
    g = cover.grid
    lam = cover.lam
    fac = OVERLAP_DILATION * lam**5
    P = g.points()
    m = cover.metric
    inB = cover.dist < cover.R
    # Euclidean reach of the dilated balls: fac * r / min_u F(x, u)
    fm = float(np.min(m.lam(cover.centers) - np.hypot(*m.drift(cover.centers).T)))
    reach = fac * float(cover.radii.max()) / fm + cover.radii.max() / fm
    J, I = np.mgrid[0 : g.ny, 0 : g.nx]
    margin = np.minimum.reduce([J, g.ny - 1 - J, I, g.nx - 1 - I]) * g.h
    floor_gap = np.inf
    rad = cover.D / (whitney_factor(lam) + 1)
    low = inB & (rad < cover.min_radius)
    if np.any(low):
        from scipy import ndimage

        floor_gap = ndimage.distance_transform_edt(~low) * g.h
    certified = inB & (margin > reach) & (floor_gap > reach)
    truncated = not np.any(certified)
    pool = inB if truncated else certified
    jj, ii = np.nonzero(pool)
    step = max(1, int(math.ceil(math.sqrt(len(jj) / probes**2))))
    keep = ((jj - jj.min()) % step == 0) & ((ii - ii.min()) % step == 0)
    pts = P[jj[keep], ii[keep]]
    counts = np.zeros(len(pts), dtype=int)
    lamC = m.lam(cover.centers)
    bC = m.drift(cover.centers)
    chunk = max(1, 2_000_000 // max(len(cover), 1))
    for s0 in range(0, len(pts), chunk):
        v = pts[s0 : s0 + chunk, None, :] - cover.centers[None, :, :]
        F = lamC[None] * np.hypot(v[..., 0], v[..., 1]) + np.einsum("pki,ki->pk", v, bC)
        counts[s0 : s0 + chunk] = np.sum(F < fac * cover.radii[None, :], axis=1)
    hist = np.bincount(counts)
    mx = int(counts.max()) if len(counts) else 0
    return InequalityReport(
        "whitney_overlap", float(mx), "sup #{B : eta in 200 Lambda^5 B} <= K", float(mx), "consistent",
        details={"Lambda": lam, "dilation": fac, "probes": int(len(pts)), "truncated": bool(truncated),
                 "min_multiplicity": int(counts.min()) if len(counts) else 0,
                 "histogram": {str(k): int(v) for k, v in enumerate(hist) if v},
                 "balls": len(cover), "h": g.h},
    )
