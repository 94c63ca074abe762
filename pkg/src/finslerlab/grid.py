"""Rectangular grids and the fields that live on them.

Arrays are stored image-style: ``values[j, i]`` is the node at
``x = origin[0] + i*h``, ``y = origin[1] + j*h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Ball:
    """Descriptor of a sampling region: a Euclidean chart disk."""

    center: tuple[float, float]
    radius: float

    def sample(self, n, seed=0):
        """Deterministic low-discrepancy points inside the disk (center first)."""
        from scipy.stats import qmc

        pts = [np.asarray(self.center, dtype=float)]
        if n > 1:
            u = qmc.Halton(d=2, scramble=True, seed=seed).random(n - 1)
            r = self.radius * np.sqrt(u[:, 0])
            t = 2 * np.pi * u[:, 1]
            pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]) + self.center)
            return np.vstack([pts[0][None], pts[1]])
        return pts[0][None]


@dataclass(frozen=True)
class Grid2D:
    origin: tuple[float, float]
    h: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.nx < 16 or self.ny < 16:
            raise ValueError("grid needs at least 16 nodes per axis")

    @classmethod
    def centered(cls, center, half_width, h):
        """Square grid with a node exactly at ``center``."""
        n = int(round(half_width / h))
        return cls((center[0] - n * h, center[1] - n * h), h, 2 * n + 1, 2 * n + 1)

    @classmethod
    def box(cls, lower, upper, h):
        nx = int(round((upper[0] - lower[0]) / h)) + 1
        ny = int(round((upper[1] - lower[1]) / h)) + 1
        return cls((float(lower[0]), float(lower[1])), h, nx, ny)

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def x(self):
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def y(self):
        return self.origin[1] + self.h * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def points(self):
        """Node coordinates as an array of shape (ny, nx, 2)."""
        X, Y = self.mesh()
        return np.stack([X, Y], axis=-1)

    def index_of(self, p, tol=1e-9):
        """(j, i) of the node at p; raises ValueError if p is not a node."""
        fi = (p[0] - self.origin[0]) / self.h
        fj = (p[1] - self.origin[1]) / self.h
        i, j = int(round(fi)), int(round(fj))
        if abs(fi - i) > tol or abs(fj - j) > tol or not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError(f"point {tuple(p)} is not a grid node")
        return j, i

    def contains(self, p):
        return (
            self.origin[0] <= p[0] <= self.origin[0] + (self.nx - 1) * self.h
            and self.origin[1] <= p[1] <= self.origin[1] + (self.ny - 1) * self.h
        )

    def interpolate(self, values, pts):
        """Bilinear interpolation of a node array at arbitrary points."""
        pts = np.asarray(pts, dtype=float)
        fi = (pts[..., 0] - self.origin[0]) / self.h
        fj = (pts[..., 1] - self.origin[1]) / self.h
        i0 = np.clip(np.floor(fi).astype(int), 0, self.nx - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, self.ny - 2)
        a = fi - i0
        b = fj - j0
        v = values
        return (
            (1 - a) * (1 - b) * v[j0, i0]
            + a * (1 - b) * v[j0, i0 + 1]
            + (1 - a) * b * v[j0 + 1, i0]
            + a * b * v[j0 + 1, i0 + 1]
        )

    def boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def refine(self):
        """Grid with half the spacing over the same box."""
        return Grid2D(self.origin, self.h / 2, 2 * self.nx - 1, 2 * self.ny - 1)


@dataclass
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @classmethod
    def from_function(cls, grid, f):
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(f(X, Y), grid.shape).astype(float))


@dataclass
class VecField:
    """Tangent vectors per node, shape (ny, nx, 2)."""

    grid: Grid2D
    values: np.ndarray


@dataclass
class CovecField:
    """Covectors per node, shape (ny, nx, 2)."""

    grid: Grid2D
    values: np.ndarray


@dataclass
class SpaceTimeField:
    """Time-indexed snapshots of a scalar field on a fixed grid."""

    grid: Grid2D
    times: np.ndarray
    values: np.ndarray  # (nt, ny, nx)
    positive: bool = False
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times),) + self.grid.shape:
            raise ValueError("snapshot array does not match times and grid")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if self.positive and np.any(self.values <= 0):
            raise ValueError("field flagged positive has non-positive values")

    @classmethod
    def from_function(cls, grid, times, f, positive=False):
        X, Y = grid.mesh()
        vals = np.stack([np.broadcast_to(f(X, Y, t), grid.shape) for t in times])
        return cls(grid, np.asarray(times, dtype=float), vals, positive=positive)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def at(self, k):
        return ScalarField(self.grid, self.values[k])

    def window(self, t0, t1, tol=1e-12):
        """Indices of snapshots with t0 <= t <= t1."""
        return np.nonzero((self.times >= t0 - tol) & (self.times <= t1 + tol))[0]

    def to_csv(self, path):
        """Write rows (t, x, y, u)."""
        X, Y = self.grid.mesh()
        with open(path, "w") as fh:
            fh.write("t,x,y,u\n")
            for t, u in zip(self.times, self.values):
                for xv, yv, uv in zip(X.ravel(), Y.ravel(), u.ravel()):
                    fh.write(f"{t!r},{xv!r},{yv!r},{uv!r}\n")
