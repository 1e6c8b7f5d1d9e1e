"""Spatial grid, angular quadrature, boundary phase-space sets and ray tracing.

Fields on the spatial grid are arrays of shape ``(nx, ny)`` indexed ``[i, j]``
with ``i`` along x.  Phase-space fields have shape ``(n_dirs, nx, ny)``.

Boundary data use a fixed per-direction layout of length ``2*ny + 2*nx``:
left faces (ny), right faces (ny), bottom faces (nx), top faces (nx).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
FACE_NAMES = ("left", "right", "bottom", "top")
_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])

# Direction components below this are snapped to exactly zero.
_AXIS_SNAP = 1e-14


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centred grid on the box ``origin + [0, lx] x [0, ly]``."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise GeometryError(f"cell counts must be positive integers, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise GeometryError(f"extents must be positive, got {self.lx}x{self.ly}")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.lx, self.ly))

    @property
    def xc(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def yc(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(nx, ny)`` arrays."""
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return x0, x0 + self.lx, y0, y0 + self.ly

    def contains(self, x, strict: bool = True) -> bool:
        x0, x1, y0, y1 = self.bounds
        if strict:
            return x0 < x[0] < x1 and y0 < x[1] < y1
        return x0 <= x[0] <= x1 and y0 <= x[1] <= y1

    def locate(self, x) -> tuple[int, int]:
        """Cell owning point ``x``; each cell owns its lower and left edges."""
        i = int(np.floor((x[0] - self.origin[0]) / self.dx))
        j = int(np.floor((x[1] - self.origin[1]) / self.dy))
        return min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1)

    # boundary layout -----------------------------------------------------
    @property
    def n_boundary(self) -> int:
        return 2 * self.ny + 2 * self.nx

    def face_offsets(self) -> tuple[int, int, int, int]:
        return (0, self.ny, 2 * self.ny, 2 * self.ny + self.nx)

    def face_size(self, face: int) -> int:
        return self.ny if face in (LEFT, RIGHT) else self.nx

    def face_points(self, face: int) -> np.ndarray:
        """Midpoints of the boundary faces on one side, shape ``(m, 2)``."""
        x0, x1, y0, y1 = self.bounds
        if face in (LEFT, RIGHT):
            xs = np.full(self.ny, x0 if face == LEFT else x1)
            return np.column_stack([xs, self.yc])
        ys = np.full(self.nx, y0 if face == BOTTOM else y1)
        return np.column_stack([self.xc, ys])

    def boundary_points(self) -> np.ndarray:
        return np.vstack([self.face_points(f) for f in range(4)])

    def boundary_faces(self) -> np.ndarray:
        return np.concatenate([np.full(self.face_size(f), f) for f in range(4)])

    def boundary_measure(self) -> np.ndarray:
        return np.concatenate([np.full(self.face_size(f), self.dy if f in (LEFT, RIGHT) else self.dx)
                               for f in range(4)])

    def same_as(self, other: "SpatialGrid") -> bool:
        return (self.nx, self.ny, self.lx, self.ly, tuple(self.origin)) == (
            other.nx, other.ny, other.lx, other.ly, tuple(other.origin))


@dataclass(frozen=True)
class AngularGrid:
    """Uniform midpoint quadrature on the unit circle, ``phi_j = 2 pi j / n``.

    Weights are normalised (they sum to one), so ``weights @ u`` is the
    angular average.  Multiply by ``2 pi`` for the unnormalised measure.
    """

    n_dirs: int
    phi: np.ndarray = field(init=False, repr=False, compare=False)
    mu: np.ndarray = field(init=False, repr=False, compare=False)
    eta: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.n_dirs
        if int(n) != n or n < 2:
            raise GeometryError(f"n_dirs must be a positive integer >= 2, got {n}")
        if n % 2:
            raise GeometryError(f"n_dirs must be even so directions are closed under negation, got {n}")
        phi = 2.0 * np.pi * np.arange(n) / n
        mu, eta = np.cos(phi), np.sin(phi)
        mu[np.abs(mu) < _AXIS_SNAP] = 0.0
        eta[np.abs(eta) < _AXIS_SNAP] = 0.0
        half = n // 2
        mu[half:] = -mu[:half]
        eta[half:] = -eta[:half]
        for name, val in (("phi", phi), ("mu", mu), ("eta", eta), ("weights", np.full(n, 1.0 / n))):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def directions(self) -> np.ndarray:
        return np.column_stack([self.mu, self.eta])

    @property
    def dphi(self) -> float:
        return 2.0 * np.pi / self.n_dirs

    @property
    def reverse(self) -> np.ndarray:
        """Index map ``k -> k'`` with ``theta_k' = -theta_k``."""
        return (np.arange(self.n_dirs) + self.n_dirs // 2) % self.n_dirs

    def average(self, u: np.ndarray) -> np.ndarray:
        """Discrete angular average over the leading axis, fixed summation order."""
        return np.tensordot(self.weights, u, axes=(0, 0))

    def nearest(self, theta) -> int:
        ang = np.arctan2(theta[1], theta[0]) % (2.0 * np.pi)
        return int(np.round(ang / self.dphi)) % self.n_dirs

    def arc_distance(self, k0: int) -> np.ndarray:
        """Arc (angle) distance from direction ``k0`` to every direction."""
        d = np.abs(np.arange(self.n_dirs) - k0) % self.n_dirs
        return np.minimum(d, self.n_dirs - d) * self.dphi


@dataclass(frozen=True)
class BoundarySet:
    """Inflow (``sign='minus'``) or outflow (``sign='plus'``) phase-space boundary.

    Entry ``e`` is the pair (boundary face ``flat[e]``, direction ``direction[e]``)
    with outward normal dotted into the direction equal to ``ndot[e]``.
    """

    sign: Literal["minus", "plus"]
    flat: np.ndarray
    face: np.ndarray
    direction: np.ndarray
    measure: np.ndarray
    ndot: np.ndarray
    n_boundary: int
    n_dirs: int

    def __len__(self) -> int:
        return len(self.flat)

    def zeros(self) -> np.ndarray:
        return np.zeros(len(self))

    def to_layout(self, values: np.ndarray) -> np.ndarray:
        """Scatter an entry vector into a dense ``(n_dirs, n_boundary)`` array."""
        out = np.zeros((self.n_dirs, self.n_boundary))
        out[self.direction, self.flat] = values
        return out

    def from_layout(self, dense: np.ndarray) -> np.ndarray:
        return dense[self.direction, self.flat]

    def integrate(self, values: np.ndarray, angular: AngularGrid) -> float:
        """``sum (theta.n) * values dS dtheta`` with the unnormalised angle measure."""
        return float(np.sum(self.ndot * self.measure * values) * (2.0 * np.pi / angular.n_dirs))


def boundary_sets(spatial: SpatialGrid, angular: AngularGrid) -> tuple[BoundarySet, BoundarySet]:
    """Enumerate Gamma_- and Gamma_+; tangential pairs are excluded."""
    faces = spatial.boundary_faces()
    measure = spatial.boundary_measure()
    ndot = _NORMALS[faces] @ angular.directions.T  # (n_boundary, n_dirs)
    out = []
    for sign, mask in (("minus", ndot < 0), ("plus", ndot > 0)):
        b, k = np.nonzero(mask)
        out.append(BoundarySet(sign=sign, flat=b, face=faces[b], direction=k, measure=measure[b],
                               ndot=ndot[b, k], n_boundary=spatial.n_boundary, n_dirs=angular.n_dirs))
    return out[0], out[1]


class Grids(NamedTuple):
    spatial: SpatialGrid
    angular: AngularGrid
    gamma_minus: BoundarySet
    gamma_plus: BoundarySet

    def compatible(self, grid: SpatialGrid) -> bool:
        return self.spatial.same_as(grid)


def build_grids(nx: int, ny: int, n_dirs: int, lx: float = 1.0, ly: float = 1.0) -> Grids:
    """Return ``(spatial, angular, gamma_minus, gamma_plus)``."""
    for name, val in (("nx", nx), ("ny", ny), ("n_dirs", n_dirs)):
        if int(val) != val or val <= 0:
            raise GeometryError(f"{name} must be a positive integer, got {val}")
    if nx < 2 or ny < 2:
        raise GeometryError(f"need at least 2 cells per axis, got {nx}x{ny}")
    if n_dirs % 2:
        raise GeometryError(f"n_dirs must be even (adjoint reflection needs -theta), got {n_dirs}")
    if n_dirs < 8:
        raise GeometryError(f"n_dirs must be >= 8, got {n_dirs}")
    spatial = SpatialGrid(int(nx), int(ny), lx, ly)
    angular = AngularGrid(int(n_dirs))
    gm, gp = boundary_sets(spatial, angular)
    return Grids(spatial, angular, gm, gp)


# ----------------------------------------------------------------------------
# ray tracing


@dataclass(frozen=True)
class RayTrace:
    point: tuple[float, float]
    direction: tuple[float, float]
    tau_plus: float
    tau_minus: float
    segments_plus: list[tuple[tuple[int, int], float]]
    segments_minus: list[tuple[tuple[int, int], float]]
    grid: SpatialGrid

    @property
    def chord_total(self) -> float:
        return self.tau_plus + self.tau_minus

    @property
    def exit_point(self) -> np.ndarray:
        return np.asarray(self.point) + self.tau_plus * np.asarray(self.direction)

    @property
    def entry_point(self) -> np.ndarray:
        return np.asarray(self.point) - self.tau_minus * np.asarray(self.direction)


def exit_distance(x, d, grid: SpatialGrid) -> float:
    """Distance from ``x`` to the box boundary travelling along ``d``."""
    x0, x1, y0, y1 = grid.bounds
    t = np.inf
    if d[0] > 0:
        t = min(t, (x1 - x[0]) / d[0])
    elif d[0] < 0:
        t = min(t, (x0 - x[0]) / d[0])
    if d[1] > 0:
        t = min(t, (y1 - x[1]) / d[1])
    elif d[1] < 0:
        t = min(t, (y0 - x[1]) / d[1])
    return float(max(t, 0.0))


def _segments(x, d, tau, grid: SpatialGrid):
    x0, _, y0, _ = grid.bounds
    ts = [0.0, tau]
    for axis, (lo, step, n) in enumerate(((x0, grid.dx, grid.nx), (y0, grid.dy, grid.ny))):
        if d[axis] == 0.0:
            continue
        lines = lo + step * np.arange(1, n)
        with np.errstate(over="ignore"):
            t = (lines - x[axis]) / d[axis]
        ts.extend(t[(t > 0.0) & (t < tau)].tolist())
    ts = np.unique(ts)
    out = []
    for a, b in zip(ts[:-1], ts[1:]):
        if b - a <= 0.0:
            continue
        m = 0.5 * (a + b)
        out.append((grid.locate((x[0] + m * d[0], x[1] + m * d[1])), float(b - a)))
    return out


def trace_ray(x, theta, grid: SpatialGrid) -> RayTrace:
    """Exact exit distances and cell/chord decomposition of the line through ``x``."""
    x = (float(x[0]), float(x[1]))
    theta = np.asarray(theta, dtype=float)
    if abs(np.hypot(*theta) - 1.0) > 1e-10:
        raise GeometryError(f"direction must be a unit vector, got {tuple(theta)}")
    if not grid.contains(x, strict=True):
        raise GeometryError(f"point {x} is not strictly inside the domain")
    d = (float(theta[0]), float(theta[1]))
    nd = (-d[0], -d[1])
    tp = exit_distance(x, d, grid)
    tm = exit_distance(x, nd, grid)
    return RayTrace(point=x, direction=d, tau_plus=tp, tau_minus=tm,
                    segments_plus=_segments(x, d, tp, grid),
                    segments_minus=_segments(x, nd, tm, grid), grid=grid)


def line_integral(field: np.ndarray, ray: RayTrace, side: Literal["plus", "minus", "full"] = "full",
                  grid: SpatialGrid | None = None) -> float:
    """Sum of ``field(cell) * chord`` over the requested part of the ray."""
    field = np.asarray(field, dtype=float)
    if field.shape != ray.grid.shape or (grid is not None and not grid.same_as(ray.grid)):
        raise GeometryError(f"field shape {field.shape} does not match ray grid {ray.grid.shape}")
    if side not in ("plus", "minus", "full"):
        raise ValueError(f"side must be plus, minus or full, got {side!r}")
    segs = []
    if side in ("plus", "full"):
        segs += ray.segments_plus
    if side in ("minus", "full"):
        segs += ray.segments_minus
    return float(sum(field[c] * length for c, length in segs))


def boundary_cells(grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Cell ``(i, j)`` adjacent to each boundary face in the flat layout."""
    nx, ny = grid.nx, grid.ny
    ci = np.concatenate([np.zeros(ny, int), np.full(ny, nx - 1), np.arange(nx), np.arange(nx)])
    cj = np.concatenate([np.arange(ny), np.arange(ny), np.zeros(nx, int), np.full(nx, ny - 1)])
    return ci, cj
