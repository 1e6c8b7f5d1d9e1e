"""Optical coefficients, acoustic modulation and the angularly concentrated beam."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Union

import numpy as np

from .geometry import (BOTTOM, FACE_NAMES, LEFT, RIGHT, TOP, AngularGrid, BoundarySet,
                       SpatialGrid)


class MediaError(ValueError):
    pass


class BeamError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MediaCoefficients:
    """Cell-centred absorption/scattering coefficients, piecewise constant per cell."""

    sigma_a: np.ndarray
    sigma_s: np.ndarray
    kn: float
    grid: SpatialGrid

    def __post_init__(self):
        sa = np.array(self.sigma_a, dtype=float)
        ss = np.array(self.sigma_s, dtype=float)
        if sa.ndim == 0:
            sa = np.full(self.grid.shape, float(sa))
        if ss.ndim == 0:
            ss = np.full(self.grid.shape, float(ss))
        for name, arr in (("sigma_a", sa), ("sigma_s", ss)):
            if arr.shape != self.grid.shape:
                raise MediaError(f"{name} has shape {arr.shape}, grid is {self.grid.shape}")
            if not np.all(np.isfinite(arr)):
                raise MediaError(f"{name} contains non-finite values")
        if np.any(sa < 0):
            raise MediaError("sigma_a must be nonnegative")
        if not np.all(ss > 0):
            raise MediaError("sigma_s must be uniformly positive")
        if not (np.isfinite(self.kn) and self.kn > 0):
            raise MediaError(f"Knudsen number must be positive, got {self.kn}")
        sa.setflags(write=False)
        ss.setflags(write=False)
        object.__setattr__(self, "sigma_a", sa)
        object.__setattr__(self, "sigma_s", ss)
        object.__setattr__(self, "kn", float(self.kn))

    @property
    def sigma(self) -> np.ndarray:
        return total_sigma(self)

    def with_kn(self, kn: float) -> "MediaCoefficients":
        return replace(self, kn=kn)


def total_sigma(m: MediaCoefficients) -> np.ndarray:
    """``sigma_s + kn**2 * sigma_a``."""
    return m.sigma_s + m.kn ** 2 * m.sigma_a


@dataclass(frozen=True)
class ModulationParams:
    eps: float
    q: tuple[float, float]
    phase: Literal["cos", "sin"] = "cos"

    def __post_init__(self):
        if not (0.0 <= self.eps < 1.0):
            raise MediaError(f"modulation amplitude must lie in [0, 1), got {self.eps}")
        if self.phase not in ("cos", "sin"):
            raise MediaError(f"phase must be 'cos' or 'sin', got {self.phase!r}")
        object.__setattr__(self, "q", (float(self.q[0]), float(self.q[1])))

    def oscillation(self, grid: SpatialGrid) -> np.ndarray:
        x, y = grid.centers()
        arg = self.q[0] * x + self.q[1] * y
        return np.cos(arg) if self.phase == "cos" else np.sin(arg)


def modulate(m: MediaCoefficients, p: ModulationParams) -> MediaCoefficients:
    """Multiply both coefficients by ``1 + eps * osc(q.x)``."""
    if p.eps == 0.0:
        return m
    ratio = float(m.sigma_s.min() / m.sigma_s.max())
    if p.eps >= ratio:
        raise MediaError(f"eps={p.eps} too large: must stay below min/max sigma_s = {ratio:.3g}")
    factor = 1.0 + p.eps * p.oscillation(m.grid)
    ss = factor * m.sigma_s
    if not np.all(ss > 0):
        raise MediaError("modulated sigma_s lost positivity")
    return MediaCoefficients(factor * m.sigma_a, ss, m.kn, m.grid)


# ----------------------------------------------------------------------------
# beam source


@dataclass(frozen=True)
class Patch:
    """Boundary patch on one face: faces whose midpoint lies within
    ``halfwidth`` of ``center`` (coordinate along the face).  ``halfwidth=0``
    selects the single face owning ``center``."""

    face: Literal["left", "right", "bottom", "top"]
    center: float
    halfwidth: float = 0.0

    def __post_init__(self):
        if self.face not in FACE_NAMES:
            raise BeamError(f"unknown face {self.face!r}")
        if self.halfwidth < 0:
            raise BeamError("patch halfwidth must be nonnegative")

    @property
    def face_id(self) -> int:
        return FACE_NAMES.index(self.face)

    def mirrored(self) -> "Patch":
        opposite = {"left": "right", "right": "left", "bottom": "top", "top": "bottom"}
        return Patch(opposite[self.face], self.center, self.halfwidth)

    def face_mask(self, grid: SpatialGrid) -> np.ndarray:
        """Boolean mask over the flat boundary layout."""
        f = self.face_id
        lo, step, n = ((grid.origin[1], grid.dy, grid.ny) if f in (LEFT, RIGHT)
                       else (grid.origin[0], grid.dx, grid.nx))
        mids = lo + (np.arange(n) + 0.5) * step
        if self.halfwidth == 0.0:
            idx = min(max(int(np.floor((self.center - lo) / step)), 0), n - 1)
            sel = np.arange(n) == idx
        else:
            sel = np.abs(mids - self.center) <= self.halfwidth * (1 + 1e-12)
        mask = np.zeros(grid.n_boundary, bool)
        off = grid.face_offsets()[f]
        mask[off:off + n] = sel
        return mask

    def contains_points(self, grid: SpatialGrid, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Which boundary points (absolute coordinates) fall on the selected faces."""
        x0, x1, y0, y1 = grid.bounds
        f = self.face_id
        tol = 1e-9 * max(grid.lx, grid.ly)
        if f in (LEFT, RIGHT):
            on = np.abs(px - (x0 if f == LEFT else x1)) <= tol
            lo, step, n, s = y0, grid.dy, grid.ny, py
        else:
            on = np.abs(py - (y0 if f == BOTTOM else y1)) <= tol
            lo, step, n, s = x0, grid.dx, grid.nx, px
        idx = np.clip(np.floor((s - lo) / step).astype(int), 0, n - 1)
        sel = self.face_mask(grid)[grid.face_offsets()[f] + idx]
        return on & sel


Region = Union[Literal["all"], Patch]


@dataclass(frozen=True, eq=False)
class BeamSource:
    """Piecewise-constant-in-angle beam of half-width ``h`` about ``theta0``.

    ``value`` is the beam intensity ``c_norm * h**-0.5`` on the cone; the
    normalisation is enforced on the discrete quadrature, so the angular
    average of ``f**2`` is exactly one.
    """

    theta0: tuple[float, float]
    k0: int
    h: float
    c_norm: float
    cone: np.ndarray = field(repr=False)
    region: Region = "all"

    @property
    def value(self) -> float:
        return self.c_norm / np.sqrt(self.h)

    @property
    def angular_values(self) -> np.ndarray:
        return np.where(self.cone, self.value, 0.0)

    def with_region(self, region: Region) -> "BeamSource":
        return replace(self, region=region)

    def region_mask(self, grid: SpatialGrid) -> np.ndarray:
        if self.region == "all":
            return np.ones(grid.n_boundary, bool)
        return self.region.face_mask(grid)

    def region_contains(self, grid: SpatialGrid, px, py) -> np.ndarray:
        px, py = np.asarray(px, float), np.asarray(py, float)
        if self.region == "all":
            return np.ones(np.broadcast(px, py).shape, bool)
        return self.region.contains_points(grid, px, py)


def make_beam(theta0, h: float, angular: AngularGrid, region: Region = "all",
              min_cells: float = 2.0) -> BeamSource:
    """Concentrated beam with arc-distance cone ``|phi - phi0| < h``.

    ``theta0`` is snapped to the nearest quadrature direction and ``h`` must
    span at least ``min_cells`` angular cells.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if not np.isfinite(h) or h <= 0:
        raise BeamError(f"beam half-width must be positive, got {h}")
    if h < min_cells * angular.dphi * (1 - 1e-9):
        need = int(np.ceil(min_cells * 2 * np.pi / h))
        need += need % 2
        raise BeamError(f"h={h:.4g} is below the angular resolution ({min_cells:g} cells of "
                        f"{angular.dphi:.4g}); raise n_dirs to at least {need}")
    k0 = angular.nearest(theta0)
    dist = angular.arc_distance(k0)
    cone = dist < h * (1 - 1e-12)
    m = int(cone.sum())
    c_norm = float(np.sqrt(angular.n_dirs * h / m))
    cone.setflags(write=False)
    t0 = (float(angular.mu[k0]), float(angular.eta[k0]))
    return BeamSource(theta0=t0, k0=k0, h=float(h), c_norm=c_norm, cone=cone, region=region)


def beam_trace(b: BeamSource, bset: BoundarySet, grid: SpatialGrid) -> np.ndarray:
    """Beam values on the entries of a boundary set (inflow ``f`` or outflow datum ``g``)."""
    if bset.n_dirs != len(b.cone):
        raise BeamError("beam and boundary set use different angular grids")
    if bset.n_boundary != grid.n_boundary:
        raise BeamError("boundary set does not belong to this grid")
    on = b.cone[bset.direction] & b.region_mask(grid)[bset.flat]
    if not np.any(on):
        raise BeamError(f"beam about {b.theta0} has empty support on the {bset.sign} boundary "
                        f"within region {b.region}")
    return np.where(on, b.value, 0.0)


# ----------------------------------------------------------------------------
# coefficient profiles and files


def profile(name: str, grid: SpatialGrid, **params) -> np.ndarray:
    """Built-in analytic coefficient profiles sampled at cell centres."""
    x, y = grid.centers()
    if name == "constant":
        return np.full(grid.shape, float(params.get("value", 1.0)))
    if name == "gaussian-bump":
        base = float(params.get("base", 1.0))
        amp = float(params.get("amplitude", 0.5))
        cx, cy = params.get("center", (0.5 * grid.lx, 0.5 * grid.ly))
        w = float(params.get("width", 0.15))
        return base + amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w * w))
    if name == "two-inclusions":
        base = float(params.get("base", 1.0))
        values = params.get("values", (2.0, 0.5))
        centers = params.get("centers", ((0.3, 0.35), (0.7, 0.65)))
        r = float(params.get("radius", 0.12))
        out = np.full(grid.shape, base)
        for v, (cx, cy) in zip(values, centers):
            out[(x - cx) ** 2 + (y - cy) ** 2 <= r * r] = float(v)
        return out
    raise MediaError(f"unknown profile {name!r}; expected constant, gaussian-bump or two-inclusions")


def load_field_csv(path) -> tuple[np.ndarray, SpatialGrid]:
    """Read a grid file: header ``nx,ny,Lx,Ly`` then ``nx`` rows of ``ny`` values."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"coefficient file not found: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        nx, ny = int(rows[0][0]), int(rows[0][1])
        lx, ly = float(rows[0][2]), float(rows[0][3])
        vals = np.array([[float(v) for v in r] for r in rows[1:]])
    except (IndexError, ValueError) as exc:
        raise MediaError(f"malformed coefficient file {path}: {exc}") from exc
    if vals.shape != (nx, ny):
        raise MediaError(f"{path}: header says {nx}x{ny} but found {vals.shape}")
    return vals, SpatialGrid(nx, ny, lx, ly)


def save_field_csv(path, values: np.ndarray, grid: SpatialGrid) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([grid.nx, grid.ny, repr(grid.lx), repr(grid.ly)])
        for row in np.asarray(values):
            w.writerow([repr(float(v)) for v in row])
