"""Discrete-ordinates solver for the steady RTE.

The equation ``theta.grad(u) = (sigma_s/Kn)(<u> - u) - Kn sigma_a u + S`` is
discretised with step (first-order upwind) differencing per direction.  The
scattering source is resolved by source iteration on the angular average,
optionally wrapped in GMRES.  Adjoint problems ``-theta.grad(v) = L v + S``
are solved by reflecting directions and running a forward solve.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import _kernels
from .geometry import AngularGrid, BoundarySet, Grids, SpatialGrid, boundary_cells
from .media import MediaCoefficients

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class TransportError(RuntimeError):
    pass


@dataclass(eq=False)
class PhaseSpaceField:
    values: np.ndarray
    spatial: SpatialGrid
    angular: AngularGrid

    def __post_init__(self):
        shape = (self.angular.n_dirs,) + self.spatial.shape
        if self.values.shape != shape:
            raise TransportError(f"field shape {self.values.shape} does not match grids {shape}")
        if not np.all(np.isfinite(self.values)):
            raise TransportError("phase-space field contains NaN or Inf")

    def average(self) -> np.ndarray:
        return self.angular.average(self.values)

    def reflected(self) -> "PhaseSpaceField":
        return PhaseSpaceField(self.values[self.angular.reverse], self.spatial, self.angular)

    def __add__(self, other: "PhaseSpaceField") -> "PhaseSpaceField":
        return PhaseSpaceField(self.values + other.values, self.spatial, self.angular)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    acceleration_used: Literal["none", "krylov"]
    tolerance: float = DEFAULT_TOL


@dataclass(eq=False)
class TransportProblem:
    """Boundary value problem for the forward or adjoint RTE.

    ``inflow`` lives on Gamma_- for forward problems and on Gamma_+ for
    adjoint ones.  ``source`` is ``None``, an isotropic ``(nx, ny)`` field or a
    full ``(n_dirs, nx, ny)`` field.
    """

    media: MediaCoefficients
    grids: Grids
    inflow: np.ndarray | None = None
    source: np.ndarray | None = None
    direction_sign: Literal["forward", "adjoint"] = "forward"
    _bcells: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not self.grids.spatial.same_as(self.media.grid):
            raise TransportError("media and grids live on different spatial grids")
        if self.direction_sign not in ("forward", "adjoint"):
            raise TransportError(f"direction_sign must be forward or adjoint, got {self.direction_sign!r}")
        bset = self.data_set
        if self.inflow is None:
            self.inflow = bset.zeros()
        self.inflow = np.asarray(self.inflow, dtype=float)
        if self.inflow.shape != (len(bset),):
            raise TransportError(f"inflow has shape {self.inflow.shape}, expected ({len(bset)},)")
        if not np.all(np.isfinite(self.inflow)):
            raise TransportError("inflow contains non-finite values")
        if self.source is not None:
            s = np.asarray(self.source, dtype=float)
            ok = s.shape in (self.grids.spatial.shape, (self.grids.angular.n_dirs,) + self.grids.spatial.shape)
            if not ok:
                raise TransportError(f"source shape {s.shape} matches neither spatial nor phase-space grid")
            self.source = s
        self._bcells = boundary_cells(self.grids.spatial)

    @property
    def data_set(self) -> BoundarySet:
        return self.grids.gamma_minus if self.direction_sign == "forward" else self.grids.gamma_plus

    @property
    def trace_set(self) -> BoundarySet:
        return self.grids.gamma_plus if self.direction_sign == "forward" else self.grids.gamma_minus

    def source_sup(self) -> float:
        return 0.0 if self.source is None else float(np.max(np.abs(self.source)))


# ----------------------------------------------------------------------------


def apply_L(u: PhaseSpaceField, m: MediaCoefficients) -> PhaseSpaceField:
    """Collision operator ``(sigma_s/Kn) <u> - (sigma/Kn) u``."""
    if not u.spatial.same_as(m.grid):
        raise TransportError("field and media live on different grids")
    vals = (m.sigma_s / m.kn) * u.average()[None] - (m.sigma / m.kn) * u.values
    return PhaseSpaceField(vals, u.spatial, u.angular)


def _source_stack(source, n_dirs, shape):
    if source is None:
        return np.zeros((1,) + shape), np.zeros(shape)
    if source.ndim == 2:
        return np.zeros((1,) + shape), np.ascontiguousarray(source)
    return np.ascontiguousarray(source), np.zeros(shape)


def _solve_forward(media: MediaCoefficients, grids: Grids, bc: np.ndarray, source,
                   tol: float, max_iter: int, accel: bool):
    spatial, angular = grids.spatial, grids.angular
    mu, eta = np.ascontiguousarray(angular.mu), np.ascontiguousarray(angular.eta)
    dx, dy = spatial.dx, spatial.dy
    sigt = np.ascontiguousarray(media.sigma / media.kn)
    scat = media.sigma_s / media.kn
    src, iso = _source_stack(source, angular.n_dirs, spatial.shape)
    zsrc = np.zeros((1,) + spatial.shape)
    zbc = np.zeros_like(bc)
    count = [0]

    def sweep(phi, with_data):
        count[0] += 1
        q = scat * phi
        if with_data:
            psi = _kernels.sweep_all(mu, eta, dx, dy, sigt, src, iso + q, bc)
        else:
            psi = _kernels.sweep_all(mu, eta, dx, dy, sigt, zsrc, q, zbc)
        if not np.all(np.isfinite(psi)):
            raise TransportError("non-finite values encountered during transport sweep")
        return psi

    psi = sweep(np.zeros(spatial.shape), True)
    b = angular.average(psi)
    scale = float(np.max(np.abs(b)))
    if scale == 0.0:
        psi = np.zeros((angular.n_dirs,) + spatial.shape)
        return psi, SolveReport(count[0], 0.0, True, "krylov" if accel else "none", tol)
    atol = tol * scale
    phi = b.copy()
    residual = scale
    n = b.size

    if accel:
        def matvec(x):
            x = x.reshape(spatial.shape)
            return (x - angular.average(sweep(x, False))).ravel()

        A = LinearOperator((n, n), matvec=matvec, dtype=float)
        while count[0] < max_iter:
            budget = max_iter - count[0]
            restart = min(n, 200, budget)
            phi_flat, _ = gmres(A, b.ravel(), x0=phi.ravel(), rtol=0.0, atol=0.25 * atol,
                                restart=restart, maxiter=max(1, budget // max(restart, 1)))
            phi = phi_flat.reshape(spatial.shape)
            psi = sweep(phi, True)
            new = angular.average(psi)
            residual = float(np.max(np.abs(new - phi)))
            if residual <= atol:
                break
            phi = new
    else:
        while count[0] < max_iter:
            psi = sweep(phi, True)
            new = angular.average(psi)
            residual = float(np.max(np.abs(new - phi)))
            phi = new
            if residual <= atol:
                break
    converged = residual <= atol
    if not converged:
        log.warning("transport solve did not converge: residual %.3e after %d sweeps", residual, count[0])
    return psi, SolveReport(count[0], residual / scale, converged, "krylov" if accel else "none", tol)


def solve(p: TransportProblem, tol: float = DEFAULT_TOL, max_iter: int = 2000,
          accel: bool = True) -> tuple[PhaseSpaceField, SolveReport]:
    """Solve the forward or adjoint problem; the report carries the relative residual."""
    if not tol > 0:
        raise TransportError(f"tolerance must be positive, got {tol}")
    g = p.grids
    rev = g.angular.reverse
    if p.direction_sign == "forward":
        bc = g.gamma_minus.to_layout(p.inflow)
        src = p.source
    else:
        bc = np.zeros((g.angular.n_dirs, g.spatial.n_boundary))
        bc[rev[g.gamma_plus.direction], g.gamma_plus.flat] = p.inflow
        src = p.source[rev] if (p.source is not None and p.source.ndim == 3) else p.source
    psi, rep = _solve_forward(p.media, g, bc, src, tol, max_iter, accel)
    if p.direction_sign == "adjoint":
        psi = psi[rev]
    return PhaseSpaceField(psi, g.spatial, g.angular), rep


def trace(u: PhaseSpaceField, bset: BoundarySet) -> np.ndarray:
    """Boundary trace of an upwind solution: the adjacent cell value per entry."""
    ci, cj = boundary_cells(u.spatial)
    return u.values[bset.direction, ci[bset.flat], cj[bset.flat]]


def albedo(p: TransportProblem, tol: float = DEFAULT_TOL, max_iter: int = 2000,
           accel: bool = True, solution: PhaseSpaceField | None = None) -> np.ndarray:
    """Outgoing trace: ``A f`` on Gamma_+ (forward) or ``A~ g`` on Gamma_- (adjoint)."""
    if solution is None:
        solution, rep = solve(p, tol, max_iter, accel)
        if not rep.converged:
            raise TransportError(f"solve did not converge (residual {rep.final_residual:.3e})")
    return trace(solution, p.trace_set)


def boundary_pairing(u: PhaseSpaceField, v: PhaseSpaceField, grids: Grids,
                     f: np.ndarray | None = None, g: np.ndarray | None = None) -> float:
    """``int_{dOmega x S} (theta.n) u v``, using the prescribed data where given."""
    gm, gp = grids.gamma_minus, grids.gamma_plus
    u_in = trace(u, gm) if f is None else f
    v_out = trace(v, gp) if g is None else g
    return gm.integrate(u_in * trace(v, gm), grids.angular) + gp.integrate(trace(u, gp) * v_out, grids.angular)


def check_apriori_bound(u: PhaseSpaceField, p: TransportProblem) -> float:
    """``||u|| / ((1/Kn) (||S|| + ||f|| / Kn))``; bounded across Kn per the a priori estimate."""
    kn = p.media.kn
    denom = (p.source_sup() + float(np.max(np.abs(p.inflow), initial=0.0)) / kn) / kn
    if denom == 0.0:
        return 0.0
    return u.sup() / denom


# ----------------------------------------------------------------------------
# dense oracle


def dense_system(media: MediaCoefficients, grids: Grids, inflow: np.ndarray, source=None):
    """Assemble the full discrete system entry by entry: returns ``(A, rhs)``.

    Unknown ordering is ``(k, i, j)`` row-major.  Only meant for tiny grids.
    """
    spatial, angular = grids.spatial, grids.angular
    nk, nx, ny = angular.n_dirs, spatial.nx, spatial.ny
    N = nk * nx * ny
    A = np.zeros((N, N))
    rhs = np.zeros(N)
    bc = grids.gamma_minus.to_layout(inflow)
    off = spatial.face_offsets()
    sig = media.sigma / media.kn
    scat = media.sigma_s / media.kn

    def idx(k, i, j):
        return (k * nx + i) * ny + j

    for k in range(nk):
        m_, e_ = angular.mu[k], angular.eta[k]
        ax, ay = abs(m_) / spatial.dx, abs(e_) / spatial.dy
        for i in range(nx):
            for j in range(ny):
                r = idx(k, i, j)
                A[r, r] += ax + ay + sig[i, j]
                for kk in range(nk):
                    A[r, idx(kk, i, j)] -= scat[i, j] / nk
                if source is not None:
                    rhs[r] += source[i, j] if np.ndim(source) == 2 else source[k, i, j]
                iu = i - 1 if m_ >= 0 else i + 1
                if 0 <= iu < nx:
                    A[r, idx(k, iu, j)] -= ax
                else:
                    rhs[r] += ax * bc[k, off[0] + j if m_ >= 0 else off[1] + j]
                ju = j - 1 if e_ >= 0 else j + 1
                if 0 <= ju < ny:
                    A[r, idx(k, i, ju)] -= ay
                else:
                    rhs[r] += ay * bc[k, off[2] + i if e_ >= 0 else off[3] + i]
    return A, rhs


def dense_solve(media, grids, inflow, source=None) -> PhaseSpaceField:
    A, rhs = dense_system(media, grids, inflow, source)
    sol = np.linalg.solve(A, rhs)
    return PhaseSpaceField(sol.reshape(grids.angular.n_dirs, *grids.spatial.shape), grids.spatial, grids.angular)


# ----------------------------------------------------------------------------
# field dumps


def write_field_csv(path, u: PhaseSpaceField) -> None:
    """Header ``nx,ny,ndirs`` then one row of ``n_dirs`` values per cell ``(i, j)``."""
    nx, ny = u.spatial.shape
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([nx, ny, u.angular.n_dirs])
        for i in range(nx):
            for j in range(ny):
                w.writerow([repr(float(v)) for v in u.values[:, i, j]])


def read_field_csv(path, spatial: SpatialGrid | None = None) -> PhaseSpaceField:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    nx, ny, nd = (int(v) for v in rows[0])
    vals = np.array([[float(v) for v in r] for r in rows[1:]])
    if vals.shape != (nx * ny, nd):
        raise TransportError(f"{path}: expected {nx * ny} rows of {nd} values")
    spatial = spatial or SpatialGrid(nx, ny)
    return PhaseSpaceField(vals.T.reshape(nd, nx, ny).copy(), spatial, AngularGrid(nd))
