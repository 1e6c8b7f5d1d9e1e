"""Acousto-optic measurements: boundary terms, the internal functional and its
Fourier recovery from modulated boundary data."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .geometry import Grids, SpatialGrid
from .media import MediaCoefficients, ModulationParams, modulate
from .transport import (DEFAULT_TOL, PhaseSpaceField, SolveReport, TransportError,
                        TransportProblem, solve, trace)


class MeasurementError(ValueError):
    pass


@dataclass(eq=False)
class InternalField:
    values: np.ndarray
    grid: SpatialGrid
    provenance: Literal["direct", "fourier"] = "direct"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise MeasurementError(f"internal field shape {self.values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise MeasurementError("internal field has non-finite values")

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)


def internal_direct(u: PhaseSpaceField, v: PhaseSpaceField, m: MediaCoefficients) -> InternalField:
    """``H = (sigma_s/Kn)<u><v> - (sigma/Kn)<uv>``."""
    if u.values.shape != v.values.shape or not u.spatial.same_as(m.grid):
        raise MeasurementError("u, v and media must share the same grids")
    ang = u.angular
    h = (m.sigma_s / m.kn) * u.average() * v.average() - (m.sigma / m.kn) * ang.average(u.values * v.values)
    return InternalField(h, m.grid, "direct")


# ----------------------------------------------------------------------------
# boundary terms


@dataclass
class BoundaryTerm:
    value: float
    reliable: bool
    report: SolveReport


class Measurer:
    """Evaluates boundary terms for fixed data ``f`` (on Gamma_-) and ``g`` (on Gamma_+).

    The unmodulated adjoint solve is done once and reused for every ``(q, phase)``.
    """

    def __init__(self, media: MediaCoefficients, grids: Grids, f: np.ndarray, g: np.ndarray,
                 tol: float = DEFAULT_TOL, max_iter: int = 2000, accel: bool = True):
        self.media, self.grids = media, grids
        self.f, self.g = np.asarray(f, float), np.asarray(g, float)
        self.tol, self.max_iter, self.accel = tol, max_iter, accel
        self._adjoint: tuple[np.ndarray, SolveReport] | None = None

    @property
    def adjoint_trace(self) -> np.ndarray:
        if self._adjoint is None:
            p = TransportProblem(self.media, self.grids, self.g, direction_sign="adjoint")
            v, rep = solve(p, self.tol, self.max_iter, self.accel)
            if not rep.converged:
                raise TransportError(f"adjoint solve did not converge ({rep.final_residual:.3e})")
            self._adjoint = (trace(v, self.grids.gamma_minus), rep)
        return self._adjoint[0]

    def unreliable_below(self) -> float:
        """Magnitude under which a boundary term is dominated by solver error."""
        g = self.grids
        boundary = 2 * (g.spatial.lx + g.spatial.ly) * 2 * np.pi
        fs = float(np.max(np.abs(self.f), initial=0.0))
        gs = float(np.max(np.abs(self.g), initial=0.0))
        return 10 * self.tol * fs * gs * boundary

    def boundary_term(self, eps: float, q, phase: Literal["cos", "sin"] = "cos") -> BoundaryTerm:
        g = self.grids
        at_g = self.adjoint_trace
        me = modulate(self.media, ModulationParams(eps, tuple(q), phase))
        u, rep = solve(TransportProblem(me, g, self.f), self.tol, self.max_iter, self.accel)
        if not rep.converged:
            raise TransportError(f"modulated solve did not converge at q={tuple(q)} ({rep.final_residual:.3e})")
        a_f = trace(u, g.gamma_plus)
        bt = g.gamma_minus.integrate(self.f * at_g, g.angular) + g.gamma_plus.integrate(a_f * self.g, g.angular)
        return BoundaryTerm(bt, abs(bt) > self.unreliable_below(), rep)

    def measure_lattice(self, order: int, eps: float, phases=("cos", "sin"),
                        workers: int = 1) -> "MeasurementSet":
        """Boundary terms on the dual lattice ``2 pi (kx/Lx, ky/Ly)``, ``|k| <= order``."""
        sp = self.grids.spatial
        jobs = [(kx, ky, ph) for kx in range(-order, order + 1) for ky in range(-order, order + 1)
                for ph in phases]
        self.adjoint_trace  # noqa: B018  (solve once before fanning out)

        def run(job):
            kx, ky, ph = job
            q = (2 * np.pi * kx / sp.lx, 2 * np.pi * ky / sp.ly)
            return self.boundary_term(eps, q, ph)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(run, jobs))
        else:
            results = [run(j) for j in jobs]
        rows = [(2 * np.pi * kx / sp.lx, 2 * np.pi * ky / sp.ly, ph, eps, r.value)
                for (kx, ky, ph), r in zip(jobs, results)]
        return MeasurementSet(rows, eps, lx=sp.lx, ly=sp.ly,
                              unreliable=sum(not r.reliable for r in results),
                              max_iterations=max(r.report.iterations for r in results))


def boundary_term(f: np.ndarray, g: np.ndarray, eps: float, q, phase, m: MediaCoefficients, grids: Grids,
                  tol: float = DEFAULT_TOL) -> BoundaryTerm:
    return Measurer(m, grids, f, g, tol).boundary_term(eps, q, phase)


# ----------------------------------------------------------------------------
# measurement sets and Fourier recovery


@dataclass
class MeasurementSet:
    """Rows ``(qx, qy, phase, eps, bt_value)``."""

    rows: list
    eps: float
    lx: float = 1.0
    ly: float = 1.0
    unreliable: int = 0
    max_iterations: int = 0

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["qx", "qy", "phase", "eps", "bt_value"])
            for qx, qy, ph, eps, bt in self.rows:
                w.writerow([repr(float(qx)), repr(float(qy)), ph, repr(float(eps)), repr(float(bt))])

    @classmethod
    def from_csv(cls, path, lx: float = 1.0, ly: float = 1.0) -> "MeasurementSet":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"measurement file not found: {path}")
        with path.open(newline="") as fh:
            rd = csv.DictReader(fh)
            rows = [(float(r["qx"]), float(r["qy"]), r["phase"], float(r["eps"]), float(r["bt_value"]))
                    for r in rd]
        if not rows:
            raise MeasurementError(f"{path} contains no measurements")
        eps = {r[3] for r in rows}
        if len(eps) != 1:
            raise MeasurementError(f"{path} mixes modulation amplitudes {sorted(eps)}")
        return cls(rows, eps.pop(), lx, ly)

    def lattice(self) -> dict[tuple[int, int, str], float]:
        out = {}
        for qx, qy, ph, _, bt in self.rows:
            kx = qx * self.lx / (2 * np.pi)
            ky = qy * self.ly / (2 * np.pi)
            ik, jk = int(round(kx)), int(round(ky))
            if abs(kx - ik) > 1e-6 or abs(ky - jk) > 1e-6:
                raise MeasurementError(f"q=({qx:.6g}, {qy:.6g}) is not on the dual lattice")
            out[(ik, jk, ph)] = bt
        return out


def synthesize(h: np.ndarray, grid: SpatialGrid, order: int, eps: float,
               phases=("cos", "sin")) -> MeasurementSet:
    """Leading-order boundary terms ``eps |S^1| sum osc(q.x) H dx`` of a known field."""
    x, y = grid.centers()
    rows = []
    for kx in range(-order, order + 1):
        for ky in range(-order, order + 1):
            q = (2 * np.pi * kx / grid.lx, 2 * np.pi * ky / grid.ly)
            arg = q[0] * x + q[1] * y
            for ph in phases:
                osc = np.cos(arg) if ph == "cos" else np.sin(arg)
                rows.append((q[0], q[1], ph, eps, eps * 2 * np.pi * float(np.sum(osc * h)) * grid.cell_area))
    return MeasurementSet(rows, eps, grid.lx, grid.ly)


def fourier_coefficients(ms: MeasurementSet, order: int | None = None) -> tuple[np.ndarray, dict]:
    """Hermitian coefficient array ``c[kx + K, ky + K]`` of ``H`` (unnormalised by ``|Omega|``).

    The coefficient at ``k`` is ``BT_cos/(eps 2pi) - i BT_sin/(eps 2pi)``; it
    is symmetrised with the conjugate of the ``-k`` estimate so the series is
    real.  The discarded antisymmetric part is reported as ``conjugate_defect``.
    """
    lat = ms.lattice()
    k_avail = max(max(abs(a), abs(b)) for a, b, _ in lat)
    order = k_avail if order is None else order
    ks = range(-order, order + 1)
    missing = [(a, b, ph) for a in ks for b in ks for ph in ("cos", "sin") if (a, b, ph) not in lat]
    if missing:
        raise MeasurementError(f"{len(missing)} lattice measurements missing for order {order}, "
                               f"e.g. {missing[:3]} (both cos and sin phases are required)")
    n = 2 * order + 1
    scale = ms.eps * 2 * np.pi
    c = np.zeros((n, n), complex)
    for a in ks:
        for b in ks:
            c[a + order, b + order] = (lat[(a, b, "cos")] - 1j * lat[(a, b, "sin")]) / scale
    flipped = np.conj(c[::-1, ::-1])
    defect = float(np.max(np.abs(c - flipped)) / max(np.max(np.abs(c)), 1e-300))
    meta = {"eps": ms.eps, "order": order, "n_measurements": len(lat), "conjugate_defect": defect,
            "sin_phase_extension": True, "truncated_below_available": order < k_avail}
    return 0.5 * (c + flipped), meta


def evaluate_series(coef: np.ndarray, x, y, lx: float, ly: float, origin=(0.0, 0.0)) -> np.ndarray:
    """Complex values of ``sum c_k exp(i q_k . x) / (lx ly)`` on the outer product of ``x`` and ``y``."""
    order = (coef.shape[0] - 1) // 2
    kk = np.arange(-order, order + 1)
    ex = np.exp(2j * np.pi * np.outer(np.asarray(x) - origin[0], kk) / lx)
    ey = np.exp(2j * np.pi * np.outer(np.asarray(y) - origin[1], kk) / ly)
    return ex @ coef @ ey.T / (lx * ly)


def recover_H(ms: MeasurementSet, grid: SpatialGrid, order: int | None = None) -> InternalField:
    """Truncated Fourier series of ``H`` on the box from cos/sin boundary terms, at cell centres."""
    coef, meta = fourier_coefficients(ms, order)
    hc = evaluate_series(coef, grid.xc, grid.yc, grid.lx, grid.ly, grid.origin)
    meta["imag_residue"] = float(np.max(np.abs(hc.imag)) / max(np.max(np.abs(hc.real)), 1e-300))
    return InternalField(hc.real.copy(), grid, "fourier", meta)


def first_order_ratios(f: np.ndarray, eps_list, q, m: MediaCoefficients, grids: Grids,
                  phase: Literal["cos", "sin"] = "cos", tol: float = DEFAULT_TOL) -> list[float]:
    """``||u_eps - u|| / (eps ||u_eps||)`` for each amplitude (0 for ``eps = 0``)."""
    eps_list = list(eps_list)
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise MeasurementError("eps list must be decreasing")
    u, rep = solve(TransportProblem(m, grids, f), tol)
    out = []
    for eps in eps_list:
        if eps == 0:
            out.append(0.0)
            continue
        ue, rep_e = solve(TransportProblem(modulate(m, ModulationParams(eps, tuple(q), phase)), grids, f), tol)
        if not (rep.converged and rep_e.converged):
            raise TransportError(f"solve did not converge for eps={eps}")
        out.append(float(np.max(np.abs(ue.values - u.values)) / (eps * ue.sup())))
    return out


# name used by the operation table
lemma22_check = first_order_ratios
