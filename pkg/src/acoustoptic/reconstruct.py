"""Recovery of sigma/Kn from internal data, and error diagnostics."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from . import _kernels
from .acousto import InternalField
from .geometry import BOTTOM, LEFT, RIGHT, TOP, Grids, SpatialGrid
from .media import BeamSource

# floor on exponents of attenuation factors
LOG_FLOOR = -700.0


class ReconstructionError(ValueError):
    pass


@dataclass(eq=False)
class Reconstruction:
    values: np.ndarray  # sigma_hat / Kn, NaN where masked
    mask: np.ndarray  # True where the cell was masked
    metadata: dict = field(default_factory=dict)

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())


def _exit_faces(grid: SpatialGrid, ex, ey, d0, d1):
    """Flat boundary index of the faces hit at exit points (relative coordinates)."""
    tol = 1e-9 * max(grid.lx, grid.ly)
    off = grid.face_offsets()
    iy = np.clip(np.floor(ey / grid.dy).astype(int), 0, grid.ny - 1)
    ix = np.clip(np.floor(ex / grid.dx).astype(int), 0, grid.nx - 1)
    flat = np.full(ex.shape, -1)
    if d0 > 0:
        sel = np.abs(ex - grid.lx) <= tol
        flat[sel] = off[RIGHT] + iy[sel]
    elif d0 < 0:
        sel = np.abs(ex) <= tol
        flat[sel] = off[LEFT] + iy[sel]
    rest = flat < 0
    if d1 > 0:
        sel = rest & (np.abs(ey - grid.ly) <= tol)
        flat[sel] = off[TOP] + ix[sel]
    elif d1 < 0:
        sel = rest & (np.abs(ey) <= tol)
        flat[sel] = off[BOTTOM] + ix[sel]
    return flat


def beam_line_geometry(b: BeamSource, grids: Grids, sigma: np.ndarray | None = None):
    """Per cell: entry-point beam value, exit face index and optical path along ``theta0``.

    Returns ``(f_entry, exit_flat, path)`` where ``path`` is the full-chord
    integral of ``sigma`` (zeros if ``sigma`` is None).
    """
    sp = grids.spatial
    sig = np.ascontiguousarray(np.ones(sp.shape) if sigma is None else sigma)
    d0, d1 = b.theta0
    dp, _, ex, ey = _kernels.march_cells(sig, sp.dx, sp.dy, d0, d1)
    dm, _, nx_, ny_ = _kernels.march_cells(sig, sp.dx, sp.dy, -d0, -d1)
    x0, y0 = sp.origin
    f_entry = np.where(b.region_contains(sp, nx_ + x0, ny_ + y0), b.value, 0.0)
    return f_entry, _exit_faces(sp, ex, ey, d0, d1), dp + dm


def reconstruct_sigma(H: InternalField, b: BeamSource, albedo_trace: np.ndarray, grids: Grids,
                      log_floor: float = LOG_FLOOR) -> Reconstruction:
    """``sigma_hat/Kn = -(f(entry)/A f(exit)) H`` evaluated in log space.

    The exit measurement is read from the Gamma_+ trace at the face pierced
    by the ray and the quadrature direction of ``theta0``.
    """
    sp = grids.spatial
    if not H.grid.same_as(sp):
        raise ReconstructionError("internal field and grids differ")
    gp = grids.gamma_plus
    if albedo_trace.shape != (len(gp),):
        raise ReconstructionError(f"albedo trace has shape {albedo_trace.shape}, expected ({len(gp)},)")
    f_entry, exit_flat, _ = beam_line_geometry(b, grids)
    dense = gp.to_layout(albedo_trace)
    a_exit = np.where(exit_flat >= 0, dense[b.k0, np.maximum(exit_flat, 0)], 0.0)
    with np.errstate(divide="ignore"):
        log_a = np.log(np.where(a_exit > 0, a_exit, 0.0))
        log_f = np.log(f_entry)
        log_h = np.log(np.abs(H.values))
    expo = log_h + log_f - log_a
    mask = (a_exit <= 0) | (log_a < log_floor) | (f_entry <= 0) | (expo > -log_floor)
    zero_h = (H.values == 0) & ~mask
    vals = np.full(sp.shape, np.nan)
    ok = ~mask & ~zero_h
    vals[ok] = -np.sign(H.values[ok]) * np.exp(expo[ok])
    vals[zero_h] = 0.0
    meta = {"masked": int(mask.sum()), "guard_log_floor": log_floor,
            "masked_by_underflow": int(((a_exit > 0) & (log_a < log_floor)).sum()),
            "masked_outside_beam": int(((f_entry <= 0) | (exit_flat < 0)).sum()),
            "provenance": H.provenance}
    return Reconstruction(vals, mask, meta)


def relative_error_field(H: InternalField, u1v1_log: np.ndarray, kn: float, sigma: np.ndarray,
                         convention: Literal["matched", "literal"] = "matched",
                         log_floor: float = LOG_FLOOR):
    """Pointwise relative deviation of ``Kn H`` from its ballistic leading term.

    ``matched``: ``(Kn H + sigma <u1v1>) / (sigma <u1v1>)``, whose leading
    term cancels exactly.  ``literal``: ``(Kn H - <u1v1>) / <u1v1>``.
    Returns ``(field, l2_norm, metadata)``; cells with ``log <u1v1>`` below
    the floor are excluded and counted.
    """
    grid = H.grid
    mask = ~(u1v1_log > log_floor)
    with np.errstate(divide="ignore"):
        log_kh = np.log(kn * np.abs(H.values))
    err = np.full(grid.shape, np.nan)
    ok = ~mask
    if convention == "matched":
        ratio = np.sign(H.values) * np.exp(log_kh - np.log(sigma) - u1v1_log)
        err[ok] = ratio[ok] + 1.0
    elif convention == "literal":
        ratio = np.sign(H.values) * np.exp(log_kh - u1v1_log)
        err[ok] = ratio[ok] - 1.0
    else:
        raise ValueError(f"unknown convention {convention!r}")
    l2 = float(np.sqrt(np.nansum(err ** 2) * grid.cell_area))
    meta = {"convention": convention, "masked": int(mask.sum()),
            "definition": ("(Kn*H + sigma*<u1v1>)/(sigma*<u1v1>)" if convention == "matched"
                           else "(Kn*H - <u1v1>)/<u1v1>")}
    return err, l2, meta


def attenuation_ratio(b: BeamSource, albedo_trace: np.ndarray, grids: Grids, row: int,
                      sigma: np.ndarray, kn: float):
    """``A f(exit) / f(entry)`` for the cells of one grid row along ``theta0``.

    Returns ``(ratio, exact, deviation)`` arrays where ``exact`` is the
    attenuation ``exp(-path/Kn)`` along the full chord.
    """
    f_entry, exit_flat, path = beam_line_geometry(b, grids, sigma)
    dense = grids.gamma_plus.to_layout(albedo_trace)
    fe = f_entry[:, row]
    flat = exit_flat[:, row]
    if np.any(fe <= 0) or np.any(flat < 0):
        raise ReconstructionError(f"row {row} is not fully covered by the beam")
    ratio = dense[b.k0, flat] / fe
    exact = np.exp(np.maximum(-path[:, row] / kn, LOG_FLOOR))
    return ratio, exact, ratio - exact


# ----------------------------------------------------------------------------
# scaling fits


class ScalingError(ValueError):
    pass


@dataclass
class LineFit:
    slope: float
    intercept: float
    r2: float
    n: int


def _line(x, y) -> LineFit:
    x = np.asarray(x, float).reshape(-1, 1)
    y = np.asarray(y, float)
    reg = LinearRegression().fit(x, y)
    r2 = float(r2_score(y, reg.predict(x))) if len(y) > 2 else 1.0
    return LineFit(float(reg.coef_[0]), float(reg.intercept_), r2, len(y))


def fit_scalings(kn, h, l2_error, min_points: int = 4) -> dict:
    """Least-squares fits of ``log E`` vs ``1/Kn`` per ``h`` and of ``E`` vs ``h`` per ``Kn``."""
    kn, h, err = (np.asarray(a, float) for a in (kn, h, l2_error))
    if not (kn.shape == h.shape == err.shape):
        raise ScalingError("kn, h and error arrays must have equal length")
    good = np.isfinite(err) & (err > 0)
    by_h, by_kn = defaultdict(list), defaultdict(list)
    for k, hh, e in zip(kn[good], h[good], err[good]):
        by_h[float(hh)].append((float(k), float(e)))
        by_kn[float(k)].append((float(hh), float(e)))
    kn_fits = {hh: _line([1 / k for k, _ in pts], [np.log(e) for _, e in pts])
               for hh, pts in sorted(by_h.items()) if len({k for k, _ in pts}) >= min_points}
    h_fits = {k: _line([hh for hh, _ in pts], [e for _, e in pts])
              for k, pts in sorted(by_kn.items(), reverse=True) if len({hh for hh, _ in pts}) >= min_points}
    if not kn_fits and not h_fits:
        raise ScalingError(f"degenerate sweep: need at least {min_points} distinct points along Kn or h")
    return {"log_error_vs_inv_kn": kn_fits, "error_vs_h": h_fits}
