"""Singular decomposition ``u = u1 + u2`` into ballistic and scattered parts."""
from __future__ import annotations

from typing import Literal

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .geometry import Grids
from .media import BeamSource, MediaCoefficients, beam_trace
from .transport import (DEFAULT_TOL, PhaseSpaceField, SolveReport, TransportError,
                        TransportProblem, solve)

Sign = Literal["forward", "adjoint"]


def ballistic_log(b: BeamSource, m: MediaCoefficients, grids: Grids, sign: Sign = "forward") -> np.ndarray:
    """Logarithm of the exact ballistic field; ``-inf`` off the beam support.

    Forward: attenuation along ``-theta`` back to the entry point.  Adjoint:
    along ``+theta`` to the exit point.
    """
    spatial, angular = grids.spatial, grids.angular
    if not spatial.same_as(m.grid) or len(b.cone) != angular.n_dirs:
        raise TransportError("beam, media and grids must share the same discretisation")
    sig = np.ascontiguousarray(m.sigma)
    out = np.full((angular.n_dirs,) + spatial.shape, -np.inf)
    logf = np.log(b.value)
    s = -1.0 if sign == "forward" else 1.0
    x0, y0 = spatial.origin
    for k in np.flatnonzero(b.cone):
        depth, _, ex, ey = _kernels.march_cells(sig, spatial.dx, spatial.dy,
                                                s * angular.mu[k], s * angular.eta[k])
        hit = b.region_contains(spatial, ex + x0, ey + y0)
        out[k] = np.where(hit, logf - depth / m.kn, -np.inf)
    return out


def ballistic(b: BeamSource, m: MediaCoefficients, grids: Grids, sign: Sign = "forward",
              method: Literal["exact", "discrete"] = "exact") -> PhaseSpaceField:
    """Ballistic part ``u1`` (forward) or ``v1`` (adjoint).

    ``exact`` ray-traces each cell centre through the piecewise-constant
    medium.  ``discrete`` runs one upwind sweep of the pure-attenuation
    equation, which is the ballistic part of the discrete transport solution.
    """
    spatial, angular = grids.spatial, grids.angular
    if method == "exact":
        return PhaseSpaceField(np.exp(ballistic_log(b, m, grids, sign)), spatial, angular)
    if method != "discrete":
        raise ValueError(f"method must be 'exact' or 'discrete', got {method!r}")
    rev = angular.reverse
    if sign == "forward":
        bc = grids.gamma_minus.to_layout(beam_trace(b, grids.gamma_minus, spatial))
    else:
        gp = grids.gamma_plus
        bc = np.zeros((angular.n_dirs, spatial.n_boundary))
        bc[rev[gp.direction], gp.flat] = beam_trace(b, gp, spatial)
    zero = np.zeros(spatial.shape)
    psi = _kernels.sweep_all(np.ascontiguousarray(angular.mu), np.ascontiguousarray(angular.eta),
                             spatial.dx, spatial.dy, np.ascontiguousarray(m.sigma / m.kn),
                             zero[None], zero, bc)
    if sign == "adjoint":
        psi = psi[rev]
    return PhaseSpaceField(psi, spatial, angular)


def remainder(u1: PhaseSpaceField, m: MediaCoefficients, grids: Grids, sign: Sign = "forward",
              tol: float = DEFAULT_TOL, max_iter: int = 2000,
              accel: bool = True) -> tuple[PhaseSpaceField, SolveReport]:
    """Scattered part: zero boundary data, volume source ``(sigma_s/Kn) <u1>``."""
    src = (m.sigma_s / m.kn) * u1.average()
    p = TransportProblem(m, grids, None, src, direction_sign=sign)
    return solve(p, tol=tol, max_iter=max_iter, accel=accel)


def u1v1_closed(f: BeamSource, g: BeamSource, m: MediaCoefficients, grids: Grids) -> tuple[np.ndarray, np.ndarray]:
    """``<u1 v1>`` from the product of attenuation factors: returns ``(value, log value)``."""
    lu = ballistic_log(f, m, grids, "forward")
    lv = ballistic_log(g, m, grids, "adjoint")
    with np.errstate(invalid="ignore"):
        s = lu + lv
    s[np.isnan(s)] = -np.inf
    logv = logsumexp(s, axis=0) - np.log(grids.angular.n_dirs)
    return np.exp(logv), logv


def angular_products(u1: PhaseSpaceField, u2: PhaseSpaceField, v1: PhaseSpaceField, v2: PhaseSpaceField,
                     u1v1: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """The eight scalar fields ``<u_j><v_k>`` (key ``"uj.vk"``) and ``<u_j v_k>`` (key ``"ujvk"``)."""
    for w in (u2, v1, v2):
        if w.values.shape != u1.values.shape:
            raise TransportError("angular products need fields on matching grids")
    ang = u1.angular
    us = {1: u1, 2: u2}
    vs = {1: v1, 2: v2}
    out = {}
    for j, u in us.items():
        for k, v in vs.items():
            out[f"u{j}.v{k}"] = u.average() * v.average()
            out[f"u{j}v{k}"] = ang.average(u.values * v.values)
    if u1v1 is not None:
        out["u1v1"] = u1v1
    return out


def decompose(f: BeamSource, g: BeamSource, m: MediaCoefficients, grids: Grids, tol: float = DEFAULT_TOL,
              max_iter: int = 2000, accel: bool = True, method: Literal["exact", "discrete"] = "exact"):
    """Both decompositions plus their angular products.

    Returns ``(parts, products, reports)`` where ``parts`` maps
    ``u1, u2, v1, v2`` to phase-space fields.
    """
    u1 = ballistic(f, m, grids, "forward", method)
    v1 = ballistic(g, m, grids, "adjoint", method)
    u2, ru = remainder(u1, m, grids, "forward", tol, max_iter, accel)
    v2, rv = remainder(v1, m, grids, "adjoint", tol, max_iter, accel)
    closed = u1v1_closed(f, g, m, grids)[0] if method == "exact" else None
    prods = angular_products(u1, u2, v1, v2, closed)
    return {"u1": u1, "u2": u2, "v1": v1, "v2": v2}, prods, {"u2": ru, "v2": rv}
