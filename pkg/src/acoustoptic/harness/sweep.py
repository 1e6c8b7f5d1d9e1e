"""Experiment orchestration: the Kn/h figure sweep, the end-to-end pipeline and
plot-data emission."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..acousto import Measurer, MeasurementSet, internal_direct, recover_H
from ..decomposition import decompose, u1v1_closed
from ..media import MediaCoefficients, beam_trace, profile
from ..reconstruct import ScalingError, fit_scalings, reconstruct_sigma, relative_error_field
from ..transport import TransportError, TransportProblem, solve, trace
from .config import ExperimentConfig

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["kn", "h", "l2_error", "log_error", "slope_log_error_vs_inv_kn", "r2_log_error_vs_inv_kn",
                 "slope_error_vs_h", "r2_error_vs_h", "converged", "iterations", "residual", "masked", "status"]
FIELD_NAMES = ("u1_avg", "u2_avg", "u1v1", "remainder", "error")


class PipelineError(RuntimeError):
    """Failure inside one pipeline stage; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage, self.cause = stage, cause


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# ----------------------------------------------------------------------------
# figure sweep


@dataclass
class SweepPoint:
    kn: float
    h: float
    row: dict
    fields: dict = field(default_factory=dict)


@dataclass
class SweepResult:
    points: list
    fits: dict
    flags: dict
    config_hash: str
    error_convention: str = "matched"

    @property
    def rows(self) -> list[dict]:
        return [p.row for p in self.points]

    @property
    def failures(self) -> list[dict]:
        return [p.row for p in self.points if p.row["status"] != "ok"]


def run_point(cfg: ExperimentConfig, kn: float, h: float, grids=None) -> SweepPoint:
    """One (Kn, h) cell of the sweep.  Non-convergence yields a failure row, not an exception."""
    grids = cfg.grids() if grids is None else grids
    sp = grids.spatial
    m = cfg.media(sp, kn)
    f, g = cfg.beams(grids.angular, h)
    tol, max_iter, accel = cfg["tol"], cfg["max_iter"], cfg["accel"]
    parts, prods, reps = decompose(f, g, m, grids, tol, max_iter, accel, method=cfg["ballistic"])
    fin = beam_trace(f, grids.gamma_minus, sp)
    gout = beam_trace(g, grids.gamma_plus, sp)
    u, ru = solve(TransportProblem(m, grids, fin), tol, max_iter, accel)
    v, rv = solve(TransportProblem(m, grids, gout, direction_sign="adjoint"), tol, max_iter, accel)
    reports = [reps["u2"], reps["v2"], ru, rv]
    row = {"kn": kn, "h": h, "l2_error": math.nan, "log_error": math.nan,
           "slope_log_error_vs_inv_kn": math.nan, "r2_log_error_vs_inv_kn": math.nan,
           "slope_error_vs_h": math.nan, "r2_error_vs_h": math.nan,
           "converged": all(r.converged for r in reports),
           "iterations": max(r.iterations for r in reports),
           "residual": max(r.final_residual for r in reports), "masked": 0, "status": "ok"}
    if not row["converged"]:
        row["status"] = "nonconverged"
        log.warning("sweep point kn=%g h=%g did not converge", kn, h)
        return SweepPoint(kn, h, row)
    u1v1, u1v1_log = u1v1_closed(f, g, m, grids)
    H = internal_direct(u, v, m)
    err, l2, meta = relative_error_field(H, u1v1_log, kn, m.sigma, cfg["error_convention"])
    row.update(l2_error=l2, log_error=math.log(l2) if l2 > 0 else -math.inf, masked=meta["masked"])
    fields = {"u1_avg": parts["u1"].average(), "u2_avg": parts["u2"].average(), "u1v1": u1v1,
              "remainder": kn * H.values + m.sigma * u1v1, "error": np.nan_to_num(err, nan=0.0)}
    return SweepPoint(kn, h, row, fields)


def _spread(avg: np.ndarray, sp) -> float:
    """Mass-weighted transverse standard deviation about the weighted mean."""
    w = avg.sum(axis=0)
    tot = w.sum()
    if tot <= 0:
        return 0.0
    mean = float((w * sp.yc).sum() / tot)
    return float(np.sqrt((w * (sp.yc - mean) ** 2).sum() / tot))


def monotonicity_flags(points: list[SweepPoint], sp) -> dict:
    """Qualitative checks on the ballistic maps: smaller h narrows, smaller Kn attenuates."""
    ok = [p for p in points if p.fields]
    kns = sorted({p.kn for p in ok}, reverse=True)
    hs = sorted({p.h for p in ok})
    by = {(p.kn, p.h): p for p in ok}
    narrow, decay = True, True
    for kn in kns:
        s = [_spread(by[kn, h].fields["u1_avg"], sp) for h in hs if (kn, h) in by]
        narrow &= all(a <= b * (1 + 1e-12) for a, b in zip(s, s[1:]))
    for h in hs:
        mass = [float(by[kn, h].fields["u1_avg"].sum()) for kn in kns if (kn, h) in by]
        decay &= all(b <= a * (1 + 1e-12) for a, b in zip(mass, mass[1:]))
    return {"spread_narrows_with_h": bool(narrow), "u1_decays_with_inv_kn": bool(decay)}


def run_figure_sweep(cfg: ExperimentConfig, workers: int | None = None) -> SweepResult:
    """All (Kn, h) points of the configuration, computed by a worker pool in a fixed order."""
    workers = cfg["workers"] if workers is None else workers
    grids = cfg.grids()
    jobs = [(kn, h) for kn in cfg["kn_list"] for h in cfg["h_list"]]

    def run(job):
        return run_point(cfg, job[0], job[1], grids)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            points = list(ex.map(run, jobs))
    else:
        points = [run(j) for j in jobs]
    good = [p.row for p in points if p.row["status"] == "ok"]
    fits: dict = {}
    try:
        fits = fit_scalings([r["kn"] for r in good], [r["h"] for r in good], [r["l2_error"] for r in good])
    except ScalingError as exc:
        fits = {"skipped": str(exc)}
    for p in points:
        kf = fits.get("log_error_vs_inv_kn", {}).get(p.h)
        hf = fits.get("error_vs_h", {}).get(p.kn)
        if kf is not None:
            p.row.update(slope_log_error_vs_inv_kn=kf.slope, r2_log_error_vs_inv_kn=kf.r2)
        if hf is not None:
            p.row.update(slope_error_vs_h=hf.slope, r2_error_vs_h=hf.r2)
    return SweepResult(points, fits, monotonicity_flags(points, grids.spatial), cfg.config_hash(),
                       cfg["error_convention"])


def write_sweep_csv(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])


def read_sweep_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"sweep file not found: {path}")
    with path.open(newline="") as fh:
        return [{"kn": float(r["kn"]), "h": float(r["h"]), "l2_error": float(r["l2_error"]),
                 "status": r["status"]} for r in csv.DictReader(fh)]


def fits_to_dict(fits: dict) -> dict:
    if "skipped" in fits:
        return dict(fits)
    return {axis: [{"key": k, "slope": v.slope, "intercept": v.intercept, "r2": v.r2, "n": v.n}
                   for k, v in sorted(entries.items())]
            for axis, entries in fits.items()}


# ----------------------------------------------------------------------------
# plot data


def write_matrix(path, values: np.ndarray) -> None:
    """One row per x index, one column per y index; ``repr`` floats keep bytes reproducible."""
    with Path(path).open("w", newline="") as fh:
        for row in np.asarray(values, float):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit_plotdata(fields: dict[str, np.ndarray], out, config_hash: str, extra: list | None = None,
                  merge: bool = False) -> Path:
    """Write each field as a matrix CSV plus ``manifest.json`` listing every artifact.

    With ``merge`` the artifacts of an existing manifest carrying the same
    config hash are kept (and re-hashed) when their files still exist.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    entries = set()
    if merge and mpath.exists():
        old = json.loads(mpath.read_text())
        if old.get("config_hash") == config_hash:
            entries = {out / a["file"] for a in old.get("artifacts", []) if (out / a["file"]).exists()}
    for name in sorted(fields):
        p = out / f"{name}.csv"
        write_matrix(p, fields[name])
        entries.add(p)
    entries |= {Path(e) for e in (extra or [])}
    manifest = {"config_hash": config_hash,
                "artifacts": [{"file": p.relative_to(out).as_posix(), "sha256": _sha256(p)}
                              for p in sorted(entries, key=lambda q: q.relative_to(out).as_posix())]}
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def write_sweep(result: SweepResult, out, merge: bool = False) -> Path:
    """Sweep CSV, fit summary, flags and per-point field matrices under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sweep_csv = out / "sweep.csv"
    write_sweep_csv(result.rows, sweep_csv)
    summary = out / "summary.json"
    summary.write_text(json.dumps({"fits": fits_to_dict(result.fits), "flags": result.flags,
                                   "failures": len(result.failures),
                                   "error_convention": result.error_convention},
                                  indent=2, sort_keys=True, default=float) + "\n")
    fields = {}
    for p in result.points:
        for name, arr in p.fields.items():
            fields[f"fields/kn{_fmt(p.kn)}_h{p.h:.6f}_{name}"] = arr
    (out / "fields").mkdir(exist_ok=True)
    return emit_plotdata(fields, out, result.config_hash, extra=[sweep_csv, summary], merge=merge)


# ----------------------------------------------------------------------------
# end-to-end pipeline


@dataclass
class PipelineReport:
    kn: float
    h: float
    mode: str
    sigma_hat: np.ndarray
    mask: np.ndarray
    sup_error_beam_line: float
    l2_error: float
    masked: int
    metadata: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"kn": self.kn, "h": self.h, "mode": self.mode, "sup_error_beam_line": self.sup_error_beam_line,
                "l2_error": self.l2_error, "masked": self.masked, "metadata": self.metadata}


def _stage(name, fn, *a, **k):
    try:
        return fn(*a, **k)
    except (TransportError, ValueError) as exc:
        raise PipelineError(name, exc) from exc


def measure(cfg: ExperimentConfig, kn: float, h: float, grids=None, workers: int | None = None) -> MeasurementSet:
    """Boundary terms on the configured lattice, with optional additive noise."""
    grids = cfg.grids() if grids is None else grids
    m = cfg.media(grids.spatial, kn)
    f, g = cfg.beams(grids.angular, h)
    fin = beam_trace(f, grids.gamma_minus, grids.spatial)
    gout = beam_trace(g, grids.gamma_plus, grids.spatial)
    meas = Measurer(m, grids, fin, gout, cfg["tol"], cfg["max_iter"], cfg["accel"])
    ms = meas.measure_lattice(cfg["fourier_order"], cfg["eps"],
                              workers=cfg["workers"] if workers is None else workers)
    if cfg["bt_noise"] > 0:
        rng = np.random.default_rng(cfg["seed"])
        noise = rng.normal(0.0, cfg["bt_noise"], len(ms.rows))
        ms.rows = [(*r[:4], r[4] + e) for r, e in zip(ms.rows, noise)]
    return ms


def _solve_pair(cfg, m, grids, fin, gout):
    tol, mi, acc = cfg["tol"], cfg["max_iter"], cfg["accel"]
    u, ru = _stage("forward solve", solve, TransportProblem(m, grids, fin), tol, mi, acc)
    v, rv = _stage("adjoint solve", solve, TransportProblem(m, grids, gout, direction_sign="adjoint"), tol, mi, acc)
    for name, r in (("forward solve", ru), ("adjoint solve", rv)):
        if not r.converged:
            raise PipelineError(name, TransportError(f"no convergence, residual {r.final_residual:.3e}"))
    return u, v, ru, rv


def run_pipeline(cfg: ExperimentConfig, kn: float | None = None, h: float | None = None,
                 mode: str | None = None, workers: int | None = None) -> PipelineReport:
    """Solves, internal data (direct or Fourier-recovered), reconstruction and error report."""
    kn = cfg["kn_list"][0] if kn is None else kn
    h = cfg["h_list"][0] if h is None else h
    mode = cfg["mode"] if mode is None else mode
    grids = cfg.grids()
    sp = grids.spatial
    m = _stage("media", cfg.media, sp, kn)
    f, g = _stage("beam", cfg.beams, grids.angular, h)
    fin = beam_trace(f, grids.gamma_minus, sp)
    gout = beam_trace(g, grids.gamma_plus, sp)
    u, v, ru, rv = _solve_pair(cfg, m, grids, fin, gout)
    H_direct = internal_direct(u, v, m)
    meta: dict = {"forward_iterations": ru.iterations, "adjoint_iterations": rv.iterations}
    if mode == "fourier":
        ms = _stage("measure", measure, cfg, kn, h, grids, workers)
        H = _stage("recover", recover_H, ms, sp, cfg["fourier_order"])
        meta.update(recovery=H.metadata, unreliable_bt=ms.unreliable,
                    recovery_vs_direct_l2=float(np.linalg.norm(H.values - H_direct.values)
                                                / np.linalg.norm(H_direct.values)))
    elif mode == "direct":
        H = H_direct
    else:
        raise PipelineError("config", ValueError(f"unknown mode {mode!r}"))
    rec = _stage("reconstruct", reconstruct_sigma, H, f, trace(u, grids.gamma_plus), grids)
    truth = m.sigma / kn
    rel = np.abs(rec.values - truth) / truth
    row = sp.locate((sp.origin[0] + 0.5 * sp.lx, sp.origin[1] + 0.5 * sp.ly))[1]
    xs = sp.xc - sp.origin[0]
    central = (xs >= 0.1 * sp.lx) & (xs <= 0.9 * sp.lx)
    line = rel[central, row]
    sup_line = float(np.nanmax(line)) if np.any(np.isfinite(line)) else math.nan
    l2 = float(np.sqrt(np.nansum(rel ** 2) * sp.cell_area / sp.area))
    meta.update(rec.metadata, beam_row=int(row))
    return PipelineReport(kn, h, mode, rec.values, rec.mask, sup_line, l2, rec.n_masked, meta)


def pipeline_kn_sweep(cfg: ExperimentConfig, h: float | None = None, mode: str | None = None) -> list[PipelineReport]:
    return [run_pipeline(cfg, kn, h, mode) for kn in cfg["kn_list"]]


def twin_media_stability(cfg: ExperimentConfig, h: float | None = None, amplitude: float = 0.05,
                         center=(0.5, 0.5), width: float = 0.1) -> list[dict]:
    """Reconstruct two media differing by a small scattering bump, for every ``Kn``.

    Each record holds ``sup |s1 - s2|`` of the reconstructions (an estimate of
    ``|sigma_1 - sigma_2| / Kn``), ``sup |H1 - H2|``, their ratio and the
    reference growth factor ``exp(d sup(sigma) / Kn)``.  Only cells unmasked
    in both reconstructions and inside the central 80% in x are compared.
    """
    grids = cfg.grids()
    sp = grids.spatial
    h = cfg["h_list"][0] if h is None else h
    f, g = _stage("beam", cfg.beams, grids.angular, h)
    fin = beam_trace(f, grids.gamma_minus, sp)
    gout = beam_trace(g, grids.gamma_plus, sp)
    x0, y0 = sp.origin
    bump = profile("gaussian-bump", sp, base=0.0, amplitude=amplitude,
                   center=(x0 + center[0] * sp.lx, y0 + center[1] * sp.ly), width=width)
    xs = sp.xc - x0
    central = ((xs >= 0.1 * sp.lx) & (xs <= 0.9 * sp.lx))[:, None]
    out = []
    for kn in cfg["kn_list"]:
        base = _stage("media", cfg.media, sp, kn)
        pair = []
        for m in (base, MediaCoefficients(base.sigma_a, base.sigma_s + bump, kn, sp)):
            u, v, _, _ = _solve_pair(cfg, m, grids, fin, gout)
            H = internal_direct(u, v, m)
            rec = _stage("reconstruct", reconstruct_sigma, H, f, trace(u, grids.gamma_plus), grids)
            pair.append((m, H.values, rec))
        (m1, H1, r1), (m2, H2, r2) = pair
        keep = central & ~r1.mask & ~r2.mask
        ds = float(np.max(np.abs(r1.values - r2.values)[keep])) if keep.any() else math.nan
        dh = float(np.max(np.abs(H1 - H2)[keep])) if keep.any() else math.nan
        smax = float(max(m1.sigma.max(), m2.sigma.max()))
        out.append({"kn": kn, "sigma_diff": ds, "true_sigma_diff": float(bump.max()) / kn, "H_diff": dh,
                    "ratio": ds / dh if dh > 0 else math.nan,
                    "log_bound_factor": sp.diameter * smax / kn, "compared_cells": int(keep.sum())})
    return out
