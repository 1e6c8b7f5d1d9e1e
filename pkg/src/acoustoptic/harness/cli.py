"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..acousto import MeasurementSet, internal_direct, recover_H
from ..decomposition import decompose
from ..media import beam_trace
from ..reconstruct import ScalingError, fit_scalings
from ..transport import TransportError, TransportProblem, solve, write_field_csv
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .sweep import (PipelineError, emit_plotdata, fits_to_dict, measure, read_sweep_csv, run_figure_sweep,
                    run_pipeline, write_sweep)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_MASKED = 0, 2, 3, 4

log = logging.getLogger("acoustoptic")


class NonConvergence(RuntimeError):
    pass


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    changes = {}
    if args.no_accel:
        changes["accel"] = False
    if args.mode:
        changes["mode"] = args.mode
    if args.workers:
        changes["workers"] = args.workers
    if args.out:
        changes["out"] = args.out
    if args.kn is not None:
        changes["kn_list"] = [args.kn]
    if args.h is not None:
        changes["h_list"] = [args.h]
    return cfg.replace(**changes) if changes else cfg


def _point(cfg, args):
    return cfg["kn_list"][0], cfg["h_list"][0]


def _out(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


def _publish(cfg, out: Path, fields=None, files=()) -> None:
    emit_plotdata(fields or {}, out, cfg.config_hash(), extra=[out / f for f in files], merge=True)


def _report(rep) -> dict:
    return {"iterations": rep.iterations, "final_residual": rep.final_residual, "converged": rep.converged,
            "acceleration": rep.acceleration_used, "tolerance": rep.tolerance}


def _checked(*reports):
    for r in reports:
        if not r.converged:
            raise NonConvergence(f"solver stopped at residual {r.final_residual:.3e} after {r.iterations} sweeps")


def _setup(cfg, args):
    kn, h = _point(cfg, args)
    grids = cfg.grids()
    m = cfg.media(grids.spatial, kn)
    f, g = cfg.beams(grids.angular, h)
    return kn, h, grids, m, f, g


def cmd_solve(cfg, args) -> int:
    kn, h, grids, m, f, _ = _setup(cfg, args)
    u, rep = solve(TransportProblem(m, grids, beam_trace(f, grids.gamma_minus, grids.spatial)),
                   cfg["tol"], cfg["max_iter"], cfg["accel"])
    out = _out(cfg)
    write_field_csv(out / "u.csv", u)
    _write_json(out / "solve.json", {"kn": kn, "h": h, "report": _report(rep)})
    _publish(cfg, out, files=["u.csv", "solve.json"])
    _checked(rep)
    return EXIT_OK


def cmd_decompose(cfg, args) -> int:
    kn, h, grids, m, f, g = _setup(cfg, args)
    parts, prods, reps = decompose(f, g, m, grids, cfg["tol"], cfg["max_iter"], cfg["accel"], cfg["ballistic"])
    fields = {f"{k}_avg": p.average() for k, p in parts.items()}
    fields.update({k.replace(".", "_x_"): v for k, v in prods.items()})
    _publish(cfg, _out(cfg), fields)
    _checked(*reps.values())
    return EXIT_OK


def cmd_internal(cfg, args) -> int:
    kn, h, grids, m, f, g = _setup(cfg, args)
    if cfg["mode"] == "fourier":
        H = recover_H(measure(cfg, kn, h, grids), grids.spatial, cfg["fourier_order"])
    else:
        sp = grids.spatial
        tol, mi, acc = cfg["tol"], cfg["max_iter"], cfg["accel"]
        u, ru = solve(TransportProblem(m, grids, beam_trace(f, grids.gamma_minus, sp)), tol, mi, acc)
        v, rv = solve(TransportProblem(m, grids, beam_trace(g, grids.gamma_plus, sp), direction_sign="adjoint"),
                      tol, mi, acc)
        _checked(ru, rv)
        H = internal_direct(u, v, m)
    out = _out(cfg)
    _write_json(out / "internal.json", {"kn": kn, "h": h, "provenance": H.provenance, "metadata": H.metadata})
    _publish(cfg, out, {"H": H.values}, ["internal.json"])
    return EXIT_OK


def cmd_measure(cfg, args) -> int:
    kn, h = _point(cfg, args)
    ms = measure(cfg, kn, h)
    out = _out(cfg)
    ms.to_csv(out / "measurements.csv")
    _write_json(out / "measure.json", {"kn": kn, "h": h, "eps": ms.eps, "n": len(ms.rows),
                                       "unreliable": ms.unreliable, "max_iterations": ms.max_iterations,
                                       "sin_phase_extension": True})
    _publish(cfg, out, files=["measurements.csv", "measure.json"])
    return EXIT_OK


def cmd_recover(cfg, args) -> int:
    out = _out(cfg)
    src = Path(args.measurements) if args.measurements else out / "measurements.csv"
    sp = cfg.grids().spatial
    ms = MeasurementSet.from_csv(src, sp.lx, sp.ly)
    H = recover_H(ms, sp, args.order)
    _write_json(out / "recover.json", H.metadata)
    _publish(cfg, out, {"H_fourier": H.values}, ["recover.json"])
    return EXIT_OK


def cmd_reconstruct(cfg, args) -> int:
    kn, h = _point(cfg, args)
    rep = run_pipeline(cfg, kn, h)
    out = _out(cfg)
    _write_json(out / "reconstruct.json", rep.as_dict())
    _publish(cfg, out, {"sigma_hat": np.nan_to_num(rep.sigma_hat, nan=0.0), "mask": rep.mask.astype(float)},
             ["reconstruct.json"])
    if rep.masked > cfg["masked_cell_threshold"]:
        log.warning("%d masked cells exceed the threshold %d", rep.masked, cfg["masked_cell_threshold"])
        return EXIT_MASKED
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    res = run_figure_sweep(cfg)
    write_sweep(res, _out(cfg), merge=True)
    for r in res.failures:
        log.error("sweep point kn=%g h=%g failed: %s", r["kn"], r["h"], r["status"])
    return EXIT_NONCONVERGED if res.failures else EXIT_OK


def cmd_fit(cfg, args) -> int:
    out = _out(cfg)
    rows = [r for r in read_sweep_csv(Path(args.sweep) if args.sweep else out / "sweep.csv") if r["status"] == "ok"]
    try:
        fits = fit_scalings([r["kn"] for r in rows], [r["h"] for r in rows], [r["l2_error"] for r in rows])
    except ScalingError as exc:
        raise ConfigError(str(exc)) from None
    d = fits_to_dict(fits)
    _write_json(out / "fits.json", d)
    _publish(cfg, out, files=["fits.json"])
    for axis, entries in d.items():
        for e in entries:
            print(f"{axis} key={e['key']:.6g} slope={e['slope']:.6g} r2={e['r2']:.4f} n={e['n']}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "decompose": cmd_decompose, "internal": cmd_internal, "measure": cmd_measure,
            "recover": cmd_recover, "reconstruct": cmd_reconstruct, "sweep": cmd_sweep, "fit": cmd_fit}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--workers", type=int, help="worker threads")
    common.add_argument("--no-accel", action="store_true", help="plain source iteration")
    common.add_argument("--mode", choices=["direct", "fourier"], help="internal data from solves or from BT")
    common.add_argument("--kn", type=float, help="restrict to one Knudsen number")
    common.add_argument("--h", type=float, help="restrict to one beam half-width")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="acoustoptic", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "recover":
            sp.add_argument("--measurements", help="MeasurementSet CSV (default: <out>/measurements.csv)")
            sp.add_argument("--order", type=int, help="Fourier truncation order")
        if name == "fit":
            sp.add_argument("--sweep", help="sweep CSV (default: <out>/sweep.csv)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except (NonConvergence, TransportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except PipelineError as exc:
        print(f"error in {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED if isinstance(exc.cause, TransportError) else EXIT_CONFIG
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
