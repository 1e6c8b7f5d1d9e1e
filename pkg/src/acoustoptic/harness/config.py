"""Versioned JSON experiment configuration."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema

from ..geometry import GeometryError, build_grids
from ..media import BeamError, MediaCoefficients, Patch, load_field_csv, make_beam, profile

SCHEMA_VERSION = 1
KN_MIN = 2.0 ** -8

# keys that only steer execution; excluded from the config hash
_RUNTIME_KEYS = ("out", "workers")


class ConfigError(ValueError):
    pass


_coef = {
    "oneOf": [
        {"type": "number"},
        {"type": "object", "additionalProperties": False, "required": ["profile"],
         "properties": {"profile": {"enum": ["constant", "gaussian-bump", "two-inclusions"]},
                        "params": {"type": "object"}}},
        {"type": "object", "additionalProperties": False, "required": ["file"],
         "properties": {"file": {"type": "string"}}},
    ]
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "nx": {"type": "integer", "minimum": 2},
                "ny": {"type": "integer", "minimum": 2},
                "n_dirs": {"type": "integer", "minimum": 8},
                "lx": {"type": "number", "exclusiveMinimum": 0},
                "ly": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "media": {
            "type": "object", "additionalProperties": False,
            "properties": {"sigma_s": _coef, "sigma_a": _coef},
        },
        "kn_list": {"type": "array", "items": {"type": "number"}},
        "h_list": {"type": "array", "items": {"type": "number"}},
        "theta0": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "entry": {
            "oneOf": [
                {"const": "all"},
                {"type": "object", "additionalProperties": False, "required": ["face", "center"],
                 "properties": {"face": {"enum": ["left", "right", "bottom", "top"]},
                                "center": {"type": "number"},
                                "halfwidth": {"type": "number", "minimum": 0}}},
            ]
        },
        "eps": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "fourier_order": {"type": "integer", "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
        "mode": {"enum": ["direct", "fourier"]},
        "accel": {"type": "boolean"},
        "ballistic": {"enum": ["exact", "discrete"]},
        "error_convention": {"enum": ["matched", "literal"]},
        "bt_noise": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "masked_cell_threshold": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
    },
}

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "grid": {"nx": 64, "ny": 64, "n_dirs": 50, "lx": 1.0, "ly": 1.0},
    "media": {"sigma_s": 1.0, "sigma_a": 0.0},
    "kn_list": [1.0, 0.5, 0.25, 0.125, 0.0625],
    "h_list": [2 * math.pi / 25, 14 * math.pi / 25],
    "theta0": [1.0, 0.0],
    "entry": "all",
    "eps": 1e-2,
    "fourier_order": 8,
    "tol": 1e-10,
    "max_iter": 2000,
    "mode": "direct",
    "accel": True,
    "ballistic": "exact",
    "error_convention": "matched",
    "bt_noise": 0.0,
    "seed": 0,
    "masked_cell_threshold": 0,
    "out": "out",
    "workers": 1,
}


def _merge(base: dict, over: dict) -> dict:
    # one level deep: a coefficient object replaces the default as a whole
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **copy.deepcopy(v)}
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration; ``data`` holds the full document with defaults filled in."""

    data: dict
    base_dir: Path = Path(".")

    def __getitem__(self, key):
        return self.data[key]

    @property
    def grid(self) -> dict:
        return self.data["grid"]

    def grids(self):
        g = self.grid
        return build_grids(g["nx"], g["ny"], g["n_dirs"], g["lx"], g["ly"])

    def canonical(self) -> str:
        body = {k: v for k, v in self.data.items() if k not in _RUNTIME_KEYS}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return validate({**self.data, **changes}, self.base_dir)

    def _coefficient(self, spec, spatial):
        if isinstance(spec, (int, float)):
            return profile("constant", spatial, value=float(spec))
        if "file" in spec:
            path = Path(spec["file"])
            if not path.is_absolute():
                path = self.base_dir / path
            values, fgrid = load_field_csv(path)
            if not fgrid.same_as(spatial):
                raise ConfigError(f"media file {path} has grid {fgrid.shape} x ({fgrid.lx}, {fgrid.ly}), "
                                  f"config grid is {spatial.shape} x ({spatial.lx}, {spatial.ly})")
            return values
        return profile(spec["profile"], spatial, **spec.get("params", {}))

    def media(self, spatial, kn: float) -> MediaCoefficients:
        m = self.data["media"]
        return MediaCoefficients(self._coefficient(m["sigma_a"], spatial),
                                 self._coefficient(m["sigma_s"], spatial), kn, spatial)

    def entry_region(self):
        e = self.data["entry"]
        if e == "all":
            return "all", "all"
        p = Patch(e["face"], float(e["center"]), float(e.get("halfwidth", 0.0)))
        return p, p.mirrored()

    def beams(self, angular, h: float):
        """Beam ``f`` on Gamma_- and matching detector ``g`` on Gamma_+."""
        rf, rg = self.entry_region()
        b = make_beam(self.data["theta0"], h, angular)
        return b.with_region(rf), b.with_region(rg)


def validate(doc: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Schema and semantic validation; raises :class:`ConfigError` with the offending key."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    data = _merge(DEFAULTS, doc)
    kn, hs = data["kn_list"], data["h_list"]
    if not kn:
        raise ConfigError("kn_list is empty")
    if not hs:
        raise ConfigError("h_list is empty")
    bad = [k for k in kn if not (KN_MIN <= k <= 1.0)]
    if bad:
        raise ConfigError(f"kn_list values {bad} outside [2^-8, 1]")
    if len(set(kn)) != len(kn) or len(set(hs)) != len(hs):
        raise ConfigError("kn_list and h_list must not contain duplicates")
    if math.hypot(*data["theta0"]) == 0:
        raise ConfigError("theta0 must be nonzero")
    cfg = ExperimentConfig(data, Path(base_dir))
    try:
        grids = cfg.grids()
        for h in hs:
            make_beam(data["theta0"], h, grids.angular)
        cfg.entry_region()
    except (GeometryError, BeamError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate(doc, path.parent)


def default_config(**overrides) -> ExperimentConfig:
    return validate({"schema_version": SCHEMA_VERSION, **overrides})
