"""Run configuration: defaults, --set overrides and schema validation."""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources

import jsonschema

from .lattice import ModelSpec, SpecError

DEFAULTS = {
    "model": {
        "geometry": {"Lx": 24, "Ly": 24, "bc_x1": "periodic", "bc_x2": "periodic",
                     "origin_offset": None},
        "flux": {"p": 1, "q": 3, "gauge": "landau"},
        "disorder": {"kind": "none", "W": 0.0, "distribution": None,
                     "single_site_support": 0, "seed": 0},
        "wall": None,
        "energy_shift": 0.0,
    },
    "window": None,
    "switches": {
        "g": {"smoothness": "smoothstep5"},
        "lambda1": {"center": 0.0, "half_width": 1.0, "smoothness": "smoothstep5"},
        "lambda2": {"center": 0.0, "half_width": 1.0, "smoothness": "smoothstep5"},
    },
    "trace_window_fraction": 0.25,
    "T_grid": [10.0, 100.0, 1000.0],
    "a_grid": [4.0, 6.0, 8.0],
    "E_grid": None,
    "seeds": [0],
    "localize": {"m": 0.2, "zeta": 1.0, "cell": 1, "bump": None},
    "oracle": {"bz_grid": 24},
    "sweep": {"axes": {}, "probes": ["hall"], "base_seed": 0},
    "format": "json",
    "verbosity": 0,
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` points at the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


def schema_text() -> str:
    return resources.files("bulkedge").joinpath("data/run_config.schema.json").read_text()


def schema():
    return json.loads(schema_text())


def schema_hash() -> str:
    """git blob hash of the shipped schema file."""
    data = schema_text().encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def deep_merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_set(items):
    """['a.b=1', 'c=[1,2]'] -> nested dict; values are JSON when they parse."""
    over = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(item, "--set expects key=value")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(item, "empty key in --set")
        node = over
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "cannot set a field below a scalar")
        node[parts[-1]] = val
    return over


def validate(cfg):
    """Schema check (unknown keys rejected) followed by model construction."""
    v = jsonschema.Draft202012Validator(schema())
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(".".join(str(p) for p in e.absolute_path), e.message)
    try:
        model = ModelSpec.from_dict(cfg["model"])
    except (SpecError, TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None
    w = cfg.get("window")
    if w is not None and not w["E_lo"] < w["E_hi"]:
        raise ConfigError("window", "need E_lo < E_hi")
    return model


def resolve(user_cfg=None, overrides=None):
    """Merge defaults, user file and overrides; validate; return (cfg, model)."""
    cfg = deep_merge(DEFAULTS, user_cfg or {})
    cfg = deep_merge(cfg, overrides or {})
    model = validate(cfg)
    return cfg, model


def config_hash(subcommand, cfg) -> str:
    blob = json.dumps({"subcommand": subcommand, "config": cfg}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
