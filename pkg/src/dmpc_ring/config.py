"""Configuration files, overrides and named experiment manifests.

A configuration is a nested mapping (YAML on disk) merged onto
:data:`DEFAULTS`. Unknown keys are errors, never silently ignored. Dotted
``key=value`` overrides are applied last; values are parsed as YAML scalars.
"""
from __future__ import annotations

import copy
import dataclasses
from pathlib import Path

import yaml

from .coordination import CATALOG, algorithm
from .core import NoiseSpec, RingGeometry, VehicleParams
from .mechanism import SweepSpec, default_v_star_grid
from .simulator import KickSpec, ScenarioConfig
from .utility import UtilityParams


class ConfigError(ValueError):
    pass


def _fields(cls):
    return {f.name: f.default for f in dataclasses.fields(cls)}


DEFAULTS = {
    "seed": 0,
    "ring": {"circumference": 314.0, "vehicles": 38},
    "algorithm": {"name": "AS1D_g", "iterations": None},
    "utility": _fields(UtilityParams),
    "vehicle": _fields(VehicleParams),
    "noise": {"sigma_x": 0.0, "sigma_v": 0.0, "sigma_a": 0.0},
    "run": {"duration": 600.0, "transient_skip": None, "initial": "kicked",
            "initial_speed": None},
    "kick": _fields(KickSpec),
    "sweep": {
        "mode": "benefit",
        "algorithms": ["AS1D_g"],
        "iterations": None,
        "vehicle_counts": [36, 38, 40],
        "v_star_grid": {"lo": 2.0, "hi": 12.0, "step": 0.5},
        "v_star_values": None,
        "amplitude_bound": 0.0,
        "amplitude_tol": 0.1,
        "initials": ["kicked"],
    },
    "stability": {
        "algorithms": ["AS1D_c", "AS2D_c", "IAS1D_c", "IAS2D_c"],
        "margin": 1e-3,
        "rel_step": 1e-4,
        "map_check": False,
    },
    "benchmark": {"vehicles": [1, 30], "algorithms": ["IAS2D_c"], "iterations": [0, 2],
                  "steps": 1000, "warmup": 20, "target_ms": 10.0, "soft_limit_ms": 20.0},
    "trajectory": {"write": True},
}

SWEEP_MODES = ("benefit", "optimize", "scan")


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        default = base[key]
        if isinstance(default, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(default, value, where + ".")
        else:
            out[key] = _coerce(default, value, where)
    return out


def _coerce(default, value, where):
    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where!r} must be true or false")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where!r} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where!r} must be an integer, got {value!r}")
        return value
    if isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{where!r} must be a string, got {value!r}")
    if isinstance(default, list) and not isinstance(value, list):
        return [value]
    return value


def parse_override(text: str) -> dict:
    """``"a.b=1.5"`` -> ``{"a": {"b": 1.5}}``."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty override key in {text!r}")
    tree = value
    for part in reversed(parts):
        tree = {part: tree}
    return tree


def _deep_update(tree: dict, update: dict):
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(tree.get(k), dict):
            _deep_update(tree[k], v)
        else:
            tree[k] = v


def load_file(path) -> dict:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("top level of a config file must be a mapping")
    return data


def resolve(*layers: dict, overrides=(), seed: int | None = None) -> dict:
    """Merge layers onto the defaults, then overrides, then the seed flag."""
    user: dict = {}
    for layer in layers:
        _deep_update(user, copy.deepcopy(layer))
    for text in overrides:
        _deep_update(user, parse_override(text))
    if seed is not None:
        user["seed"] = int(seed)
    cfg = _merge(DEFAULTS, user)
    validate(cfg)
    return cfg


def validate(cfg: dict):
    """Build every object once so errors surface before any run starts."""
    try:
        scenario(cfg)
        sweep_spec(cfg)
        for name in cfg["sweep"]["algorithms"] + cfg["stability"]["algorithms"] + \
                cfg["benchmark"]["algorithms"]:
            algorithm(name)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg["sweep"]["mode"] not in SWEEP_MODES:
        raise ConfigError(f"sweep.mode must be one of {SWEEP_MODES}")


def scenario(cfg: dict, **changes) -> ScenarioConfig:
    ring, run = cfg["ring"], cfg["run"]
    noise = NoiseSpec(seed=int(cfg["seed"]), **cfg["noise"])
    config = ScenarioConfig(
        geometry=RingGeometry(float(ring["circumference"]), int(ring["vehicles"])),
        algorithm=algorithm(cfg["algorithm"]["name"], cfg["algorithm"]["iterations"]),
        utility=UtilityParams(**cfg["utility"]),
        vehicle=VehicleParams(**cfg["vehicle"]),
        noise=noise,
        duration=float(run["duration"]),
        transient_skip=None if run["transient_skip"] is None else float(run["transient_skip"]),
        initial=run["initial"],
        kick=KickSpec(**cfg["kick"]),
        initial_speed=None if run["initial_speed"] is None else float(run["initial_speed"]),
    )
    return dataclasses.replace(config, **changes) if changes else config


def sweep_spec(cfg: dict) -> SweepSpec:
    sw = cfg["sweep"]
    if sw["v_star_values"] is not None:
        grid = tuple(float(v) for v in sw["v_star_values"])
    else:
        g = sw["v_star_grid"]
        grid = default_v_star_grid(g["lo"], g["hi"], g["step"])
    return SweepSpec(vehicle_counts=tuple(sw["vehicle_counts"]), v_star_grid=grid,
                     amplitude_bound=sw["amplitude_bound"], amplitude_tol=sw["amplitude_tol"],
                     circumference=float(cfg["ring"]["circumference"]), template=scenario(cfg))


# ----------------------------------------------------------------------------------------------
# named experiments

EXPERIMENTS = {
    "figure2": {
        "command": "simulate",
        "description": "AS1D_g at v* = 10.49: free flow at N = 24, stop-and-go wave at N = 38",
        "variants": {
            "low-density": {"ring": {"vehicles": 24}},
            "high-density": {"ring": {"vehicles": 38}},
        },
        "config": {"algorithm": {"name": "AS1D_g"}},
    },
    "figure4": {
        "command": "sweep",
        "description": "benefit curve: baseline, VSA, IAS2D_c and CAS2D_c at v*_opt versus density",
        "config": {"sweep": {"mode": "benefit", "vehicle_counts": [30, 32, 34, 36, 38, 40, 42]}},
    },
    "figure5": {
        "command": "sweep",
        "description": "onset of waves with 1D versus 2D grid search, uniform and kicked starts",
        "config": {"sweep": {"mode": "scan", "algorithms": ["AS1D_g", "AS2D_g"],
                             "vehicle_counts": [24, 26, 28, 30, 32, 34, 36, 38, 40, 42],
                             "v_star_values": [10.49], "initials": ["uniform", "kicked"]}},
    },
    "figure6": {
        "command": "simulate",
        "description": "kick response of IAS2D_c with T = 0 and T = 2 at rho = 0.121, v* = 7.5",
        "variants": {"T0": {"algorithm": {"iterations": 0}},
                     "T2": {"algorithm": {"iterations": 2}}},
        "config": {"ring": {"vehicles": 38}, "utility": {"v_star": 7.5},
                   "algorithm": {"name": "IAS2D_c"}, "run": {"duration": 120.0, "transient_skip": 60.0}},
    },
    "figure7": {
        "command": "simulate",
        "description": "kick response of CAS2D_c with T = 0 and T = 2 at rho = 0.121, v* = 7.5",
        "variants": {"T0": {"algorithm": {"iterations": 0}},
                     "T2": {"algorithm": {"iterations": 2}}},
        "config": {"ring": {"vehicles": 38}, "utility": {"v_star": 7.5},
                   "algorithm": {"name": "CAS2D_c"}, "run": {"duration": 120.0, "transient_skip": 60.0}},
    },
    "figure8": {
        "command": "simulate",
        "description": "g-transformed versus cumulative utility with 2D search after a kick",
        "variants": {"g": {"algorithm": {"name": "AS2D_g"}},
                     "c": {"algorithm": {"name": "AS2D_c"}}},
        "config": {"ring": {"vehicles": 38}, "utility": {"v_star": 7.5},
                   "run": {"duration": 120.0, "transient_skip": 60.0}},
    },
    "figure9": {
        "command": "simulate",
        "description": "v*_opt comparison at rho = 0.121: AS1D_g at 3.5 m/s, IAS2D_c at 9.0 m/s",
        "variants": {"AS1D_g": {"algorithm": {"name": "AS1D_g"}, "utility": {"v_star": 3.5}},
                     "IAS2D_c": {"algorithm": {"name": "IAS2D_c"}, "utility": {"v_star": 9.0}}},
        "config": {"ring": {"vehicles": 38}},
    },
    "figure10": {
        "command": "simulate",
        "description": "ego and leader states after a kick: AS2D_c versus IAS2D_c (safety margins)",
        "variants": {"AS2D_c": {"algorithm": {"name": "AS2D_c"}},
                     "IAS2D_c": {"algorithm": {"name": "IAS2D_c"}}},
        "config": {"ring": {"vehicles": 38}, "utility": {"v_star": 7.5},
                   "run": {"duration": 120.0, "transient_skip": 60.0}},
    },
    "zroots": {
        "command": "stability",
        "description": "z-roots of AS1D_c, AS2D_c, IAS1D_c, IAS2D_c at rho = 0.115, v* = 10.49",
        "config": {"ring": {"vehicles": 36}},
    },
    "shallow-waves": {
        "command": "simulate",
        "description": "IAS2D_c at rho = 0.121, v* = 9: zero-noise shallow wave and a noisy run",
        "variants": {"clean": {}, "noisy": {"noise": {"sigma_x": 0.01, "sigma_v": 0.01,
                                                      "sigma_a": 0.01}}},
        "config": {"ring": {"vehicles": 38}, "utility": {"v_star": 9.0},
                   "algorithm": {"name": "IAS2D_c"}},
    },
    "benchmark": {
        "command": "benchmark",
        "description": "per-step wall time of IAS2D_c (T = 0, 2) for N = 1 and N = 30",
        "config": {},
    },
}


def experiment(name: str) -> dict:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown experiment {name!r}; see list-experiments") from None


def algorithms_available():
    return sorted(CATALOG)
