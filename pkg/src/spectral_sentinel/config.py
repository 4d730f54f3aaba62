"""Versioned JSON run configuration for the command-line pipeline."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .detector import METHODS, DetectionConfig, WindowSpec
from .dynsim import (
    DEFAULT_POWER_INITIAL_STATE,
    LorenzParams,
    ParameterSchedule,
    Power3BusParams,
    SimConfig,
    ThreeBusNetwork,
    simulate_lorenz,
    simulate_power3bus,
)
from .errors import ConfigurationError
from .series import TimeSeries
from .testfunctions import TestFunction, parse_phi

__all__ = ["SCHEMA_VERSION", "RUN_CONFIG_SCHEMA", "RunConfig", "load_run_config", "parse_run_config", "resolve_seed"]

SCHEMA_VERSION = 1
SEED_ENV = "SPECTRAL_SENTINEL_SEED"
SYSTEM_CHANNELS = {"lorenz": 3, "power3bus": 6}

_number = {"type": "number"}
RUN_CONFIG_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["schema_version", "system", "sim"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "system": {"enum": sorted(SYSTEM_CHANNELS)},
        "params": {"type": "object", "additionalProperties": _number},
        "schedule": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [_number, {"type": "string"}, _number],
                "minItems": 3,
                "maxItems": 3,
            },
        },
        "sim": {
            "type": "object",
            "required": ["sample_rate", "duration"],
            "additionalProperties": False,
            "properties": {
                "sample_rate": _number,
                "duration": _number,
                "dt": {"type": ["number", "null"]},
                "burn_in": _number,
                "initial_state": {"type": "array", "items": _number},
                "divergence_bound": _number,
            },
        },
        "noise_snr_db": {"type": ["number", "null"]},
        "window": {
            "type": "object",
            "required": ["length", "stride"],
            "additionalProperties": False,
            "properties": {"length": {"type": "integer"}, "stride": {"type": "integer"}},
        },
        "phi": {"type": "string"},
        "standardize": {"type": "boolean"},
        "subset": {"type": ["array", "null"], "items": {"type": "integer"}},
        "detection": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": list(METHODS)},
                "threshold": _number,
                "reference": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "min_gap": {"type": "integer"},
                "reanchor": {"type": "boolean"},
                "kappa4": {"type": ["number", "null"]},
                "real_bias": {"type": "boolean"},
            },
        },
        "seed": {"type": "integer"},
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "string"} for k in ("series", "les", "events")},
        },
    },
}


@dataclass(frozen=True)
class RunConfig:
    system: str
    params: LorenzParams | Power3BusParams
    schedule: ParameterSchedule
    sim: SimConfig
    window: WindowSpec | None = None
    phi: TestFunction = field(default_factory=lambda: TestFunction.power(2))
    standardize: bool = True
    subset: tuple[int, ...] | None = None
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    seed: int | None = None
    noise_snr_db: float | None = None
    outputs: dict[str, str] = field(default_factory=dict)

    @property
    def n_channels(self) -> int:
        return len(self.subset) if self.subset else SYSTEM_CHANNELS[self.system]

    def simulate(self) -> TimeSeries:
        if self.system == "lorenz":
            series = simulate_lorenz(self.params, self.schedule, self.sim)
        else:
            series = simulate_power3bus(self.params, ThreeBusNetwork(), self.schedule, self.sim)
        if self.noise_snr_db is not None:
            from .dynsim import add_noise

            series = add_noise(series, self.noise_snr_db, self.sim.seed)
        return series


def _field_error(err: jsonschema.ValidationError) -> ConfigurationError:
    path = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return ConfigurationError(f"config field {path}: {err.message}")


def _build(doc: dict[str, Any], seed: int | None) -> RunConfig:
    system = doc["system"]
    raw_params = doc.get("params", {})
    try:
        if system == "lorenz":
            params = LorenzParams(**raw_params)
        else:
            params = Power3BusParams(**raw_params)
    except TypeError as exc:
        raise ConfigurationError(f"config field params: {exc}") from None

    schedule = ParameterSchedule(tuple((float(t), str(n), float(v)) for t, n, v in doc.get("schedule", [])))
    sim = dict(doc["sim"])
    default_ic = (1.0, 1.0, 1.0) if system == "lorenz" else DEFAULT_POWER_INITIAL_STATE
    sim_cfg = SimConfig(
        sample_rate=float(sim["sample_rate"]),
        duration=float(sim["duration"]),
        initial_state=tuple(sim.get("initial_state", default_ic)),
        dt=sim.get("dt"),
        seed=seed if seed is not None else int(doc.get("seed", 0)),
        burn_in=float(sim.get("burn_in", 0.0)),
        divergence_bound=float(sim.get("divergence_bound", 1e6)),
    )
    if len(sim_cfg.initial_state) != SYSTEM_CHANNELS[system]:
        raise ConfigurationError(
            f"config field sim/initial_state: {system} needs {SYSTEM_CHANNELS[system]} values"
        )
    names = [f.name for f in params.__dataclass_fields__.values()]
    schedule.validate(names, sim_cfg.duration)

    window = WindowSpec(**doc["window"]) if "window" in doc else None
    det = doc.get("detection", {})
    if "reference" in det:
        det = det | {"reference": tuple(det["reference"])}
    cfg = RunConfig(
        system=system,
        params=params,
        schedule=schedule,
        sim=sim_cfg,
        window=window,
        phi=parse_phi(doc.get("phi", "lambda^2")),
        standardize=bool(doc.get("standardize", True)),
        subset=tuple(doc["subset"]) if doc.get("subset") else None,
        detection=DetectionConfig(**det),
        seed=sim_cfg.seed,
        noise_snr_db=doc.get("noise_snr_db"),
        outputs=dict(doc.get("outputs", {})),
    )
    if cfg.subset:
        unknown = sorted(set(cfg.subset) - set(range(1, SYSTEM_CHANNELS[system] + 1)))
        if unknown:
            raise ConfigurationError(f"config field subset: unknown channel ids {unknown}")
    if window is not None:
        window.check_channels(cfg.n_channels)
    for key, out in cfg.outputs.items():
        parent = Path(out).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise ConfigurationError(f"config field outputs/{key}: directory {parent} is not writable")
    return cfg


def parse_run_config(text: str, seed: int | None = None) -> RunConfig:
    """Validate and build a :class:`RunConfig` from JSON text.

    ``seed`` overrides the document's seed. Errors carry the JSON line or the
    offending field path.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise _field_error(errors[0])
    return _build(doc, seed)


def load_run_config(path: str | os.PathLike, seed: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_run_config(text, seed)


def resolve_seed(cli_seed: int | None) -> int | None:
    """Seed from the command line, else from the environment, else ``None``."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
