"""Run configuration: explicit seeds, no ambient entropy.

A run config names every seed and constant feeding the pipeline, so any
output is reproducible from the config alone. The serialized config (and
its hash) travels in a sidecar next to every artifact.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .impedance import DEFAULT_LOAD_OHM
from .mlp import TrainConfig


class ConfigError(ValueError):
    """Missing, unknown, or inconsistent run configuration."""


@dataclass(frozen=True)
class Seeds:
    demand: int
    phase: int
    placement: int
    model: int


@dataclass(frozen=True)
class RunConfig:
    circuit: str
    seeds: Seeds
    days: int = 28
    source_pu: float = 1.0
    power_factor: float = 1.0
    load_ohm: float = DEFAULT_LOAD_OHM
    meter_counts: tuple[int, ...] = (10,)
    strategy: str = "key_locations"
    power_modes: tuple[bool, ...] = (True, False)
    placement_seeds: tuple[int, ...] = ()  # extra seeds for placement sweeps
    hyper: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str | None = None


_TOP_KEYS = {
    "circuit": True,
    "seeds": True,
    "days": False,
    "source_pu": False,
    "power_factor": False,
    "load_ohm": False,
    "meter_counts": False,
    "strategy": False,
    "power_modes": False,
    "placement_seeds": False,
    "hyper": False,
    "out_dir": False,
}

_HYPER_KEYS = (
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "batch_size",
    "max_epochs",
    "patience",
    "seed",
)


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("run config must be a JSON object")
    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    for key, required in _TOP_KEYS.items():
        if required and key not in data:
            raise ConfigError(f"missing config key {key!r}")

    seeds_raw = data["seeds"]
    if not isinstance(seeds_raw, dict):
        raise ConfigError("seeds must be an object with demand/phase/placement/model")
    for name in ("demand", "phase", "placement", "model"):
        if name not in seeds_raw:
            raise ConfigError(f"missing seed {name!r}; all seeds must be explicit")
        if not isinstance(seeds_raw[name], int):
            raise ConfigError(f"seed {name!r} must be an integer")
    extra = set(seeds_raw) - {"demand", "phase", "placement", "model"}
    if extra:
        raise ConfigError(f"unknown seeds: {sorted(extra)}")
    seeds = Seeds(**seeds_raw)

    hyper_raw = data.get("hyper", {})
    for key in hyper_raw:
        if key not in _HYPER_KEYS:
            raise ConfigError(f"unknown hyper key {key!r}")
    hyper = TrainConfig(**hyper_raw)

    try:
        return RunConfig(
            circuit=str(data["circuit"]),
            seeds=seeds,
            days=int(data.get("days", 28)),
            source_pu=float(data.get("source_pu", 1.0)),
            power_factor=float(data.get("power_factor", 1.0)),
            load_ohm=float(data.get("load_ohm", DEFAULT_LOAD_OHM)),
            meter_counts=tuple(int(c) for c in data.get("meter_counts", [10])),
            strategy=str(data.get("strategy", "key_locations")),
            power_modes=tuple(bool(m) for m in data.get("power_modes", [True, False])),
            placement_seeds=tuple(int(s) for s in data.get("placement_seeds", [])),
            hyper=hyper,
            out_dir=data.get("out_dir"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(config: RunConfig) -> dict:
    data = asdict(config)
    data["meter_counts"] = list(config.meter_counts)
    data["power_modes"] = list(config.power_modes)
    data["placement_seeds"] = list(config.placement_seeds)
    return data


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
