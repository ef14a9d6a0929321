"""Experiment configuration: defaults, validation, YAML loading and dotted overrides."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .decision import OmegaStrategy
from .signals import SOURCE_KINDS, SourceSpec

FULL_SCALE_REPETITIONS = 12_000
DESK_REPETITIONS = 1_000

# Reward probabilities of the three two-armed test problems.
PROBLEMS = {1: (0.1, 0.9), 2: (0.5, 0.9), 3: (0.1, 0.2)}


class ConfigError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ExperimentConfig:
    experiment: str = "bandit"
    source: SourceSpec = field(default_factory=SourceSpec)
    depth: int | None = None
    alpha: float = 0.9
    omega: OmegaStrategy = field(default_factory=OmegaStrategy)
    beta: float = 0.1
    initial_estimate: float = 0.5
    calibration_samples: int = 10_000
    freeze_thresholds: bool = False
    cycles: int | None = None
    repetitions: int | None = None
    master_seed: int = 0
    # bandit world
    probs: tuple[float, float] = PROBLEMS[1]
    swap_period: int = 2500
    # channel world
    channels: tuple[int, ...] = (36, 40, 44, 48)
    best_sequence: tuple[int, ...] = (48, 44, 40, 36)
    block_length: int = 50
    vacant_mbps: float = 14.0
    congested_mbps: float = 4.0
    noise_std_mbps: float = 1.0
    reward_mode: str = "cumulative"
    reward_window: int | None = None
    arm_to_channel: dict[str, int] | None = None

    def __post_init__(self):
        if self.depth is None:
            self.depth = 1 if self.experiment == "bandit" else 2
        if self.cycles is None:
            self.cycles = 10_000 if self.experiment == "bandit" else 200
        if self.repetitions is None:
            self.repetitions = DESK_REPETITIONS if self.experiment == "bandit" else 100
        self.probs = tuple(self.probs)
        self.channels = tuple(self.channels)
        self.best_sequence = tuple(self.best_sequence)
        if self.arm_to_channel is None and self.experiment == "channel" \
                and len(self.channels) == 1 << self.depth:
            self.arm_to_channel = {format(i, f"0{self.depth}b"): c
                                   for i, c in enumerate(self.channels)}

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in ("bandit", "channel"):
            raise ConfigError("experiment", "must be 'bandit' or 'channel'")
        if self.source.kind not in SOURCE_KINDS:
            raise ConfigError("source.kind", f"must be one of {', '.join(SOURCE_KINDS)}")
        try:
            self.source.validate()
        except Exception as exc:
            raise ConfigError("source", str(exc)) from exc
        if not isinstance(self.depth, int) or self.depth < 1:
            raise ConfigError("depth", "must be an integer >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha", "must lie in (0, 1]")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta", "must lie in (0, 1]")
        if not 0.0 <= self.initial_estimate <= 1.0:
            raise ConfigError("initial_estimate", "must lie in [0, 1]")
        if self.calibration_samples < 1000:
            raise ConfigError("calibration_samples", "must be >= 1000")
        if self.cycles < 1:
            raise ConfigError("cycles", "must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions", "must be >= 1")
        if not 0 <= self.master_seed < 1 << 64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")
        if self.experiment == "bandit":
            if self.depth != 1:
                raise ConfigError("depth", "the two-armed bandit experiment needs depth 1")
            if len(self.probs) != 2 or not all(0.0 <= p <= 1.0 for p in self.probs):
                raise ConfigError("probs", "must be two probabilities in [0, 1]")
            if self.swap_period < 1:
                raise ConfigError("swap_period", "must be >= 1")
        else:
            n_arms = 1 << self.depth
            if len(self.channels) != n_arms:
                raise ConfigError("channels", f"depth {self.depth} needs exactly {n_arms} channels")
            if len(set(self.channels)) != len(self.channels):
                raise ConfigError("channels", "channel identities must be distinct")
            if not self.best_sequence or not set(self.best_sequence) <= set(self.channels):
                raise ConfigError("best_sequence", "must list known channels")
            if self.block_length < 1:
                raise ConfigError("block_length", "must be >= 1")
            if self.vacant_mbps <= 0 or self.congested_mbps <= 0:
                raise ConfigError("vacant_mbps", "mean throughputs must be positive")
            if self.noise_std_mbps < 0:
                raise ConfigError("noise_std_mbps", "must be non-negative")
            if self.reward_mode not in ("cumulative", "windowed"):
                raise ConfigError("reward_mode", "must be 'cumulative' or 'windowed'")
            if self.reward_mode == "windowed" and not (self.reward_window and self.reward_window >= 1):
                raise ConfigError("reward_window", "windowed mode needs a positive window")
            mapping = self.arm_to_channel or {}
            expected = {format(i, f"0{self.depth}b") for i in range(n_arms)}
            if set(mapping) != expected:
                raise ConfigError("arm_to_channel", f"must map every bit string in {sorted(expected)}")
            if sorted(mapping.values()) != sorted(self.channels):
                raise ConfigError("arm_to_channel", "must be a bijection onto channels")
        return self

    def channel_of_arm(self, arm: int) -> int:
        return self.arm_to_channel[format(arm, f"0{self.depth}b")]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, SourceSpec):
                value = value.to_dict()
            elif isinstance(value, OmegaStrategy):
                value = {"mode": value.mode, "fixed_value": value.fixed_value,
                         "omega_max": value.omega_max}
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dict):
                value = dict(sorted(value.items()))
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = copy.deepcopy(dict(data))
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        try:
            if "source" in data:
                src = data["source"] or {}
                extra = set(src) - {"kind", "parameters", "stride", "wrap_policy"}
                if extra:
                    raise ConfigError(f"source.{sorted(extra)[0]}", "unknown configuration key")
                data["source"] = SourceSpec(**src)
            if "omega" in data:
                om = data["omega"] or {}
                extra = set(om) - {"mode", "fixed_value", "omega_max"}
                if extra:
                    raise ConfigError(f"omega.{sorted(extra)[0]}", "unknown configuration key")
                data["omega"] = OmegaStrategy(**om)
            if data.get("arm_to_channel") is not None:
                data["arm_to_channel"] = {str(k): int(v) for k, v in data["arm_to_channel"].items()}
            return cls(**data).validate()
        except ConfigError:
            raise
        except Exception as exc:
            key = "omega" if "omega" in str(exc) else "config"
            raise ConfigError(key, str(exc)) from exc


def set_dotted(data: dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        if node.get(part) is None:
            node[part] = {}
        node = node[part]
        if not isinstance(node, dict):
            raise ConfigError(key, "cannot descend into a scalar value")
    node[parts[-1]] = value


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``key.path=value`` strings; values are parsed as YAML scalars."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        top = key.split(".")[0]
        if top not in {f.name for f in fields(ExperimentConfig)}:
            raise ConfigError(key, "unknown configuration key")
        set_dotted(data, key, yaml.safe_load(raw))
    return data


def load_config(path: str | Path | None, overrides: list[str] | None = None,
                experiment: str | None = None) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be a mapping")
        data = loaded or {}
    if experiment is not None:
        if data.get("experiment", experiment) != experiment:
            raise ConfigError("experiment", f"expected {experiment!r}, got {data['experiment']!r}")
        data["experiment"] = experiment
    data = apply_overrides(data, overrides or [])
    return ExperimentConfig.from_dict(data)
