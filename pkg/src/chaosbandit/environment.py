"""Reward environments: a switching two-armed Bernoulli bandit and a
four-channel throughput model with a rotating vacant channel."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class EnvError(Exception):
    pass


@dataclass
class SwitchingBernoulliEnv:
    probs: tuple[float, float] = (0.1, 0.9)
    swap_period: int = 2500
    cycle: int = 0

    def __post_init__(self):
        self.probs = (float(self.probs[0]), float(self.probs[1]))
        if not all(0.0 <= p <= 1.0 for p in self.probs):
            raise EnvError("reward probabilities must lie in [0, 1]")
        if self.swap_period < 1:
            raise EnvError("swap_period must be >= 1")

    def effective_probs(self, t: int) -> tuple[float, float]:
        if t < 0:
            raise EnvError("cycle index must be non-negative")
        p0, p1 = self.probs
        return (p0, p1) if (t // self.swap_period) % 2 == 0 else (p1, p0)

    def pull(self, arm: int, rng: np.random.Generator) -> bool:
        if arm not in (0, 1):
            raise EnvError(f"arm must be 0 or 1, got {arm}")
        p = self.effective_probs(self.cycle)[arm]
        self.cycle += 1
        return bool(rng.random() < p)


def effective_probs(env: SwitchingBernoulliEnv, t: int) -> tuple[float, float]:
    return env.effective_probs(t)


def pull(env: SwitchingBernoulliEnv, arm: int, rng: np.random.Generator) -> bool:
    return env.pull(arm, rng)


@dataclass(frozen=True)
class ThroughputSample:
    channel: int
    mbps: float
    cycle: int


@dataclass
class ChannelEnv:
    channels: tuple[int, ...] = (36, 40, 44, 48)
    best_sequence: tuple[int, ...] = (48, 44, 40, 36)
    block_length: int = 50
    vacant_mbps: float = 14.0
    congested_mbps: float = 4.0
    noise_std_mbps: float = 1.0
    cycle: int = 0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.best_sequence = tuple(int(c) for c in self.best_sequence)
        if not self.channels or len(set(self.channels)) != len(self.channels):
            raise EnvError("channels must be a non-empty list of distinct identities")
        if not self.best_sequence:
            raise EnvError("best_sequence must not be empty")
        unknown = set(self.best_sequence) - set(self.channels)
        if unknown:
            raise EnvError(f"best_sequence names unknown channels {sorted(unknown)}")
        if self.block_length < 1:
            raise EnvError("block_length must be >= 1")
        if self.vacant_mbps <= 0 or self.congested_mbps <= 0:
            raise EnvError("mean throughputs must be positive")
        if self.noise_std_mbps < 0:
            raise EnvError("noise_std_mbps must be non-negative")

    def best_channel(self, t: int) -> int:
        block = min(t // self.block_length, len(self.best_sequence) - 1)
        return self.best_sequence[block]

    def mean_mbps(self, channel: int, t: int) -> float:
        return self.vacant_mbps if channel == self.best_channel(t) else self.congested_mbps

    def step(self, channel: int, rng: np.random.Generator) -> ThroughputSample:
        if channel not in self.channels:
            raise EnvError(f"unknown channel {channel}")
        t = self.cycle
        mean = self.mean_mbps(channel, t)
        mbps = mean if self.noise_std_mbps == 0 else float(rng.normal(mean, self.noise_std_mbps))
        self.cycle += 1
        return ThroughputSample(channel=channel, mbps=max(0.0, mbps), cycle=t)


def step_channel(env: ChannelEnv, channel: int, rng: np.random.Generator) -> ThroughputSample:
    return env.step(channel, rng)


@dataclass
class RewardRule:
    """Binary reward: throughput strictly above the mean of earlier observations.

    The history sum is kept as an exact rational so the comparison and the
    reported mean carry no accumulated rounding error.
    """

    mode: str = "cumulative"
    window: int | None = None
    count: int = 0
    _sum: Fraction = field(default=Fraction(0), repr=False)
    _recent: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.mode not in ("cumulative", "windowed"):
            raise EnvError(f"unknown reward mode {self.mode!r}")
        if self.mode == "windowed" and (self.window is None or self.window < 1):
            raise EnvError("windowed mode needs a positive window")

    @property
    def history_mean(self) -> float | None:
        if self.count == 0:
            return None
        return float(self._sum / self.count)

    def observe(self, mbps: float) -> bool:
        if mbps < 0:
            raise EnvError("throughput must be non-negative")
        x = Fraction(mbps)
        rewarded = self.count == 0 or x * self.count > self._sum
        self._sum += x
        self.count += 1
        if self.mode == "windowed":
            self._recent.append(x)
            if len(self._recent) > self.window:
                self._sum -= self._recent.popleft()
                self.count -= 1
        return rewarded


def reward_from_throughput(rule: RewardRule, obs: ThroughputSample) -> bool:
    return rule.observe(obs.mbps)
