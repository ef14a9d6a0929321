"""Threshold-cascade decision maker driven by a scalar signal.

A depth-M tree selects one of 2**M arms with M consecutive samples, most
significant bit first.  Nodes are stored heap-style: the root is node 0 and
the children of node ``i`` are ``2*i + 1`` (bit 0) and ``2*i + 2`` (bit 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .signals import CalibrationStats, SignalSample, SignalSource

N_LEVELS = 5
MAX_LEVEL = 2


class DecisionError(Exception):
    pass


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def quantize(value: float) -> int:
    """Map a real threshold to one of the integer levels -2..+2."""
    return max(-MAX_LEVEL, min(MAX_LEVEL, round_half_away(value)))


def quantize_array(values: np.ndarray) -> np.ndarray:
    levels = np.sign(values) * np.floor(np.abs(values) + 0.5)
    return np.clip(levels, -MAX_LEVEL, MAX_LEVEL).astype(np.int64)


def node_index(level: int, prefix: int) -> int:
    """Heap index of the node reached after ``level`` bits equal to ``prefix``."""
    return (1 << level) - 1 + prefix


def subtree_arms(depth: int, node: int) -> tuple[range, range]:
    """Arms below the bit-0 and bit-1 branches of ``node``."""
    level = int(math.floor(math.log2(node + 1)))
    prefix = node - ((1 << level) - 1)
    span = 1 << (depth - level - 1)
    left = prefix * 2 * span
    return range(left, left + span), range(left + span, left + 2 * span)


@dataclass
class ThresholdTree:
    depth: int = 1
    alpha: float = 0.9
    level_scale: CalibrationStats | None = None
    values: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.depth < 1:
            raise DecisionError("depth must be >= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise DecisionError("alpha must lie in (0, 1]")
        n_nodes = (1 << self.depth) - 1
        if self.values is None:
            self.values = np.zeros(n_nodes)
        else:
            self.values = np.array(self.values, dtype=np.float64)
            if self.values.shape != (n_nodes,):
                raise DecisionError(f"depth {self.depth} needs {n_nodes} node values")

    @property
    def n_arms(self) -> int:
        return 1 << self.depth

    @property
    def n_nodes(self) -> int:
        return self.values.size

    def copy(self) -> "ThresholdTree":
        return ThresholdTree(self.depth, self.alpha, self.level_scale, self.values.copy())


@dataclass(frozen=True)
class OmegaStrategy:
    mode: str = "fixed"
    fixed_value: float = 1.0
    omega_max: float = 20.0

    def __post_init__(self):
        if self.mode not in ("fixed", "flexible"):
            raise DecisionError(f"omega mode must be 'fixed' or 'flexible', got {self.mode!r}")
        if not self.fixed_value > 0:
            raise DecisionError("fixed_value must be positive")
        if self.omega_max < self.fixed_value:
            raise DecisionError("omega_max must be >= fixed_value")


@dataclass
class RewardEstimates:
    p_hat: np.ndarray
    beta: float = 0.1

    def __post_init__(self):
        self.p_hat = np.array(self.p_hat, dtype=np.float64)
        if not 0.0 < self.beta <= 1.0:
            raise DecisionError("beta must lie in (0, 1]")
        if np.any((self.p_hat < 0) | (self.p_hat > 1)):
            raise DecisionError("estimates must lie in [0, 1]")

    @classmethod
    def initial(cls, n_arms: int, beta: float = 0.1, p0: float = 0.5) -> "RewardEstimates":
        return cls(np.full(n_arms, p0), beta)

    def copy(self) -> "RewardEstimates":
        return RewardEstimates(self.p_hat.copy(), self.beta)


@dataclass(frozen=True)
class Decision:
    arm: int
    bits: tuple[int, ...]
    samples_used: tuple[SignalSample, ...]

    @property
    def path(self) -> list[int]:
        """Node indices visited, root first."""
        nodes, prefix = [], 0
        for level, bit in enumerate(self.bits):
            nodes.append(node_index(level, prefix))
            prefix = 2 * prefix + bit
        return nodes


def effective_threshold(tree: ThresholdTree, node: int) -> float:
    if tree.level_scale is None:
        raise DecisionError("tree has no calibration; set level_scale first")
    return tree.level_scale.quantiles[quantize(float(tree.values[node])) + MAX_LEVEL]


def decide_from_samples(tree: ThresholdTree, samples) -> Decision:
    """Run the cascade on already-drawn samples (one per level)."""
    samples = tuple(s if isinstance(s, SignalSample) else SignalSample(int(s)) for s in samples)
    if len(samples) != tree.depth:
        raise DecisionError(f"need {tree.depth} samples, got {len(samples)}")
    bits = []
    prefix = 0
    for level, s in enumerate(samples):
        bit = 0 if s.value <= effective_threshold(tree, node_index(level, prefix)) else 1
        bits.append(bit)
        prefix = 2 * prefix + bit
    return Decision(arm=prefix, bits=tuple(bits), samples_used=samples)


def decide(tree: ThresholdTree, source: SignalSource) -> Decision:
    return decide_from_samples(tree, [source.next_sample() for _ in range(tree.depth)])


def omega(strategy: OmegaStrategy, p0_hat: float = 0.5, p1_hat: float = 0.5) -> float:
    if strategy.mode == "fixed":
        return strategy.fixed_value
    if not (0.0 <= p0_hat <= 1.0 and 0.0 <= p1_hat <= 1.0):
        raise DecisionError("estimates must lie in [0, 1]")
    total = p0_hat + p1_hat
    if total >= 2.0:
        raise DecisionError("omega undefined when both estimates equal 1")
    return min(total / (2.0 - total), strategy.omega_max)


def node_omega(tree: ThresholdTree, node: int, strategy: OmegaStrategy,
               estimates: RewardEstimates | None) -> float:
    """Penalty magnitude at ``node``; flexible mode compares the best arm of each branch."""
    if strategy.mode == "fixed":
        return strategy.fixed_value
    if estimates is None:
        raise DecisionError("flexible omega requires reward estimates")
    left, right = subtree_arms(tree.depth, node)
    p0 = float(estimates.p_hat[left.start:left.stop].max())
    p1 = float(estimates.p_hat[right.start:right.stop].max())
    return omega(strategy, p0, p1)


def update(tree: ThresholdTree, decision: Decision, rewarded: bool,
           strategy: OmegaStrategy | None = None,
           estimates: RewardEstimates | None = None) -> ThresholdTree:
    """Apply TH <- alpha*TH + delta along the decision path, in place.

    A reward pushes each visited threshold toward the branch that was taken
    by 1; a miss pushes it away by omega.  Off-path nodes are untouched.
    """
    strategy = strategy or OmegaStrategy()
    if len(decision.bits) != tree.depth:
        raise DecisionError("decision depth does not match tree depth")
    for node, bit in zip(decision.path, decision.bits):
        step = 1.0 if rewarded else -node_omega(tree, node, strategy, estimates)
        delta = step if bit == 0 else -step
        tree.values[node] = tree.alpha * tree.values[node] + delta
    return tree


def update_estimates(estimates: RewardEstimates, arm: int, rewarded: bool) -> RewardEstimates:
    """Exponentially weighted update of the chosen arm's reward estimate, in place."""
    p = float(estimates.p_hat[arm])
    p += estimates.beta * ((1.0 if rewarded else 0.0) - p)
    estimates.p_hat[arm] = min(1.0, max(0.0, p))
    return estimates
