"""Reproducible experiments built from signal, decision and environment parts.

Every repetition owns its source, tree, environment and generators, all
seeded from ``derive_seed(master_seed, repetition)``.  Repetitions are
processed in fixed-size chunks; chunk results are merged by repetition index
and per-cycle tallies are integer counts, so aggregated output does not
depend on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .decision import (MAX_LEVEL, OmegaStrategy, RewardEstimates, ThresholdTree, decide,
                       quantize_array, update, update_estimates)
from .environment import ChannelEnv, RewardRule, SwitchingBernoulliEnv
from .signals import calibrate, open_source

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
CHUNK = 250


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for repetition ``index``.

    Injective in ``index`` for a fixed master seed and in the master seed for
    a fixed index, since both the finalizer and the offset are bijections
    modulo 2**64.
    """
    return _mix64((_mix64(master_seed & MASK64) + (index + 1) * _GAMMA) & MASK64)


def repetition_seeds(master_seed: int, repetition: int) -> tuple[int, int]:
    """(source seed, environment seed) for one repetition."""
    rep = derive_seed(master_seed, repetition)
    return derive_seed(rep, 0), derive_seed(rep, 1)


@dataclass
class RunResult:
    experiment: str
    per_cycle_csr: np.ndarray | None = None
    average_csr: float | None = None
    per_rep_csr: np.ndarray | None = None
    selection_log: list[tuple[int, int, float, bool]] = field(default_factory=list)
    best_rate: np.ndarray | None = None
    mean_throughput: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def block_window_stats(self, block_length: int, n_blocks: int, start: int = 25,
                           stop: int = 50) -> list[dict[str, float]]:
        """Best-channel rate and mean throughput over cycles start..stop-1 of each block."""
        out = []
        for b in range(n_blocks):
            lo, hi = b * block_length + start, b * block_length + stop
            out.append({"block": b,
                        "best_rate": float(np.mean(self.best_rate[lo:hi])),
                        "mean_throughput_mbps": float(np.mean(self.mean_throughput[lo:hi]))})
        return out


def _metadata(config: ExperimentConfig) -> dict[str, Any]:
    return {"config": config.to_dict(), "master_seed": config.master_seed,
            "repetitions": config.repetitions, "build": f"chaosbandit {__version__}"}


def _chunks(n: int) -> list[range]:
    return [range(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def _map_chunks(fn, config: ExperimentConfig, workers: int) -> list:
    if workers < 1:
        raise ValueError("workers must be >= 1")
    chunks = _chunks(config.repetitions)
    if workers == 1 or len(chunks) == 1:
        return [fn(config, c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: fn(config, c), chunks))


# -- bandit ------------------------------------------------------------------


def _bandit_chunk(config: ExperimentConfig, reps: range) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized over repetitions; same arithmetic as :func:`simulate_bandit_repetition`."""
    n, T = len(reps), config.cycles
    samples = np.empty((n, T), dtype=np.float64)
    uniforms = np.empty((n, T), dtype=np.float64)
    levels = np.empty((n, 2 * MAX_LEVEL + 1), dtype=np.float64)
    for i, r in enumerate(reps):
        src_seed, env_seed = repetition_seeds(config.master_seed, r)
        source = open_source(config.source, src_seed)
        levels[i] = calibrate(source, config.calibration_samples).quantiles
        samples[i] = source.read(T)
        uniforms[i] = np.random.default_rng(env_seed).random(T)

    env = SwitchingBernoulliEnv(config.probs, config.swap_period)
    alpha = config.alpha
    flexible = config.omega.mode == "flexible"
    th = np.zeros(n)
    p_hat = np.full((n, 2), config.initial_estimate)
    beta = config.beta
    rows = np.arange(n)
    counts = np.zeros(T, dtype=np.int64)
    per_rep = np.zeros(n, dtype=np.int64)
    for t in range(T):
        probs = env.effective_probs(t)
        bit = samples[:, t] > levels[rows, quantize_array(th) + MAX_LEVEL]
        p_chosen = np.where(bit, probs[1], probs[0])
        p_other = np.where(bit, probs[0], probs[1])
        correct = p_chosen >= p_other
        counts[t] = int(correct.sum())
        per_rep += correct
        rewarded = uniforms[:, t] < p_chosen
        if flexible:
            total = p_hat[:, 0] + p_hat[:, 1]
            if np.any(total >= 2.0):
                raise ConfigError("omega", "omega undefined when both estimates equal 1")
            om = np.minimum(total / (2.0 - total), config.omega.omega_max)
        else:
            om = config.omega.fixed_value
        if not config.freeze_thresholds:
            step = np.where(rewarded, 1.0, -om)
            th = alpha * th + np.where(bit, -step, step)
        if flexible:
            arm = bit.astype(np.int64)
            p = p_hat[rows, arm]
            p = p + beta * (rewarded.astype(np.float64) - p)
            p_hat[rows, arm] = np.clip(p, 0.0, 1.0)
    return counts, per_rep


def simulate_bandit_repetition(config: ExperimentConfig, repetition: int) -> np.ndarray:
    """One repetition through the scalar library API; returns per-cycle correctness."""
    src_seed, env_seed = repetition_seeds(config.master_seed, repetition)
    source = open_source(config.source, src_seed)
    tree = ThresholdTree(depth=1, alpha=config.alpha,
                         level_scale=calibrate(source, config.calibration_samples))
    env = SwitchingBernoulliEnv(config.probs, config.swap_period)
    rng = np.random.default_rng(env_seed)
    estimates = RewardEstimates.initial(2, config.beta, config.initial_estimate)
    out = np.zeros(config.cycles, dtype=bool)
    for t in range(config.cycles):
        probs = env.effective_probs(t)
        d = decide(tree, source)
        out[t] = probs[d.arm] >= probs[1 - d.arm]
        rewarded = env.pull(d.arm, rng)
        if not config.freeze_thresholds:
            update(tree, d, rewarded, config.omega, estimates)
        if config.omega.mode == "flexible":
            update_estimates(estimates, d.arm, rewarded)
    return out


def run_bandit_experiment(config: ExperimentConfig, workers: int = 1) -> RunResult:
    config.validate()
    if config.experiment != "bandit":
        raise ConfigError("experiment", "run_bandit_experiment needs experiment = bandit")
    parts = _map_chunks(_bandit_chunk, config, workers)
    counts = np.zeros(config.cycles, dtype=np.int64)
    for c, _ in parts:
        counts += c
    per_rep_hits = np.concatenate([p for _, p in parts])
    per_cycle = counts / config.repetitions
    return RunResult(
        experiment="bandit",
        per_cycle_csr=per_cycle,
        average_csr=math.fsum(per_cycle) / config.cycles,
        per_rep_csr=per_rep_hits / config.cycles,
        metadata=_metadata(config),
    )


# -- channel -----------------------------------------------------------------


def simulate_channel_repetition(config: ExperimentConfig, repetition: int
                                ) -> list[tuple[int, int, float, bool]]:
    """One run of the channel-selection loop; returns (cycle, channel, mbps, reward) rows."""
    src_seed, env_seed = repetition_seeds(config.master_seed, repetition)
    source = open_source(config.source, src_seed)
    tree = ThresholdTree(depth=config.depth, alpha=config.alpha,
                         level_scale=calibrate(source, config.calibration_samples))
    env = ChannelEnv(config.channels, config.best_sequence, config.block_length,
                     config.vacant_mbps, config.congested_mbps, config.noise_std_mbps)
    rule = RewardRule(config.reward_mode, config.reward_window)
    rng = np.random.default_rng(env_seed)
    estimates = RewardEstimates.initial(tree.n_arms, config.beta, config.initial_estimate)
    log = []
    for t in range(config.cycles):
        d = decide(tree, source)
        channel = config.channel_of_arm(d.arm)
        obs = env.step(channel, rng)
        rewarded = rule.observe(obs.mbps)
        if not config.freeze_thresholds:
            update(tree, d, rewarded, config.omega, estimates)
        if config.omega.mode == "flexible":
            update_estimates(estimates, d.arm, rewarded)
        log.append((t, channel, obs.mbps, rewarded))
    return log


def _channel_chunk(config: ExperimentConfig, reps: range):
    return [simulate_channel_repetition(config, r) for r in reps]


def run_channel_experiment(config: ExperimentConfig, workers: int = 1) -> RunResult:
    """Run ``repetitions`` independent channel-selection runs.

    ``selection_log`` is the log of repetition 0; ``best_rate`` and
    ``mean_throughput`` are per-cycle averages over all repetitions.
    """
    config.validate()
    if config.experiment != "channel":
        raise ConfigError("experiment", "run_channel_experiment needs experiment = channel")
    logs = [log for part in _map_chunks(_channel_chunk, config, workers) for log in part]
    env = ChannelEnv(config.channels, config.best_sequence, config.block_length,
                     config.vacant_mbps, config.congested_mbps, config.noise_std_mbps)
    best = np.array([env.best_channel(t) for t in range(config.cycles)])
    chosen = np.array([[row[1] for row in log] for log in logs])
    mbps = np.array([[row[2] for row in log] for log in logs])
    return RunResult(
        experiment="channel",
        selection_log=logs[0],
        best_rate=(chosen == best).sum(axis=0) / config.repetitions,
        mean_throughput=mbps.sum(axis=0) / config.repetitions,
        metadata=_metadata(config),
    )


# -- strategy comparison -------------------------------------------------------


@dataclass(frozen=True)
class StrategyComparison:
    label_a: str
    csr_a: float
    label_b: str
    csr_b: float
    difference: float
    standard_error: float

    @property
    def z(self) -> float:
        return self.difference / self.standard_error if self.standard_error > 0 else math.inf


def compare_strategies(config_a: ExperimentConfig, config_b: ExperimentConfig,
                       workers: int = 1) -> StrategyComparison:
    """Run two configs differing only in omega mode; paired difference a - b.

    Both runs share the master seed, so repetition r of each sees the same
    signal and reward draws; the standard error is over per-repetition
    differences of average CSR.
    """
    probe = replace(config_b, omega=config_a.omega)
    if probe != config_a or config_a.omega.mode == config_b.omega.mode:
        raise ConfigError("omega", "configs must be identical except for omega mode")
    a = run_bandit_experiment(config_a, workers)
    b = run_bandit_experiment(config_b, workers)
    diff = a.per_rep_csr - b.per_rep_csr
    n = diff.size
    se = float(np.std(diff, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return StrategyComparison(config_a.omega.mode, a.average_csr, config_b.omega.mode,
                              b.average_csr, a.average_csr - b.average_csr, se)


def with_omega(config: ExperimentConfig, mode: str) -> ExperimentConfig:
    return replace(config, omega=OmegaStrategy(mode, config.omega.fixed_value, config.omega.omega_max))
