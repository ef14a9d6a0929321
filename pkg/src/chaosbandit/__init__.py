"""Chaos-signal-driven multi-armed bandit decision making and channel-selection simulation."""

__version__ = "0.1.0"
