"""Command-line driver.

Exit codes: 0 success, 2 configuration error, 3 runtime or data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import FULL_SCALE_REPETITIONS, ConfigError, ExperimentConfig, load_config
from .harness import run_bandit_experiment, run_channel_experiment
from .signals import SignalError, autocorrelation, open_source, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(x: float) -> str:
    return repr(float(x))


def _load(args, experiment: str | None) -> ExperimentConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"master_seed={args.seed}")
    if getattr(args, "full_scale", False):
        overrides.append(f"repetitions={FULL_SCALE_REPETITIONS}")
    return load_config(args.config, overrides, experiment=experiment)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate_bandit(args) -> int:
    config = _load(args, "bandit")
    result = run_bandit_experiment(config, workers=args.workers)
    out = _out_dir(args)
    _write_csv(out / "csr_curve.csv", ["cycle", "mean_csr"],
               ((t, _fmt(v)) for t, v in enumerate(result.per_cycle_csr)))
    _write_json(out / "summary.json", {"average_csr": result.average_csr, **result.metadata})
    print(f"average_csr={result.average_csr:.6f}")
    return EXIT_OK


def cmd_simulate_channel(args) -> int:
    config = _load(args, "channel")
    result = run_channel_experiment(config, workers=args.workers)
    out = _out_dir(args)
    _write_csv(out / "selection_log.csv", ["cycle", "channel", "throughput_mbps", "reward"],
               ((t, ch, _fmt(mbps), int(rew)) for t, ch, mbps, rew in result.selection_log))
    n_blocks = len(config.best_sequence)
    window = []
    if config.block_length >= 50 and config.cycles >= n_blocks * config.block_length:
        window = result.block_window_stats(config.block_length, n_blocks)
    summary = {
        "best_rate_by_cycle": [float(v) for v in result.best_rate],
        "mean_throughput_by_cycle": [float(v) for v in result.mean_throughput],
        "block_window_25_49": window,
        **result.metadata,
    }
    _write_json(out / "summary.json", summary)
    for row in window:
        print(f"block {row['block']}: best_rate={row['best_rate']:.3f} "
              f"mean_throughput={row['mean_throughput_mbps']:.2f} Mbps")
    return EXIT_OK


def cmd_analyze_signal(args) -> int:
    config = _load(args, None)
    source = open_source(config.source, config.master_seed)
    values = autocorrelation(source, args.n, args.max_lag)
    out = _out_dir(args)
    _write_csv(out / "acf.csv", ["lag", "autocorrelation"],
               ((k, _fmt(v)) for k, v in enumerate(values, start=1)))
    print(f"lag-1 autocorrelation={values[0]:.6f}")
    return EXIT_OK


def cmd_convert_trace(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise SignalError(f"input not found: {src}")
    payload = src.read_bytes()
    if not payload:
        raise SignalError("input is empty")
    output = Path(args.output) if args.output else src.with_suffix(".chaos")
    header = write_trace(output, payload, args.sample_interval_ps, args.length)
    print(f"wrote {output} ({header.length} samples)")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    config = _load(args, None)
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaosbandit",
                                     description="Chaos-driven bandit decision making and channel selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=True):
        p.add_argument("--config", help="YAML experiment configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted path), repeatable")
        p.add_argument("--seed", type=int, help="override master_seed")
        if runs:
            p.add_argument("--out-dir", default=".", help="output directory")

    p = sub.add_parser("simulate-bandit", help="correct-selection-rate study on a switching bandit")
    common(p)
    p.add_argument("--full-scale", action="store_true", help=f"use {FULL_SCALE_REPETITIONS} repetitions")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate_bandit)

    p = sub.add_parser("simulate-channel", help="four-channel dynamic selection simulation")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate_channel)

    p = sub.add_parser("analyze-signal", help="autocorrelation of the configured source")
    common(p)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--max-lag", type=int, default=10)
    p.set_defaults(func=cmd_analyze_signal)

    p = sub.add_parser("convert-trace", help="wrap raw 8-bit samples as a .chaos trace")
    p.add_argument("input")
    p.add_argument("--output", help="destination .chaos path (default: input with .chaos suffix)")
    p.add_argument("--sample-interval-ps", type=int, default=10)
    p.add_argument("--length", type=int, help="declared sample count; must match the payload")
    p.set_defaults(func=cmd_convert_trace)

    p = sub.add_parser("validate-config", help="check a configuration and print it normalized")
    common(p, runs=False)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SignalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
