"""Decision-driving signal sources.

A source emits 8-bit amplitude codes, either replayed from a recorded
``.chaos`` trace or produced by a seeded synthetic generator (logistic map,
tent map, AR(1), i.i.d. uniform).  Synthetic sources are generated in fixed
blocks so the emitted sequence does not depend on how it is consumed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.signal import lfilter

CODE_MIN = 0
CODE_MAX = 255
_BLOCK = 4096

SOURCE_KINDS = ("trace", "logistic", "tent", "ar1", "uniform")

DEFAULT_PARAMETERS: dict[str, dict[str, Any]] = {
    "trace": {},
    "logistic": {"r": 4.0},
    "tent": {"slope": 1.9999},
    "ar1": {"phi": -0.6, "noise_std": 1.0},
    "uniform": {},
}

# Cumulative probabilities of the five threshold levels.  The outer two are
# saturating: level -2 sits below every code and level +2 at the top code.
LEVEL_PROBABILITIES = (0.0, 0.25, 0.5, 0.75, 1.0)


class SignalError(Exception):
    """Raised for invalid source parameters, corrupt traces or degenerate data."""


class TraceExhausted(SignalError):
    pass


@dataclass(frozen=True)
class SignalSample:
    raw: int

    def __post_init__(self):
        if not CODE_MIN <= self.raw <= CODE_MAX:
            raise SignalError(f"sample code {self.raw} outside [0, 255]")

    @property
    def value(self) -> float:
        return float(self.raw)


@dataclass(frozen=True)
class TraceHeader:
    sample_interval_ps: int
    resolution_bits: int
    length: int

    def validate(self) -> None:
        if self.resolution_bits != 8:
            raise SignalError(f"resolution_bits must be 8, got {self.resolution_bits}")
        if self.sample_interval_ps <= 0:
            raise SignalError("sample_interval_ps must be positive")
        if self.length <= 0:
            raise SignalError("trace length must be positive")


@dataclass
class SourceSpec:
    kind: str = "logistic"
    parameters: dict[str, Any] = field(default_factory=dict)
    stride: int = 1
    wrap_policy: str = "wrap"

    def param(self, name: str) -> Any:
        if name in self.parameters:
            return self.parameters[name]
        return DEFAULT_PARAMETERS[self.kind][name]

    def validate(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise SignalError(f"unknown source kind {self.kind!r}")
        if not isinstance(self.stride, int) or self.stride < 1:
            raise SignalError("stride must be an integer >= 1")
        if self.wrap_policy not in ("wrap", "error"):
            raise SignalError(f"wrap_policy must be 'wrap' or 'error', got {self.wrap_policy!r}")
        if self.kind == "trace" and "path" not in self.parameters:
            raise SignalError("trace source requires a 'path' parameter")
        if self.kind == "logistic" and not 0.0 < float(self.param("r")) <= 4.0:
            raise SignalError("logistic r must lie in (0, 4]")
        if self.kind == "tent" and not 0.0 < float(self.param("slope")) <= 2.0:
            raise SignalError("tent slope must lie in (0, 2]")
        if self.kind == "ar1":
            if not abs(float(self.param("phi"))) < 1.0:
                raise SignalError("ar1 coefficient phi must satisfy |phi| < 1")
            if not float(self.param("noise_std")) > 0.0:
                raise SignalError("ar1 noise_std must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "parameters": dict(self.parameters),
            "stride": self.stride,
            "wrap_policy": self.wrap_policy,
        }


@dataclass(frozen=True)
class CalibrationStats:
    """Five threshold levels in code units, lowest first."""

    quantiles: tuple[float, float, float, float, float]
    sample_count: int

    def __post_init__(self):
        if len(self.quantiles) != 5:
            raise SignalError("exactly five quantile levels are required")
        if any(a > b for a, b in zip(self.quantiles, self.quantiles[1:])):
            raise SignalError("quantile levels must be non-decreasing")

    @classmethod
    def uniform_exact(cls) -> "CalibrationStats":
        """Levels of the discrete uniform code distribution, symmetric about 127."""
        return cls((-1.0, 63.0, 127.0, 191.0, 255.0), sample_count=256)


# -- trace files -------------------------------------------------------------


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_trace(path: str | Path, payload: bytes, sample_interval_ps: int = 10,
                declared_length: int | None = None) -> TraceHeader:
    """Write ``payload`` verbatim to ``path`` plus its ``.meta`` sidecar."""
    payload = bytes(payload)
    if declared_length is not None and declared_length != len(payload):
        raise SignalError(
            f"declared length {declared_length} does not match payload length {len(payload)}")
    header = TraceHeader(sample_interval_ps=int(sample_interval_ps), resolution_bits=8,
                         length=len(payload))
    header.validate()
    path = Path(path)
    path.write_bytes(payload)
    meta = {"sample_interval_ps": header.sample_interval_ps,
            "resolution_bits": header.resolution_bits,
            "length": header.length}
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return header


def read_trace(path: str | Path) -> tuple[TraceHeader, np.ndarray]:
    path = Path(path)
    mpath = meta_path(path)
    if not path.is_file():
        raise SignalError(f"trace file not found: {path}")
    if not mpath.is_file():
        raise SignalError(f"trace header not found: {mpath}")
    try:
        meta = json.loads(mpath.read_text(encoding="utf-8"))
        header = TraceHeader(sample_interval_ps=int(meta["sample_interval_ps"]),
                             resolution_bits=int(meta["resolution_bits"]),
                             length=int(meta["length"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise SignalError(f"corrupt trace header {mpath}: {exc}") from exc
    header.validate()
    data = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    if data.size != header.length:
        raise SignalError(
            f"trace {path} holds {data.size} bytes but header declares {header.length}")
    return header, data


# -- sources -----------------------------------------------------------------


def _to_codes(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scaled = (np.clip(x, lo, hi) - lo) * (CODE_MAX / (hi - lo))
    return np.floor(scaled + 0.5).astype(np.uint8)


class SignalSource:
    """Stateful, single-owner emitter of 8-bit codes.

    Use :func:`open_source` to construct one.  ``fresh()`` returns an
    independent copy rewound to the first sample.
    """

    def __init__(self, spec: SourceSpec, seed: int):
        spec.validate()
        self.spec = spec
        self.seed = int(seed)
        self._buffer = np.empty(0, dtype=np.uint8)
        self._pos = 0
        self._emitted = 0
        if spec.kind == "trace":
            self.header, self._trace = read_trace(spec.parameters["path"])
            self._cursor = 0
        else:
            self._rng = np.random.default_rng(self.seed & 0xFFFFFFFFFFFFFFFF)
            self._init_generator()

    def _init_generator(self) -> None:
        kind = self.spec.kind
        if kind in ("logistic", "tent"):
            x = 0.0
            # avoid the measure-zero orbits that collapse onto fixed points
            while x <= 0.0 or x >= 1.0 or x in (0.25, 0.5, 0.75):
                x = float(self._rng.random())
            self._x = x
        elif kind == "ar1":
            phi = float(self.spec.param("phi"))
            sigma = float(self.spec.param("noise_std"))
            self._sd = sigma / math.sqrt(1.0 - phi * phi)
            self._x = float(self._rng.normal(0.0, self._sd))

    def fresh(self) -> "SignalSource":
        return SignalSource(self.spec, self.seed)

    @property
    def emitted(self) -> int:
        return self._emitted

    # Raw generator output, one value per generator step (before striding).
    def _generate(self, n: int) -> np.ndarray:
        kind = self.spec.kind
        if kind == "uniform":
            return self._rng.integers(CODE_MIN, CODE_MAX + 1, size=n, dtype=np.uint8)
        if kind == "ar1":
            phi = float(self.spec.param("phi"))
            noise = self._rng.normal(0.0, float(self.spec.param("noise_std")), size=n)
            x, _ = lfilter([1.0], [1.0, -phi], noise, zi=[phi * self._x])
            self._x = float(x[-1])
            return _to_codes(x, -4.0 * self._sd, 4.0 * self._sd)
        out = np.empty(n, dtype=np.float64)
        x = self._x
        if kind == "logistic":
            r = float(self.spec.param("r"))
            for i in range(n):
                x = r * x * (1.0 - x)
                out[i] = x
        else:
            slope = float(self.spec.param("slope"))
            for i in range(n):
                x = slope * (x if x < 0.5 else 1.0 - x)
                out[i] = x
        self._x = x
        return _to_codes(out, 0.0, 1.0)

    def _refill(self) -> None:
        stride = self.spec.stride
        block = self._generate(_BLOCK * stride)
        self._buffer = block[::stride].copy() if stride > 1 else block
        self._pos = 0

    def _read_trace(self, n: int) -> np.ndarray:
        stride = self.spec.stride
        length = self._trace.size
        idx = self._cursor + stride * np.arange(n, dtype=np.int64)
        if self.spec.wrap_policy == "error" and n and idx[-1] >= length:
            raise TraceExhausted(f"trace exhausted after {self._emitted} samples")
        self._cursor += stride * n
        if self.spec.wrap_policy == "wrap":
            self._cursor %= length
        return self._trace[idx % length]

    def read(self, n: int) -> np.ndarray:
        """Return the next ``n`` codes as a uint8 array."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if self.spec.kind == "trace":
            out = self._read_trace(n)
        else:
            parts = []
            need = n
            while need:
                if self._pos >= self._buffer.size:
                    self._refill()
                take = min(need, self._buffer.size - self._pos)
                parts.append(self._buffer[self._pos:self._pos + take])
                self._pos += take
                need -= take
            out = np.concatenate(parts) if parts else np.empty(0, dtype=np.uint8)
        self._emitted += n
        return out

    def next_sample(self) -> SignalSample:
        return SignalSample(int(self.read(1)[0]))


def open_source(spec: SourceSpec, seed: int = 0) -> SignalSource:
    return SignalSource(spec, seed)


def next_sample(source: SignalSource) -> SignalSample:
    return source.next_sample()


def calibrate(source: SignalSource, n: int = 10_000) -> CalibrationStats:
    """Nearest-rank quartiles of ``n`` samples from a fresh copy of ``source``.

    The outer levels are fixed at -1 and 255 so the extreme threshold levels
    select one branch with certainty.
    """
    if n < 1000:
        raise SignalError("calibration needs at least 1000 samples")
    data = np.sort(source.fresh().read(n))
    if data[0] == data[-1]:
        raise SignalError("zero-variance calibration sample")
    inner = [float(data[math.ceil(p * n) - 1]) for p in LEVEL_PROBABILITIES[1:4]]
    return CalibrationStats((float(CODE_MIN - 1), *inner, float(CODE_MAX)), sample_count=n)


def acf(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 1..max_lag.

    Each lagged product sum is averaged over its ``n - k`` overlapping terms
    and divided by the (1/n) sample variance.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    d = x - x.mean()
    var = float(np.dot(d, d)) / n
    if var == 0.0:
        raise SignalError("zero-variance sequence has no autocorrelation")
    return np.array([np.dot(d[:-k], d[k:]) / (n - k) / var for k in range(1, max_lag + 1)])


def autocorrelation(source: SignalSource, n: int, max_lag: int) -> np.ndarray:
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if n <= 10 * max_lag:
        raise ValueError("n must exceed 10 * max_lag")
    return acf(source.read(n), max_lag)
