"""Channel throughput traces: loading, synthesis, and looped playback.

Canonical units are milliseconds for time and bytes/ms for rate. Trace files
are UTF-8 CSV with lines ``time_ms,throughput_kBps``; 1 kBps equals exactly
1 byte/ms, so file values carry over numerically. ``#`` comment lines and an
optional ``time_ms,throughput_kBps`` header are ignored.

Playback uses zero-order hold (the rate reported at a sample time applies
until the next sample) and wraps modulo the trace duration, so a trace can
drive arbitrarily long runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .rng import substream

HEADER = "time_ms,throughput_kBps"


class TraceError(ValueError):
    """Malformed trace file or invalid trace parameters."""


class TraceSample(NamedTuple):
    time: float  # ms, strictly increasing, first sample at 0
    rate: float  # bytes/ms, > 0


@dataclass(frozen=True)
class Trace:
    """Immutable throughput trace; safe to share across environments."""

    times: np.ndarray  # ms, float64
    rates: np.ndarray  # bytes/ms, float64
    duration: float  # ms, >= last sample time
    trace_id: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        rates = np.asarray(self.rates, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)
        if times.size == 0:
            raise TraceError("trace must contain at least one sample")
        if times.shape != rates.shape or times.ndim != 1:
            raise TraceError("times and rates must be 1-d arrays of equal length")
        if times[0] != 0.0:
            raise TraceError("first sample time must be 0")
        if np.any(np.diff(times) <= 0):
            raise TraceError("sample times must be strictly increasing")
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise TraceError("rates must be finite and strictly positive")
        if not math.isfinite(self.duration) or self.duration <= 0 or self.duration < times[-1]:
            raise TraceError("duration must be positive, finite and >= last sample time")

    @property
    def samples(self) -> list[TraceSample]:
        return [TraceSample(float(t), float(r)) for t, r in zip(self.times, self.rates)]

    @property
    def mean_rate(self) -> float:
        """Time-weighted mean rate over one playback period."""
        ends = np.append(self.times[1:], self.duration)
        weights = ends - self.times
        total = weights.sum()
        if total <= 0:  # single sample at t=0 with duration 0 is rejected above
            return float(self.rates[0])
        return float(np.dot(weights, self.rates) / total)

    def rate_at(self, t: float) -> float:
        """Rate in effect at time t (ms), wrapping modulo the duration."""
        if t < 0:
            raise ValueError(f"time must be non-negative, got {t}")
        tm = math.fmod(t, self.duration)
        idx = int(np.searchsorted(self.times, tm, side="right")) - 1
        return float(self.rates[idx])


def rate_at(trace: Trace, t: float) -> float:
    return trace.rate_at(t)


def load_trace(path) -> Trace:
    """Parse a trace CSV into canonical units.

    The duration is the last sample time plus the last inter-sample gap
    (1000 ms when the file holds a single sample).
    """
    path = Path(path)
    times: list[float] = []
    rates: list[float] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower().replace(" ", "") == HEADER.lower():
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise TraceError(f"{path}: expected 'time_ms,throughput_kBps' at line {lineno}")
            try:
                t, r = float(parts[0]), float(parts[1])
            except ValueError as exc:
                raise TraceError(f"{path}: non-numeric value at line {lineno}") from exc
            if not times and t != 0.0:
                raise TraceError(f"{path}: first sample time must be 0, got {t} at line {lineno}")
            if times and t <= times[-1]:
                raise TraceError(f"{path}: non-monotone time at line {lineno}")
            if r <= 0 or not math.isfinite(r):
                raise TraceError(f"{path}: non-positive rate at line {lineno}")
            times.append(t)
            rates.append(r)  # kBps == bytes/ms exactly
    if not times:
        raise TraceError(f"{path}: no samples")
    gap = times[-1] - times[-2] if len(times) > 1 else 1000.0
    return Trace(np.array(times), np.array(rates), duration=times[-1] + gap, trace_id=path.stem)


def save_trace(trace: Trace, path) -> None:
    """Write a trace in the CSV format accepted by load_trace."""
    path = Path(path)
    lines = [HEADER]
    for t, r in zip(trace.times, trace.rates):
        lines.append(f"{float(t)!r},{float(r)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trace_dir(path) -> list[Trace]:
    """Load every *.csv under path, sorted by filename."""
    path = Path(path)
    files = sorted(path.glob("*.csv"))
    if not files:
        raise TraceError(f"no trace files (*.csv) found in {path}")
    return [load_trace(f) for f in files]


def _grid(duration: float, step: float) -> np.ndarray:
    if duration <= 0 or step <= 0:
        raise TraceError("duration and step must be positive")
    n = max(1, int(math.ceil(duration / step)))
    return np.arange(n, dtype=np.float64) * step


def gen_constant(rate: float, duration: float, step: float, seed: int = 0,
                 trace_id: str = "") -> Trace:
    if rate <= 0:
        raise TraceError("rate must be positive")
    times = _grid(duration, step)
    rates = np.full_like(times, float(rate))
    return Trace(times, rates, duration=float(times[-1] + step),
                 trace_id=trace_id or f"constant_r{rate:g}_s{seed}")


def gen_two_level_markov(low: float, high: float, p_switch: float, duration: float,
                         step: float, seed: int = 0, trace_id: str = "") -> Trace:
    """Two-state Markov rate: flips between low and high w.p. p_switch per step."""
    if low <= 0 or high <= 0:
        raise TraceError("rates must be positive")
    if not 0.0 <= p_switch <= 1.0:
        raise TraceError("p_switch must be in [0, 1]")
    times = _grid(duration, step)
    rng = substream(seed, "trace-gen", 0)
    state = int(rng.random() < 0.5)  # symmetric chain; start from stationary law
    levels = (float(low), float(high))
    rates = np.empty_like(times)
    for i in range(times.size):
        rates[i] = levels[state]
        if rng.random() < p_switch:
            state = 1 - state
    return Trace(times, rates, duration=float(times[-1] + step),
                 trace_id=trace_id or f"markov2_l{low:g}_h{high:g}_s{seed}")


def gen_lognormal_walk(median: float, sigma: float, lo: float, hi: float,
                       duration: float, step: float, seed: int = 0,
                       trace_id: str = "") -> Trace:
    """Geometric random walk of the rate, reflected into [lo, hi]."""
    if median <= 0 or lo <= 0 or hi <= lo:
        raise TraceError("need 0 < lo < hi and median > 0")
    if sigma < 0:
        raise TraceError("sigma must be non-negative")
    times = _grid(duration, step)
    rng = substream(seed, "trace-gen", 0)
    log_lo, log_hi = math.log(lo), math.log(hi)
    x = min(max(math.log(median), log_lo), log_hi)
    rates = np.empty_like(times)
    for i in range(times.size):
        rates[i] = math.exp(x)
        x += sigma * rng.standard_normal()
        # reflect at the walls so the walk stays bounded without sticking
        if x > log_hi:
            x = 2 * log_hi - x
        if x < log_lo:
            x = min(2 * log_lo - x, log_hi)
    return Trace(times, rates, duration=float(times[-1] + step),
                 trace_id=trace_id or f"logwalk_m{median:g}_s{seed}")


GENERATORS = {
    "constant": gen_constant,
    "two-level-markov": gen_two_level_markov,
    "lognormal-walk": gen_lognormal_walk,
}


def gen_synthetic(kind: str, params: dict, duration: float, step: float,
                  seed: int = 0, trace_id: str = "") -> Trace:
    """Dispatch to a named generator; deterministic given seed."""
    try:
        fn = GENERATORS[kind]
    except KeyError:
        raise TraceError(f"unknown trace kind {kind!r}; choose from {sorted(GENERATORS)}")
    return fn(duration=duration, step=step, seed=seed, trace_id=trace_id, **params)
