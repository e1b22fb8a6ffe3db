"""Scheduling environment: ages, transmission with drops, and rewards.

One step is one job: the controller picks a single sensor, that sensor
transmits one packet to completion (retransmitting lost attempts), and every
sensor's age advances by the job's service time while the selected sensor's
age resets to it. The reward is the negated sum of post-step ages minus the
weighted threshold-violation penalties.

State evolution per job, for selected sensor n with service time D:
    a_n <- D           a_m <- a_m + D  (m != n)
    R   <- -sum_m a_m - sum_m lambda_m * [a_m > tau_m]
where D sums per-attempt durations packet_size / rate(attempt start time),
with the attempt count drawn geometrically (success probability p, capped).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import substream
from .traces import Trace


@dataclass(frozen=True)
class SensorConfig:
    packet_size: float  # L_n, bytes
    threshold: float  # tau_n, ms
    weight: float  # lambda_n, penalty per violating job

    def __post_init__(self):
        if self.packet_size <= 0 or self.threshold <= 0:
            raise ValueError("packet_size and threshold must be positive")
        if self.weight < 0:
            raise ValueError("weight must be non-negative")


@dataclass(frozen=True)
class EnvConfig:
    sensors: tuple[SensorConfig, ...]
    success_prob: float = 0.9  # p
    history_len: int = 5  # j, throughput window length
    max_attempts: int = 64  # retransmission cap; keeps service time finite

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if len(self.sensors) < 1:
            raise ValueError("need at least one sensor")
        if not 0.0 < self.success_prob <= 1.0:
            raise ValueError("success_prob must be in (0, 1]")
        if self.history_len < 1 or self.max_attempts < 1:
            raise ValueError("history_len and max_attempts must be >= 1")

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def packet_sizes(self) -> np.ndarray:
        return np.array([s.packet_size for s in self.sensors])

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([s.threshold for s in self.sensors])

    @property
    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.sensors])


@dataclass(frozen=True)
class Observation:
    """Agent-visible snapshot: no trace lookahead, no drop-RNG state."""

    ages: np.ndarray  # ms, length N
    recent_throughput: np.ndarray  # bytes/ms, length j, oldest first
    last_service_time: float  # ms, 0 before the first job


@dataclass(frozen=True)
class ServiceOutcome:
    attempts: int  # d_n(k)
    attempt_rates: tuple[float, ...]  # rate at each attempt's start, bytes/ms
    duration: float  # ms, sum of per-attempt durations
    truncated: bool  # hit the max_attempts cap


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    outcome: ServiceOutcome
    violations: np.ndarray  # bool per sensor, on post-step ages


class AoIEnv:
    """Single-channel AoI environment over one trace.

    Mutating; one instance per thread. Several instances may share a Trace.
    The drop stream is derived from (seed, "drops") only, so adding other
    random consumers never changes the drop sequence.
    """

    def __init__(self, config: EnvConfig, trace: Trace, seed: int = 0,
                 start_offset: float = 0.0):
        self.config = config
        self.trace = trace
        self.reset(seed=seed, start_offset=start_offset)

    def reset(self, seed: int | None = None, start_offset: float | None = None) -> Observation:
        """Zero all ages and histories; reposition playback; reseed drops."""
        if seed is not None:
            self._seed = int(seed)
        if start_offset is not None:
            if start_offset < 0:
                raise ValueError("start_offset must be non-negative")
            self._start_offset = float(start_offset)
        n = self.config.n_sensors
        self.ages = np.zeros(n)
        self.clock = self._start_offset
        self.job_index = 0
        self.recent_throughput = np.zeros(self.config.history_len)
        self.last_service_time = 0.0
        self._drop_rng = substream(self._seed, "drops")
        return self.observe()

    def observe(self) -> Observation:
        return Observation(
            ages=self.ages.copy(),
            recent_throughput=self.recent_throughput.copy(),
            last_service_time=self.last_service_time,
        )

    def transmit(self, sensor: int) -> ServiceOutcome:
        """Run one job's transmission for `sensor`, advancing the clock.

        Each attempt reads the trace rate at its own start time, so the rate
        can change mid-job. Attempts repeat until one succeeds (probability
        p per attempt) or the cap is reached.
        """
        cfg = self.config
        if not 0 <= sensor < cfg.n_sensors:
            raise ValueError(f"sensor index {sensor} out of range [0, {cfg.n_sensors})")
        size = cfg.sensors[sensor].packet_size
        rates: list[float] = []
        duration = 0.0
        truncated = False
        while True:
            rate = self.trace.rate_at(self.clock + duration)
            rates.append(rate)
            duration += size / rate
            if cfg.success_prob >= 1.0 or self._drop_rng.random() < cfg.success_prob:
                break
            if len(rates) >= cfg.max_attempts:
                truncated = True
                break
        self.clock += duration
        return ServiceOutcome(attempts=len(rates), attempt_rates=tuple(rates),
                              duration=duration, truncated=truncated)

    def step(self, action: int) -> StepResult:
        """Schedule `action` for the next job and advance one job."""
        cfg = self.config
        if not isinstance(action, (int, np.integer)):
            raise ValueError(f"action must be a sensor index, got {type(action).__name__}")
        outcome = self.transmit(int(action))
        d = outcome.duration
        self.ages += d
        self.ages[action] = d
        achieved = cfg.sensors[action].packet_size * outcome.attempts / d
        self.recent_throughput[:-1] = self.recent_throughput[1:]
        self.recent_throughput[-1] = achieved
        self.last_service_time = d
        self.job_index += 1
        violations = self.ages > cfg.thresholds
        reward = -float(self.ages.sum()) - float(cfg.weights[violations].sum())
        return StepResult(observation=self.observe(), reward=reward,
                          outcome=outcome, violations=violations)


@dataclass
class TrajectoryLog:
    """Per-job record of what the env did; feeds the replay oracle.

    CSV columns: k,action,attempts,duration_ms,reward,age_0..age_{N-1}
    """

    n_sensors: int
    actions: list[int] = field(default_factory=list)
    attempts: list[int] = field(default_factory=list)
    durations: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    ages: list[np.ndarray] = field(default_factory=list)

    def append(self, action: int, result: StepResult) -> None:
        self.actions.append(action)
        self.attempts.append(result.outcome.attempts)
        self.durations.append(result.outcome.duration)
        self.rewards.append(result.reward)
        self.ages.append(result.observation.ages)

    def write_csv(self, path) -> None:
        header = "k,action,attempts,duration_ms,reward," + ",".join(
            f"age_{n}" for n in range(self.n_sensors))
        lines = [header]
        for k, action in enumerate(self.actions):
            ages = ",".join(repr(float(a)) for a in self.ages[k])
            lines.append(f"{k},{action},{self.attempts[k]},"
                         f"{float(self.durations[k])!r},{float(self.rewards[k])!r},{ages}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def replay_ages(actions, durations, n_sensors: int) -> list[list[float]]:
    """Straight-line age replay from logged service times.

    Independent of the env internals on purpose: plain Python floats, one
    age update rule applied per job. Used as the oracle the env must match
    bit-for-bit.
    """
    ages = [0.0] * n_sensors
    out = []
    for action, d in zip(actions, durations):
        for m in range(n_sensors):
            ages[m] = ages[m] + d
        ages[action] = d
        out.append(list(ages))
    return out
