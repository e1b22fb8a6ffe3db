"""Evaluation metrics: per-sensor AoI statistics, objective, CDFs, comparison.

The empirical objective mirrors the optimization target: the grand mean of
post-job ages over sensors and jobs, plus the weighted sum of per-sensor
threshold-violation frequencies. Violations use strict inequality on
post-step ages, once per job, matching the environment's reward convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import AoIEnv, EnvConfig
from .rng import substream, substream_int
from .schedulers import Scheduler
from .traces import Trace


@dataclass
class Metrics:
    scheduler: str
    jobs: int
    weights: np.ndarray  # lambda_n used for the penalty term
    avg_aoi: np.ndarray  # per sensor, ms
    violation_freq: np.ndarray  # per sensor, in [0, 1]
    mean_neg_reward: float  # (1/K) sum of -R_k over the counted jobs
    aoi_samples: np.ndarray | None = None  # (jobs, N) post-step ages

    @property
    def n_sensors(self) -> int:
        return len(self.avg_aoi)

    @property
    def aoi_term(self) -> float:
        """Grand-mean age (1/(KN)) sum_k sum_n a_n(k)."""
        return float(self.avg_aoi.mean())

    @property
    def penalty_term(self) -> float:
        return float(np.dot(self.weights, self.violation_freq))

    @property
    def objective(self) -> float:
        return self.aoi_term + self.penalty_term


def evaluate(scheduler: Scheduler, env_cfg: EnvConfig, traces: list[Trace],
             jobs: int, seed: int = 0, burn_in: int = 100,
             episode_len: int = 5000, keep_samples: bool = True) -> Metrics:
    """Run `jobs` counted jobs under the scheduler and aggregate statistics.

    Jobs are split into episodes of at most `episode_len` counted jobs; each
    episode plays one trace (round-robin over the set) from a seeded random
    offset, and its first `burn_in` jobs are excluded to suppress the
    all-zero-age start transient.
    """
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if burn_in < 0 or episode_len < 1:
        raise ValueError("need burn_in >= 0 and episode_len >= 1")
    if not traces:
        raise ValueError("need at least one trace")
    n = env_cfg.n_sensors
    sched_rng = substream(seed, "eval-actions")
    age_sum = np.zeros(n)
    violation_count = np.zeros(n)
    neg_reward_sum = 0.0
    samples = np.empty((jobs, n)) if keep_samples else None

    counted = 0
    episode = 0
    while counted < jobs:
        trace = traces[episode % len(traces)]
        offset = float(substream(seed, "eval-trace-offset", episode).random()
                       * trace.duration)
        env = AoIEnv(env_cfg, trace, seed=substream_int(seed, "eval-env", episode),
                     start_offset=offset)
        length = min(episode_len, jobs - counted)
        for k in range(burn_in + length):
            obs = env.observe()
            result = env.step(scheduler.select(obs, sched_rng))
            if k < burn_in:
                continue
            ages = result.observation.ages
            age_sum += ages
            violation_count += result.violations
            neg_reward_sum -= result.reward
            if samples is not None:
                samples[counted] = ages
            counted += 1
        episode += 1

    return Metrics(
        scheduler=scheduler.name,
        jobs=jobs,
        weights=env_cfg.weights,
        avg_aoi=age_sum / jobs,
        violation_freq=violation_count / jobs,
        mean_neg_reward=neg_reward_sum / jobs,
        aoi_samples=samples,
    )


def cdf(samples) -> list[tuple[float, float]]:
    """Empirical CDF: sorted unique values with cumulative fractions."""
    values = np.asarray(samples, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("cdf needs at least one sample")
    uniq, counts = np.unique(values, return_counts=True)
    fractions = np.cumsum(counts) / values.size
    return list(zip(uniq.tolist(), fractions.tolist()))


@dataclass
class ComparisonReport:
    reference: str
    names: list[str]
    normalized_objective: dict[str, float]
    objective: dict[str, float]
    violation_freq: dict[str, np.ndarray]
    avg_aoi: dict[str, np.ndarray]

    def table_rows(self) -> list[list[str]]:
        """Comparison-table layout: one objective row plus 2N sensor rows."""
        n = len(next(iter(self.avg_aoi.values())))
        rows = [["metric"] + self.names]
        rows.append(["normalized_objective"]
                    + [f"{self.normalized_objective[m]:.4f}" for m in self.names])
        for s in range(n):
            rows.append([f"violation_pct_sensor_{s}"]
                        + [f"{100 * self.violation_freq[m][s]:.3f}" for m in self.names])
        for s in range(n):
            rows.append([f"avg_aoi_sensor_{s}"]
                        + [f"{self.avg_aoi[m][s]:.3f}" for m in self.names])
        return rows


def compare(metrics: list[Metrics], reference: str | None = None) -> ComparisonReport:
    """Normalize every objective by the reference scheduler's objective."""
    if not metrics:
        raise ValueError("compare needs at least one metrics entry")
    names = [m.scheduler for m in metrics]
    if reference is None:
        reference = names[0]
    by_name = {m.scheduler: m for m in metrics}
    if reference not in by_name:
        raise ValueError(f"reference {reference!r} not among {names}")
    ref_obj = by_name[reference].objective
    if ref_obj == 0:
        raise ValueError("reference objective is zero; cannot normalize")
    return ComparisonReport(
        reference=reference,
        names=names,
        normalized_objective={m.scheduler: m.objective / ref_obj for m in metrics},
        objective={m.scheduler: m.objective for m in metrics},
        violation_freq={m.scheduler: m.violation_freq for m in metrics},
        avg_aoi={m.scheduler: m.avg_aoi for m in metrics},
    )


# --------------------------------------------------------------------------
# CSV artifacts

def write_metrics_csv(path, metrics: Metrics) -> None:
    lines = ["scheduler,sensor,avg_aoi_ms,violation_freq"]
    for s in range(metrics.n_sensors):
        lines.append(f"{metrics.scheduler},{s},{float(metrics.avg_aoi[s])!r},"
                     f"{float(metrics.violation_freq[s])!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics_csv(path, weights) -> Metrics:
    """Rebuild per-sensor stats from a metrics CSV (no samples, no rewards)."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0] != "scheduler,sensor,avg_aoi_ms,violation_freq":
        raise ValueError(f"{path}: not a metrics CSV")
    name = None
    avg, freq = [], []
    for line in lines[1:]:
        sched, sensor, aoi, vf = line.split(",")
        if name is None:
            name = sched
        elif sched != name:
            raise ValueError(f"{path}: mixed schedulers in one metrics file")
        if int(sensor) != len(avg):
            raise ValueError(f"{path}: sensor rows out of order")
        avg.append(float(aoi))
        freq.append(float(vf))
    weights = np.asarray(weights, dtype=np.float64)
    if len(avg) != len(weights):
        raise ValueError(f"{path}: {len(avg)} sensors but {len(weights)} weights")
    return Metrics(scheduler=name, jobs=0, weights=weights,
                   avg_aoi=np.array(avg), violation_freq=np.array(freq),
                   mean_neg_reward=float("nan"))


def write_cdf_csv(path, metrics: Metrics) -> None:
    if metrics.aoi_samples is None:
        raise ValueError("metrics carry no samples; evaluate with keep_samples=True")
    lines = ["sensor,aoi_ms,cdf"]
    for s in range(metrics.n_sensors):
        for value, frac in cdf(metrics.aoi_samples[:, s]):
            lines.append(f"{s},{value!r},{frac!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_summary_csv(path, report: ComparisonReport) -> None:
    lines = ["scheduler,objective,normalized_objective"]
    for name in report.names:
        lines.append(f"{name},{report.objective[name]!r},"
                     f"{report.normalized_objective[name]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_comparison_csv(path, report: ComparisonReport) -> None:
    lines = [",".join(row) for row in report.table_rows()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
