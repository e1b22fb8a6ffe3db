"""Sensor-selection policies: EDF, OSRP, and the learned policy.

All selectors are pure functions of their inputs plus (for the random ones)
an explicit generator, so concurrent evaluations just use distinct streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import Observation
from .nn import FeatureScale, NetParams, featurize, forward_actor


def edf_select(ages: np.ndarray, thresholds: np.ndarray) -> int:
    """Earliest-deadline-first: minimum slack threshold - age, ties to lowest index.

    Already-violating sensors have negative slack and therefore win, i.e. the
    most overdue sensor is served first.
    """
    ages = np.asarray(ages, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if ages.shape != thresholds.shape or ages.ndim != 1 or ages.size == 0:
        raise ValueError("ages and thresholds must be equal-length non-empty vectors")
    return int(np.argmin(thresholds - ages))


def osrp_probs(thresholds: np.ndarray) -> np.ndarray:
    """Stationary selection probabilities inversely proportional to thresholds."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1 or thresholds.size == 0 or np.any(thresholds <= 0):
        raise ValueError("thresholds must be a non-empty vector of positive values")
    inv = 1.0 / thresholds
    return inv / inv.sum()


def osrp_select(probs: np.ndarray, rng: np.random.Generator) -> int:
    """One categorical draw from a fixed selection distribution."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0):
        raise ValueError("probs must be a non-empty vector of non-negative values")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"probs must sum to 1, got {probs.sum()!r}")
    return _categorical(probs, rng)


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    # clamp guards the (cumsum[-1] slightly < 1) rounding corner
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return min(idx, probs.size - 1)


def policy_select(obs: Observation, params: NetParams, scale: FeatureScale,
                  mode: str = "greedy", rng: np.random.Generator | None = None) -> int:
    """Action from the learned policy: categorical sample or argmax."""
    probs = forward_actor(params, featurize(obs, scale))
    if mode == "greedy":
        return int(np.argmax(probs))
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        return _categorical(probs, rng)
    raise ValueError(f"mode must be 'sample' or 'greedy', got {mode!r}")


# --------------------------------------------------------------------------
# uniform interface used by the evaluator and CLI

class Scheduler:
    """A scheduler maps observations to sensor indices, maybe randomly."""

    name = "scheduler"

    def select(self, obs: Observation, rng: np.random.Generator) -> int:
        raise NotImplementedError


@dataclass
class EdfScheduler(Scheduler):
    thresholds: np.ndarray
    name: str = "edf"

    def select(self, obs: Observation, rng: np.random.Generator) -> int:
        return edf_select(obs.ages, self.thresholds)


@dataclass
class OsrpScheduler(Scheduler):
    thresholds: np.ndarray
    name: str = "osrp"

    def __post_init__(self):
        self.probs = osrp_probs(self.thresholds)

    def select(self, obs: Observation, rng: np.random.Generator) -> int:
        return osrp_select(self.probs, rng)


@dataclass
class PolicyScheduler(Scheduler):
    params: NetParams
    scale: FeatureScale
    mode: str = "greedy"
    name: str = "rl"

    def select(self, obs: Observation, rng: np.random.Generator) -> int:
        return policy_select(obs, self.params, self.scale, self.mode, rng)
