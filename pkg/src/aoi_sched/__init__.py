"""Trace-driven Age-of-Information scheduling: simulator, learner, baselines."""

from .env import AoIEnv, EnvConfig, Observation, SensorConfig, ServiceOutcome, StepResult
from .traces import Trace, TraceError, gen_synthetic, load_trace, rate_at, save_trace

__all__ = [
    "AoIEnv",
    "EnvConfig",
    "Observation",
    "SensorConfig",
    "ServiceOutcome",
    "StepResult",
    "Trace",
    "TraceError",
    "gen_synthetic",
    "load_trace",
    "rate_at",
    "save_trace",
]

__version__ = "0.1.0"
