"""Run configuration: one JSON document driving training, eval and compare.

A config may start from the built-in ``paper-iv`` preset (10 sensors with
packet sizes 50..500 B, thresholds 30..210 ms, weights 1000*(N-n)/N, drop
probability 10%, five-job throughput window) and override any nested field.
Unknown keys anywhere are rejected so typos fail fast, before side effects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .env import EnvConfig, SensorConfig
from .nn import config_hash
from .train import TrainConfig


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class EvalSettings:
    jobs: int = 50000
    burn_in: int = 100
    episode_len: int = 5000
    mode: str = "greedy"

    def __post_init__(self):
        if self.jobs < 1 or self.burn_in < 0 or self.episode_len < 1:
            raise ConfigError("eval jobs/episode_len must be >= 1, burn_in >= 0")
        if self.mode not in ("greedy", "sample"):
            raise ConfigError("eval mode must be 'greedy' or 'sample'")


@dataclass(frozen=True)
class RunPaths:
    trace_dir: str = "traces"
    out_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    seed: int
    env: EnvConfig
    train: TrainConfig
    eval: EvalSettings
    paths: RunPaths

    def shape_hash(self) -> str:
        """Hash of everything a checkpoint must agree with the config on."""
        payload = {
            "sensors": [[s.packet_size, s.threshold, s.weight]
                        for s in self.env.sensors],
            "success_prob": self.env.success_prob,
            "history_len": self.env.history_len,
            "max_attempts": self.env.max_attempts,
            "filters": self.train.filters,
            "kernel": self.train.kernel,
            "hidden": self.train.hidden,
        }
        return config_hash(payload)


def paper_iv_sensors(count: int = 10, size_step: float = 50.0,
                     threshold_start: float = 30.0, threshold_step: float = 20.0,
                     weight_scale: float = 1000.0) -> list[SensorConfig]:
    """Sensor bank rule: growing packet sizes, growing thresholds,
    violation weights shrinking with the sensor index."""
    if count < 1:
        raise ConfigError("sensor count must be >= 1")
    return [
        SensorConfig(packet_size=size_step * (n + 1),
                     threshold=threshold_start + threshold_step * n,
                     weight=weight_scale * (count - n) / count)
        for n in range(count)
    ]


_PRESETS = {
    "paper-iv": {
        "sensors": {"count": 10, "size_step": 50.0, "threshold_start": 30.0,
                    "threshold_step": 20.0, "weight_scale": 1000.0},
        "env": {"success_prob": 0.9, "history_len": 5, "max_attempts": 64},
        "train": {"gamma": 0.9, "actor_lr": 0.001, "critic_lr": 0.001},
    },
}

_SECTIONS = {"defaults", "seed", "sensors", "env", "train", "eval", "paths"}
_ENV_KEYS = {"success_prob", "history_len", "max_attempts"}
_TRAIN_KEYS = {"gamma", "actor_lr", "critic_lr", "entropy_schedule", "episode_len",
               "rollout_len", "workers", "filters", "kernel", "hidden", "optimizer",
               "reward_scale", "max_grad_norm", "age_scale", "rate_scale"}
_EVAL_KEYS = {"jobs", "burn_in", "episode_len", "mode"}
_PATH_KEYS = {"trace_dir", "out_dir"}
_SENSOR_RULE_KEYS = {"count", "size_step", "threshold_start", "threshold_step",
                     "weight_scale"}
_SENSOR_KEYS = {"packet_size", "threshold", "weight"}


def _check_keys(section: str, data: dict, allowed: set) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _build_sensors(spec) -> list[SensorConfig]:
    if isinstance(spec, dict):
        _check_keys("sensors", spec, _SENSOR_RULE_KEYS)
        return paper_iv_sensors(**spec)
    if isinstance(spec, list):
        sensors = []
        for i, entry in enumerate(spec):
            if not isinstance(entry, dict):
                raise ConfigError(f"sensors[{i}] must be an object")
            _check_keys(f"sensors[{i}]", entry, _SENSOR_KEYS)
            try:
                sensors.append(SensorConfig(**entry))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"sensors[{i}]: {exc}") from exc
        return sensors
    raise ConfigError("sensors must be a rule object or a list of sensor objects")


def build_config(data: dict) -> RunConfig:
    """Validate a parsed JSON document and expand presets."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    _check_keys("config", data, _SECTIONS)
    preset_name = data.get("defaults")
    if preset_name is not None:
        if preset_name not in _PRESETS:
            raise ConfigError(f"unknown defaults preset {preset_name!r}; "
                              f"available: {sorted(_PRESETS)}")
        data = _merge(_PRESETS[preset_name], {k: v for k, v in data.items()
                                              if k != "defaults"})
    if "sensors" not in data:
        raise ConfigError("config must define sensors (or use a defaults preset)")

    env_data = data.get("env", {})
    _check_keys("env", env_data, _ENV_KEYS)
    train_data = data.get("train", {})
    _check_keys("train", train_data, _TRAIN_KEYS)
    eval_data = data.get("eval", {})
    _check_keys("eval", eval_data, _EVAL_KEYS)
    paths_data = data.get("paths", {})
    _check_keys("paths", paths_data, _PATH_KEYS)

    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    if "entropy_schedule" in train_data:
        raw = train_data["entropy_schedule"]
        try:
            train_data = dict(train_data,
                              entropy_schedule=tuple((float(b), int(e)) for b, e in raw))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"entropy_schedule must be [[beta, episodes], ...]: {exc}")

    try:
        env_cfg = EnvConfig(sensors=tuple(_build_sensors(data["sensors"])), **env_data)
        train_cfg = TrainConfig(seed=seed, **train_data)
        eval_cfg = EvalSettings(**eval_data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(seed=seed, env=env_cfg, train=train_cfg, eval=eval_cfg,
                     paths=RunPaths(**paths_data))


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return build_config(data)
