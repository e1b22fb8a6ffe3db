"""Advantage actor-critic training over trace-driven episodes.

Each update consumes one on-policy rollout: sample actions from the actor,
estimate one-step TD advantages with the critic, ascend the policy gradient
plus an entropy bonus, and descend the summed squared TD error. Training
proceeds through an annealing schedule of entropy weights; each stage resumes
from the previous stage's parameters and the final stage runs at weight zero.

Episodes are truncations of an infinite-horizon process: the value of the
state after the last job of a rollout is bootstrapped from the critic, never
zeroed.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .env import AoIEnv, EnvConfig
from .nn import FeatureScale, Features, NetParams, NetShape
from .rng import substream, substream_int
from .traces import Trace

log = logging.getLogger(__name__)

# annealing endpoints follow the training protocol: start wide (weight 5),
# restart stage by stage down to zero, keep the zero-weight model
DEFAULT_ENTROPY_SCHEDULE = ((5.0, 100), (2.0, 100), (1.0, 100),
                            (0.5, 100), (0.1, 100), (0.0, 100))


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient goes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.9
    actor_lr: float = 0.001
    critic_lr: float = 0.001
    entropy_schedule: tuple[tuple[float, int], ...] = DEFAULT_ENTROPY_SCHEDULE
    episode_len: int = 500  # jobs per episode
    rollout_len: int = 50  # jobs per update
    workers: int = 1
    seed: int = 0
    filters: int = 128
    kernel: int = 4
    hidden: int = 128
    optimizer: str = "rmsprop"  # or "sgd"; both deterministic
    reward_scale: float = 100.0  # rewards divided by this for the learner only
    max_grad_norm: float = 10.0  # global L2 clip on each update, 0 disables
    age_scale: float = 100.0
    rate_scale: float | None = None  # default: mean rate over the trace set

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.rollout_len < 1 or self.episode_len < self.rollout_len:
            raise ValueError("need episode_len >= rollout_len >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.optimizer not in ("sgd", "rmsprop"):
            raise ValueError("optimizer must be 'sgd' or 'rmsprop'")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be positive")
        betas = [b for b, _ in self.entropy_schedule]
        episodes = [e for _, e in self.entropy_schedule]
        if not betas or any(e < 0 for e in episodes):
            raise ValueError("entropy_schedule must be non-empty with episodes >= 0")
        if any(b2 > b1 for b1, b2 in zip(betas, betas[1:])) or betas[-1] != 0.0:
            raise ValueError("entropy weights must be non-increasing and end at 0")


@dataclass
class Trajectory:
    """One rollout: len(actions) records; features has one extra final state."""

    features: list[Features]
    actions: np.ndarray  # int, (L,)
    rewards: np.ndarray  # float, (L,), already divided by reward_scale
    values: np.ndarray | None = None  # (L+1,) critic estimates
    targets: np.ndarray | None = None  # (L,) R_k + gamma * V(s_{k+1})
    advantages: np.ndarray | None = None  # (L,) targets - values[:-1]
    raw_rewards: np.ndarray | None = None  # unscaled, for logging
    violations: int = 0
    age_sum: float = 0.0

    def __len__(self) -> int:
        return len(self.actions)


def rollout(env: AoIEnv, actor: NetParams, scale: FeatureScale, length: int,
            rng: np.random.Generator, reward_scale: float = 1.0) -> Trajectory:
    """Sample `length` on-policy jobs from env; deterministic given streams."""
    feats = [nn.featurize(env.observe(), scale)]
    actions = np.empty(length, dtype=np.intp)
    rewards = np.empty(length)
    raw = np.empty(length)
    violations = 0
    age_sum = 0.0
    for k in range(length):
        probs = nn.forward_actor(actor, feats[k])
        action = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
        action = min(action, probs.size - 1)
        result = env.step(action)
        feats.append(nn.featurize(result.observation, scale))
        actions[k] = action
        raw[k] = result.reward
        rewards[k] = result.reward / reward_scale
        violations += int(result.violations.sum())
        age_sum += float(result.observation.ages.sum())
    return Trajectory(features=feats, actions=actions, rewards=rewards,
                      raw_rewards=raw, violations=violations, age_sum=age_sum)


def compute_advantages(traj: Trajectory, critic: NetParams, gamma: float) -> Trajectory:
    """Fill values, one-step TD targets and advantages (targets stay frozen)."""
    if len(traj) == 0:
        traj.values = np.zeros(1)
        traj.targets = np.zeros(0)
        traj.advantages = np.zeros(0)
        return traj
    traj.values = np.array([nn.forward_critic(critic, f) for f in traj.features])
    traj.targets = traj.rewards + gamma * traj.values[1:]
    traj.advantages = traj.targets - traj.values[:-1]
    if not np.all(np.isfinite(traj.advantages)):
        raise TrainingDiverged("non-finite advantage estimate")
    return traj


def actor_gradient(actor: NetParams, traj: Trajectory, beta: float) -> NetParams:
    """Ascent direction sum_k [grad log pi(s_k,a_k) A_k + beta grad H(pi(s_k))]."""
    total = nn.zeros_like_params(actor)
    for k in range(len(traj)):
        nn.add_grads(total, nn.grad_log_prob(actor, traj.features[k], int(traj.actions[k])),
                     factor=float(traj.advantages[k]))
        if beta != 0.0:
            nn.add_grads(total, nn.grad_entropy(actor, traj.features[k]), factor=beta)
    return total


def critic_gradient(critic: NetParams, traj: Trajectory) -> NetParams:
    """Descent direction -grad sum_k (target_k - V(s_k))^2, targets frozen."""
    total = nn.zeros_like_params(critic)
    for k in range(len(traj)):
        nn.add_grads(total, nn.grad_value_sq_err(critic, traj.features[k],
                                                 float(traj.targets[k])), factor=-1.0)
    return total


def _checked(grad: NetParams, max_norm: float, what: str) -> NetParams:
    norm = nn.grad_norm(grad)
    if not np.isfinite(norm):
        raise TrainingDiverged(f"non-finite {what} gradient")
    if max_norm > 0:
        grad = nn.clip_grad(grad, max_norm)
    return grad


def actor_step(actor: NetParams, traj: Trajectory, lr: float, beta: float,
               state: nn.RmsState | None = None, max_grad_norm: float = 0.0) -> NetParams:
    """One policy-gradient ascent step over a rollout with advantages filled."""
    if traj.advantages is None:
        raise ValueError("compute_advantages must run before actor_step")
    grad = _checked(actor_gradient(actor, traj, beta), max_grad_norm, "actor")
    return nn.apply_update(actor, grad, lr, state)


def critic_step(critic: NetParams, traj: Trajectory, lr: float,
                state: nn.RmsState | None = None, max_grad_norm: float = 0.0) -> NetParams:
    """One TD regression descent step over a rollout with targets filled."""
    if traj.targets is None:
        raise ValueError("compute_advantages must run before critic_step")
    grad = _checked(critic_gradient(critic, traj), max_grad_norm, "critic")
    return nn.apply_update(critic, grad, lr, state)


# --------------------------------------------------------------------------
# the full loop

@dataclass
class EpisodeStats:
    stage: int
    beta: float
    episode: int  # global index across stages
    mean_reward: float  # unscaled
    mean_aoi: float  # per job per sensor, ms
    violations_total: int

    CSV_HEADER = "stage,beta,episode,mean_reward,mean_aoi,violations_total"

    def csv_row(self) -> str:
        return (f"{self.stage},{self.beta!r},{self.episode},"
                f"{self.mean_reward!r},{self.mean_aoi!r},{self.violations_total}")


@dataclass
class TrainResult:
    actor: NetParams
    critic: NetParams
    scale: FeatureScale
    history: list[EpisodeStats]
    checkpoints: list[Path] = field(default_factory=list)


def write_history(path, history: list[EpisodeStats]) -> None:
    lines = [EpisodeStats.CSV_HEADER] + [s.csv_row() for s in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _mean_trace_rate(traces: list[Trace]) -> float:
    return float(np.mean([t.mean_rate for t in traces]))


class _Updater:
    """Single owner of the parameters; applies gradients in arrival order."""

    def __init__(self, cfg: TrainConfig, actor: NetParams, critic: NetParams):
        self.cfg = cfg
        self.actor = actor
        self.critic = critic
        self.actor_opt = nn.RmsState() if cfg.optimizer == "rmsprop" else None
        self.critic_opt = nn.RmsState() if cfg.optimizer == "rmsprop" else None
        self.lock = threading.Lock()

    def snapshot(self) -> tuple[NetParams, NetParams]:
        with self.lock:
            return self.actor.copy(), self.critic.copy()

    def apply(self, actor_grad: NetParams, critic_grad: NetParams) -> None:
        cap = self.cfg.max_grad_norm
        actor_grad = _checked(actor_grad, cap, "actor")
        critic_grad = _checked(critic_grad, cap, "critic")
        with self.lock:
            self.actor = nn.apply_update(self.actor, actor_grad,
                                         self.cfg.actor_lr, self.actor_opt)
            self.critic = nn.apply_update(self.critic, critic_grad,
                                          self.cfg.critic_lr, self.critic_opt)


def _run_episode(updater: _Updater, env_cfg: EnvConfig, traces: list[Trace],
                 cfg: TrainConfig, scale: FeatureScale, beta: float,
                 stage: int, episode: int) -> EpisodeStats:
    """One episode on a freshly chosen (trace, offset); updates after each rollout."""
    trace = traces[int(substream(cfg.seed, "episode-trace", stage, episode)
                       .integers(0, len(traces)))]
    offset = float(substream(cfg.seed, "episode-offset", stage, episode)
                   .random() * trace.duration)
    env = AoIEnv(env_cfg, trace,
                 seed=substream_int(cfg.seed, "episode-env", stage, episode),
                 start_offset=offset)
    action_rng = substream(cfg.seed, "episode-actions", stage, episode)

    reward_sum = 0.0
    age_sum = 0.0
    violations = 0
    jobs = 0
    while jobs < cfg.episode_len:
        length = min(cfg.rollout_len, cfg.episode_len - jobs)
        actor, critic = updater.snapshot()
        traj = rollout(env, actor, scale, length, action_rng, cfg.reward_scale)
        compute_advantages(traj, critic, cfg.gamma)
        updater.apply(actor_gradient(actor, traj, beta), critic_gradient(critic, traj))
        reward_sum += float(traj.raw_rewards.sum())
        age_sum += traj.age_sum
        violations += traj.violations
        jobs += length
    n = env_cfg.n_sensors
    return EpisodeStats(stage=stage, beta=beta, episode=episode,
                        mean_reward=reward_sum / jobs,
                        mean_aoi=age_sum / (jobs * n),
                        violations_total=violations)


def train(env_cfg: EnvConfig, traces: list[Trace], cfg: TrainConfig,
          out_dir=None, extra_meta: dict | None = None) -> TrainResult:
    """Run the full entropy schedule; returns the zero-weight stage's model.

    With workers == 1 the loop is sequential and bit-reproducible. With more
    workers, episodes run concurrently on parameter snapshots and gradients
    are applied serially in arrival order (schedule-dependent results).
    Checkpoints ckpt_stage{s}.json and learning_curve.csv land in out_dir.
    """
    if not traces:
        raise ValueError("need at least one trace")
    shape = NetShape(n_sensors=env_cfg.n_sensors, window=env_cfg.history_len,
                     filters=cfg.filters, kernel=cfg.kernel, hidden=cfg.hidden)
    scale = FeatureScale(age_scale=cfg.age_scale,
                         rate_scale=cfg.rate_scale or _mean_trace_rate(traces))
    updater = _Updater(cfg,
                       nn.init_params(shape, shape.n_sensors,
                                      substream_int(cfg.seed, "init", 0)),
                       nn.init_params(shape, 1, substream_int(cfg.seed, "init", 1)))
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    history: list[EpisodeStats] = []
    checkpoints: list[Path] = []
    episode = 0
    for stage, (beta, episodes) in enumerate(cfg.entropy_schedule):
        stage_episodes = range(episode, episode + episodes)
        episode += episodes
        try:
            if cfg.workers == 1:
                for ep in stage_episodes:
                    history.append(_run_episode(updater, env_cfg, traces, cfg,
                                                scale, beta, stage, ep))
            else:
                history.extend(_parallel_stage(updater, env_cfg, traces, cfg,
                                               scale, beta, stage, stage_episodes))
        except TrainingDiverged:
            if out_dir is not None:  # keep the last good stage's model on disk
                write_history(out_dir / "learning_curve.csv", history)
            raise
        log.info("stage %d (beta=%g) done: mean reward %.3f over last 10 episodes",
                 stage, beta, np.mean([s.mean_reward for s in history[-10:]]))
        if out_dir is not None:
            path = out_dir / f"ckpt_stage{stage}.json"
            meta = {"seed": cfg.seed, "entropy_stage": stage,
                    "age_scale": scale.age_scale, "rate_scale": scale.rate_scale,
                    **(extra_meta or {})}
            nn.save_checkpoint(path, updater.actor, updater.critic, meta)
            checkpoints.append(path)
    if out_dir is not None:
        write_history(out_dir / "learning_curve.csv", history)
    return TrainResult(actor=updater.actor, critic=updater.critic, scale=scale,
                       history=history, checkpoints=checkpoints)


def _parallel_stage(updater, env_cfg, traces, cfg, scale, beta, stage,
                    episodes) -> list[EpisodeStats]:
    """Fan episodes out to worker threads; stats return in episode order."""
    todo: queue.Queue = queue.Queue()
    for ep in episodes:
        todo.put(ep)
    results: dict[int, EpisodeStats] = {}
    errors: list[BaseException] = []
    res_lock = threading.Lock()

    def work():
        while True:
            try:
                ep = todo.get_nowait()
            except queue.Empty:
                return
            try:
                stats = _run_episode(updater, env_cfg, traces, cfg, scale,
                                     beta, stage, ep)
                with res_lock:
                    results[ep] = stats
            except BaseException as exc:  # surface worker failures to the caller
                with res_lock:
                    errors.append(exc)
                return

    threads = [threading.Thread(target=work) for _ in range(cfg.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return [results[ep] for ep in sorted(results)]
