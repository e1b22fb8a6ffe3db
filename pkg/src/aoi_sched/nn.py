"""Fixed-topology policy/value networks with analytic gradients.

The actor and the critic share one topology and differ only in the head:
a width-4 1D convolution (128 filters, stride 1) over the recent-throughput
window, whose rectified output is concatenated with the scaled ages and last
service time, a 128-unit rectified hidden layer, and an output layer that is
a softmax over sensors (actor) or a single linear unit (critic). Parameters
are plain float64 numpy arrays; all passes are single-observation.

Everything here is deterministic: forward passes and gradients are pure
functions of (params, features), initialization is a pure function of the
seed, and updates are plain first-order steps with an optional RMS-scaled
mode.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .env import Observation
from .rng import substream


@dataclass(frozen=True)
class NetShape:
    n_sensors: int
    window: int
    filters: int = 128
    kernel: int = 4
    hidden: int = 128

    def __post_init__(self):
        if self.n_sensors < 1 or self.filters < 1 or self.hidden < 1:
            raise ValueError("n_sensors, filters and hidden must be >= 1")
        if self.kernel < 1 or self.window < self.kernel:
            raise ValueError("need window >= kernel >= 1")

    @property
    def conv_positions(self) -> int:
        return self.window - self.kernel + 1

    @property
    def dense_in(self) -> int:
        return self.conv_positions * self.filters + self.n_sensors + 1


def count_params(shape: NetShape, head_dim: int) -> int:
    """Closed-form parameter count for one network."""
    conv = shape.filters * shape.kernel + shape.filters
    hidden = shape.hidden * shape.dense_in + shape.hidden
    head = head_dim * shape.hidden + head_dim
    return conv + hidden + head


@dataclass
class NetParams:
    """All learnable weights of one network; also reused as gradient storage."""

    shape: NetShape
    head_dim: int
    conv_w: np.ndarray  # (filters, kernel)
    conv_b: np.ndarray  # (filters,)
    hid_w: np.ndarray  # (hidden, dense_in)
    hid_b: np.ndarray  # (hidden,)
    out_w: np.ndarray  # (head_dim, hidden)
    out_b: np.ndarray  # (head_dim,)

    FIELDS = ("conv_w", "conv_b", "hid_w", "hid_b", "out_w", "out_b")

    def arrays(self):
        return [(name, getattr(self, name)) for name in self.FIELDS]

    @property
    def n_params(self) -> int:
        return sum(a.size for _, a in self.arrays())

    def copy(self) -> "NetParams":
        return replace(self, **{name: a.copy() for name, a in self.arrays()})

    def check_congruent(self, other: "NetParams") -> None:
        if self.shape != other.shape or self.head_dim != other.head_dim:
            raise ValueError("parameter sets have different shapes")

    def check_finite(self) -> None:
        for name, a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite values in {name}")


def zeros_like_params(params: NetParams) -> NetParams:
    return replace(params, **{name: np.zeros_like(a) for name, a in params.arrays()})


def init_params(shape: NetShape, head_dim: int, seed: int) -> NetParams:
    """Uniform fan-scaled weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = substream(seed, "init")

    def uniform(out_dim, in_dim):
        bound = math.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-bound, bound, size=(out_dim, in_dim))

    return NetParams(
        shape=shape,
        head_dim=head_dim,
        conv_w=uniform(shape.filters, shape.kernel),
        conv_b=np.zeros(shape.filters),
        hid_w=uniform(shape.hidden, shape.dense_in),
        hid_b=np.zeros(shape.hidden),
        out_w=uniform(head_dim, shape.hidden),
        out_b=np.zeros(head_dim),
    )


# --------------------------------------------------------------------------
# featurization

@dataclass(frozen=True)
class FeatureScale:
    """Input normalization: times in units of age_scale ms, rates of rate_scale."""

    age_scale: float = 100.0
    rate_scale: float = 1.0

    def __post_init__(self):
        if self.age_scale <= 0 or self.rate_scale <= 0:
            raise ValueError("scales must be positive")


@dataclass(frozen=True)
class Features:
    conv_in: np.ndarray  # (window,) scaled throughput, oldest first
    extra: np.ndarray  # (n_sensors + 1,) scaled ages then last service time


def featurize(obs: Observation, scale: FeatureScale) -> Features:
    """Scale and arrange an observation for the two network input paths."""
    ages = np.asarray(obs.ages, dtype=np.float64)
    window = np.asarray(obs.recent_throughput, dtype=np.float64)
    if ages.ndim != 1 or window.ndim != 1:
        raise ValueError("observation fields must be 1-d")
    conv_in = window / scale.rate_scale
    extra = np.concatenate([ages, [obs.last_service_time]]) / scale.age_scale
    if not (np.all(np.isfinite(conv_in)) and np.all(np.isfinite(extra))):
        raise FloatingPointError("non-finite observation")
    return Features(conv_in=conv_in, extra=extra)


# --------------------------------------------------------------------------
# forward / backward

class _Cache:
    __slots__ = ("windows", "z_conv", "x", "z1", "h1", "logits")


def _forward(params: NetParams, feats: Features) -> _Cache:
    shape = params.shape
    if feats.conv_in.size != shape.window or feats.extra.size != shape.n_sensors + 1:
        raise ValueError(
            f"feature sizes ({feats.conv_in.size}, {feats.extra.size}) do not match "
            f"network shape (window={shape.window}, n_sensors={shape.n_sensors})")
    c = _Cache()
    c.windows = np.lib.stride_tricks.sliding_window_view(feats.conv_in, shape.kernel)
    c.z_conv = c.windows @ params.conv_w.T + params.conv_b  # (positions, filters)
    h_conv = np.maximum(c.z_conv, 0.0)
    c.x = np.concatenate([h_conv.ravel(), feats.extra])
    c.z1 = params.hid_w @ c.x + params.hid_b
    c.h1 = np.maximum(c.z1, 0.0)
    c.logits = params.out_w @ c.h1 + params.out_b
    if not np.all(np.isfinite(c.logits)):
        raise FloatingPointError("non-finite network output")
    return c


def _backward(params: NetParams, feats: Features, c: _Cache,
              d_logits: np.ndarray) -> NetParams:
    shape = params.shape
    d_h1 = params.out_w.T @ d_logits
    d_z1 = d_h1 * (c.z1 > 0)
    d_x = params.hid_w.T @ d_z1
    split = shape.conv_positions * shape.filters
    d_z_conv = d_x[:split].reshape(shape.conv_positions, shape.filters) * (c.z_conv > 0)
    return NetParams(
        shape=shape,
        head_dim=params.head_dim,
        conv_w=d_z_conv.T @ c.windows,
        conv_b=d_z_conv.sum(axis=0),
        hid_w=np.outer(d_z1, c.x),
        hid_b=d_z1,
        out_w=np.outer(d_logits, c.h1),
        out_b=d_logits.copy(),
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def forward_actor(params: NetParams, feats: Features) -> np.ndarray:
    """Action probabilities over the N sensors; strictly positive, sums to 1."""
    if params.head_dim != params.shape.n_sensors:
        raise ValueError("actor head must have one output per sensor")
    return _softmax(_forward(params, feats).logits)


def forward_critic(params: NetParams, feats: Features) -> float:
    """State-value estimate (linear scalar head)."""
    if params.head_dim != 1:
        raise ValueError("critic head must be a single unit")
    return float(_forward(params, feats).logits[0])


def grad_log_prob(params: NetParams, feats: Features, action: int) -> NetParams:
    """Gradient of log pi(action | feats) with respect to the actor weights."""
    if not 0 <= action < params.shape.n_sensors:
        raise ValueError(f"action {action} out of range")
    c = _forward(params, feats)
    probs = _softmax(c.logits)
    d_logits = -probs
    d_logits[action] += 1.0
    return _backward(params, feats, c, d_logits)


def entropy(probs: np.ndarray) -> float:
    probs = np.asarray(probs)
    return float(-(probs * np.log(probs)).sum())


def grad_entropy(params: NetParams, feats: Features) -> NetParams:
    """Gradient of the policy entropy H(pi(feats)) with respect to the actor."""
    c = _forward(params, feats)
    probs = _softmax(c.logits)
    log_probs = np.log(probs)
    h = -(probs * log_probs).sum()
    d_logits = -probs * (log_probs + h)
    return _backward(params, feats, c, d_logits)


def grad_value_sq_err(params: NetParams, feats: Features, target: float) -> NetParams:
    """Gradient of (target - V(feats))^2 with respect to the critic weights."""
    if not math.isfinite(target):
        raise ValueError("target must be finite")
    c = _forward(params, feats)
    d_logits = np.array([-2.0 * (target - c.logits[0])])
    return _backward(params, feats, c, d_logits)


# --------------------------------------------------------------------------
# updates

@dataclass
class RmsState:
    """Accumulated squared-gradient scaling for the RMS-scaled update mode."""

    decay: float = 0.99
    epsilon: float = 1e-6
    mean_sq: NetParams | None = field(default=None, repr=False)


def apply_update(params: NetParams, grad: NetParams, lr: float,
                 state: RmsState | None = None) -> NetParams:
    """One first-order step new = old + lr * g.

    Plain mode (state=None) adds lr*grad exactly. With an RmsState the
    per-parameter step is lr * g / sqrt(E[g^2] + eps); the state accumulators
    are updated in place. Callers choose ascent or descent by the sign of
    the gradient they pass.
    """
    params.check_congruent(grad)
    if state is None:
        updates = {name: a + lr * g for (name, a), (_, g)
                   in zip(params.arrays(), grad.arrays())}
        return replace(params, **updates)
    if state.mean_sq is None:
        state.mean_sq = zeros_like_params(params)
    updates = {}
    for (name, a), (_, g) in zip(params.arrays(), grad.arrays()):
        ms = getattr(state.mean_sq, name)
        ms *= state.decay
        ms += (1.0 - state.decay) * g * g
        updates[name] = a + lr * g / np.sqrt(ms + state.epsilon)
    return replace(params, **updates)


def scale_grad(grad: NetParams, factor: float) -> NetParams:
    return replace(grad, **{name: a * factor for name, a in grad.arrays()})


def add_grads(total: NetParams, grad: NetParams, factor: float = 1.0) -> None:
    """In-place total += factor * grad (accumulator helper)."""
    total.check_congruent(grad)
    for (_, t), (_, g) in zip(total.arrays(), grad.arrays()):
        t += factor * g


def grad_norm(grad: NetParams) -> float:
    return math.sqrt(sum(float((a * a).sum()) for _, a in grad.arrays()))


def clip_grad(grad: NetParams, max_norm: float) -> NetParams:
    """Scale the gradient down to max_norm if it exceeds it (global L2)."""
    norm = grad_norm(grad)
    if norm <= max_norm or norm == 0.0:
        return grad
    return scale_grad(grad, max_norm / norm)


# --------------------------------------------------------------------------
# checkpoints

def config_hash(payload: dict) -> str:
    """Stable hash of a JSON-serializable config fragment."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def save_checkpoint(path, actor: NetParams, critic: NetParams, meta: dict) -> None:
    """Write both networks plus metadata as JSON; floats round-trip exactly."""
    shape = actor.shape
    doc = {
        "meta": {
            "n_sensors": shape.n_sensors,
            "window": shape.window,
            "filters": shape.filters,
            "kernel": shape.kernel,
            "hidden": shape.hidden,
            **meta,
        },
        "actor": {name: a.tolist() for name, a in actor.arrays()},
        "critic": {name: a.tolist() for name, a in critic.arrays()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _expected_shapes(shape: NetShape, head_dim: int) -> dict:
    return {
        "conv_w": (shape.filters, shape.kernel),
        "conv_b": (shape.filters,),
        "hid_w": (shape.hidden, shape.dense_in),
        "hid_b": (shape.hidden,),
        "out_w": (head_dim, shape.hidden),
        "out_b": (head_dim,),
    }


def _params_from_doc(shape: NetShape, head_dim: int, arrays: dict) -> NetParams:
    params = NetParams(shape=shape, head_dim=head_dim,
                       **{name: np.array(arrays[name], dtype=np.float64)
                          for name in NetParams.FIELDS})
    for name, want in _expected_shapes(shape, head_dim).items():
        got = getattr(params, name).shape
        if got != want:
            raise ValueError(f"checkpoint array {name} has shape {got}, expected {want}")
    params.check_finite()
    return params


def load_checkpoint(path) -> tuple[NetParams, NetParams, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    meta = doc["meta"]
    shape = NetShape(n_sensors=meta["n_sensors"], window=meta["window"],
                     filters=meta["filters"], kernel=meta["kernel"],
                     hidden=meta["hidden"])
    actor = _params_from_doc(shape, shape.n_sensors, doc["actor"])
    critic = _params_from_doc(shape, 1, doc["critic"])
    return actor, critic, meta
