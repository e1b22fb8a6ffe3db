"""Purpose-keyed random streams derived from a single top-level seed.

Every random consumer in the package gets its own generator via
``substream(seed, *keys)``, where the keys name the purpose (e.g.
``substream(7, "drops")`` or ``substream(7, "episode-actions", stage, ep)``).
Streams depend only on (seed, keys), never on draw order elsewhere, so adding
a new consumer never perturbs existing ones.

Key registry (keep in sync when adding consumers):
    ("drops",)                          env retransmission coin flips
    ("trace-gen", index)                synthetic trace generators
    ("init", name)                      network weight initialization
    ("episode-trace", stage, ep)        trainer: trace choice per episode
    ("episode-offset", stage, ep)       trainer: playback offset per episode
    ("episode-env", stage, ep)          trainer: env drop seed per episode
    ("episode-actions", stage, ep)      trainer: action sampling per episode
    ("eval-trace-offset", episode)      evaluator: playback offset
    ("eval-env", episode)               evaluator: env drop seed
    ("eval-actions",)                   evaluator: scheduler sampling
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_word(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    raise TypeError(f"substream keys must be int or str, got {type(key).__name__}")


def substream_seed(seed: int, *keys) -> np.random.SeedSequence:
    """Seed sequence for the (seed, keys) stream."""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_word(k) for k in keys))


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for the named purpose under the given seed."""
    return np.random.default_rng(substream_seed(seed, *keys))


def substream_int(seed: int, *keys) -> int:
    """Derived 63-bit integer, for APIs that take a seed rather than a stream."""
    return int(substream(seed, *keys).integers(0, 2**63))
