"""Counter-based random draws keyed by (seed, label, stream, counter).

Every draw is a pure function of its key, computed with the splitmix64
finaliser.  Particles therefore own independent, reproducible streams that
do not depend on how many other particles exist or in which order they are
processed.  Label keys are built digit by digit, so a child's key follows
from its parent's key and its own digit.
"""

from __future__ import annotations

import enum

import numpy as np

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_ROOT = 0x2545F4914F6CDD1D
_DIGIT = 0xD6E8FEB86659FD93


class Stream(enum.IntEnum):
    DIFFUSION = 1
    CLOCK = 2
    MARK = 3


def _mix_int(x: int) -> int:
    z = (x + _GOLDEN) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _mix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def seed_key(seed: int) -> int:
    return _mix_int(int(seed) & _M64)


def replicate_seed(seed: int, r: int) -> int:
    """Seed of replicate ``r`` in a batch; independent of batch size and order."""
    return _mix_int(_mix_int(int(seed) & _M64) ^ _mix_int((int(r) + 1) & _M64))


def label_key(label) -> int:
    h = _ROOT
    for digit in label:
        h = _mix_int(h ^ ((int(digit) + 1) * _DIGIT & _M64))
    return h


def child_keys(parent_keys: np.ndarray, digits: np.ndarray) -> np.ndarray:
    """Vectorised ``label_key(parent + (digit,))`` from the parent keys."""
    with np.errstate(over="ignore"):
        d = (np.asarray(digits, dtype=np.uint64) + np.uint64(1)) * np.uint64(_DIGIT)
    return _mix(np.asarray(parent_keys, dtype=np.uint64) ^ d)


def raw_bits(seed_keys, label_keys, stream: int, counters) -> np.ndarray:
    seed_keys = np.asarray(seed_keys, dtype=np.uint64)
    label_keys = np.asarray(label_keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(seed_keys ^ label_keys)
        skey = _mix(base ^ np.uint64(int(stream) * _DIGIT & _M64))
        return _mix(skey ^ _mix(counters))


def uniform(seed_keys, label_keys, stream: int, counters) -> np.ndarray:
    """Uniform draws on [0, 1) with 53 random bits."""
    bits = raw_bits(seed_keys, label_keys, stream, counters)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def normal(seed_keys, label_keys, stream: int, counters, width: int) -> np.ndarray:
    """``width`` standard normals per key, shape ``(n, width)`` (Box-Muller)."""
    counters = np.asarray(counters, dtype=np.uint64)
    n = counters.shape[0]
    sub = (counters[:, None] * np.uint64(width) + np.arange(width, dtype=np.uint64)[None, :]) * np.uint64(2)
    sk = np.broadcast_to(np.asarray(seed_keys, dtype=np.uint64).reshape(-1, 1), (n, width))
    lk = np.broadcast_to(np.asarray(label_keys, dtype=np.uint64).reshape(-1, 1), (n, width))
    u1 = uniform(sk, lk, stream, sub)
    u2 = uniform(sk, lk, stream, sub + np.uint64(1))
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)


def exponential(seed_keys, label_keys, stream: int, counters, rate: float) -> np.ndarray:
    n = np.asarray(counters).shape[0]
    if rate <= 0:
        return np.full(n, np.inf)
    u = uniform(seed_keys, label_keys, stream, counters)
    return -np.log1p(-u) / rate
