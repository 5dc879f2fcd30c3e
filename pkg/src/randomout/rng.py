"""Seeded counter-based random streams and Xavier weight initialization.

Every stream is a Philox4x64-10 generator keyed by (seed, purpose, index),
so any draw is a pure function of those three values and is reproducible
across runs and platforms. Purposes partition the key space: weight init,
batch shuffling, filter resets, dataset synthesis, and dataset splitting
each consume their own stream, so enabling one consumer (e.g. filter
resets) never shifts another stream's draws.

Key layout: key[0] = seed, key[1] = (purpose_code << 32) | index.
"""

import math

import numpy as np

from .tensor import DTYPE, check_shape

STREAM_PURPOSES = {
    "init": 0,
    "data_order": 1,
    "randomout": 2,
    "data_synth": 3,
    "data_split": 4,
}


def derive_stream(seed, purpose, index=0):
    """Independent Philox stream for (seed, purpose, index)."""
    if purpose not in STREAM_PURPOSES:
        raise ValueError(f"unknown stream purpose {purpose!r}; expected one of {sorted(STREAM_PURPOSES)}")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned int, got {seed}")
    if not 0 <= index < 2**32:
        raise ValueError(f"stream index must fit in 32 bits, got {index}")
    code = STREAM_PURPOSES[purpose]
    key = np.array([seed, (code << 32) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def xavier_bound(fan_in, fan_out):
    """Half-width of the Xavier uniform support: sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"fans must be >= 1, got fan_in={fan_in}, fan_out={fan_out}")
    return math.sqrt(6.0 / (fan_in + fan_out))


def xavier_init(shape, fan_in, fan_out, rng):
    """I.i.d. uniform draws on [-b, b] with b = sqrt(6/(fan_in+fan_out))."""
    b = xavier_bound(fan_in, fan_out)
    return rng.uniform(-b, b, size=check_shape(shape)).astype(DTYPE, copy=False)
