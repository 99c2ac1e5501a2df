"""Counter-based random numbers built on the SplitMix64 finaliser.

A stream is identified by a 64-bit key; its ``n``-th output is
``mix(key + (n + 1) * GAMMA)``, so any element can be evaluated directly from
``(key, n)`` with no state. Pixel streams are keyed by
``splitmix64(seed ^ hash(u, v))`` and therefore do not depend on iteration
order or thread scheduling.

All arithmetic is on ``numpy.uint64`` arrays and wraps modulo 2**64.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint64)


def mix64(z) -> np.ndarray:
    """SplitMix64 output function."""
    z = _u64(z)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def splitmix64(state) -> np.ndarray:
    """One SplitMix64 step from ``state``: ``mix(state + GAMMA)``."""
    with np.errstate(over="ignore"):
        return mix64(_u64(state) + GAMMA)


def pixel_key(seed: int, u, v) -> np.ndarray:
    """Stream key of pixel ``(u, v)`` under ``seed``."""
    u = _u64(np.asarray(u, dtype=np.int64).astype(np.uint64))
    v = _u64(np.asarray(v, dtype=np.int64).astype(np.uint64))
    coord_hash = mix64((u << _S32) | (v & np.uint64(0xFFFFFFFF)))
    return splitmix64(_u64(seed) ^ coord_hash)


def stream_bits(key, counter) -> np.ndarray:
    """The ``counter``-th 64-bit output of stream ``key`` (broadcasting)."""
    key = _u64(key)
    counter = _u64(counter)
    with np.errstate(over="ignore"):
        return mix64(key + (counter + np.uint64(1)) * GAMMA)


def stream_uniform(key, counter) -> np.ndarray:
    """Uniform double in ``[0, 1)`` from the top 53 bits of :func:`stream_bits`."""
    return (stream_bits(key, counter) >> _S11).astype(np.float64) * _INV53


def stream_index(key, counter, n) -> np.ndarray:
    """Integer in ``[0, n)``; ``n`` broadcasts against ``key``/``counter``."""
    u = stream_uniform(key, counter)
    return np.minimum(np.floor(u * n).astype(np.int64), np.asarray(n, dtype=np.int64) - 1)


def distinct_triple(key, base, n) -> np.ndarray:
    """Three distinct integers in ``[0, n)`` from counters ``base``, ``base + 1``, ``base + 2``.

    The second and third draws skip the values already taken, so no rejection
    loop is needed. Output shape is ``broadcast(key, base, n) + (3,)``.
    """
    base = _u64(base)
    n = np.asarray(n, dtype=np.int64)
    i0 = stream_index(key, base, n)
    i1 = stream_index(key, base + np.uint64(1), n - 1)
    i1 = i1 + (i1 >= i0)
    lo, hi = np.minimum(i0, i1), np.maximum(i0, i1)
    i2 = stream_index(key, base + np.uint64(2), n - 2)
    i2 = i2 + (i2 >= lo)
    i2 = i2 + (i2 >= hi)
    return np.stack([i0, i1, i2], axis=-1)
