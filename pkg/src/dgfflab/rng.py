"""Reproducible random streams addressed by ``(seed, stream, replica)``.

Gaussian draws use numpy's counter-based Philox generator keyed through
``SeedSequence``; replicas are grouped in fixed-size blocks so a replica's
numbers never depend on how a batch was requested. Random-walk kernels run
under numba and use a SplitMix64 hash of ``(key, replica, counter)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["BLOCK", "block_rows", "philox", "block_normals", "walk_key", "mix64", "random_bits"]

BLOCK = 256
_BLOCK_DOUBLES = 1 << 22

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


def philox(seed, stream=0, block=0):
    """Independent Philox generator for one ``(seed, stream, block)`` triple."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_rows(dim):
    """Replicas per block for draws of dimension ``dim`` (at most ``BLOCK``, about 32 MB per block)."""
    return int(max(1, min(BLOCK, _BLOCK_DOUBLES // max(int(dim), 1))))


def block_normals(seed, stream, start, count, dim):
    """Standard normals of shape ``(count, dim)`` for replicas ``start .. start+count-1``.

    With ``k = block_rows(dim)``, replica ``i`` always receives row ``i % k``
    of block ``i // k``, so its numbers do not depend on how batches are cut.
    """
    k = block_rows(dim)
    out = np.empty((count, dim))
    i = start
    end = start + count
    while i < end:
        b = i // k
        lo = i - b * k
        hi = min(k, end - b * k)
        z = philox(seed, stream, b).standard_normal((hi, dim))
        out[i - start : i - start + hi - lo] = z[lo:hi]
        i = b * k + hi
    return out


def walk_key(seed, stream):
    """64-bit key for the walk kernels derived from ``(seed, stream)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), 0xA11C))
    return np.uint64(ss.generate_state(1, dtype=np.uint64)[0])


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def random_bits(key, replica, counter):
    """64 random bits at position ``counter`` of replica ``replica``'s stream."""
    base = mix64(key ^ mix64(np.uint64(replica) * _GOLDEN + _GOLDEN))
    return mix64(base + np.uint64(counter) * _GOLDEN)
