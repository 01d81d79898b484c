"""Counter-based random numbers.

A draw is a pure function of ``(seed, step, index, lane)``: the key is hashed
through chained SplitMix64 finalisers and the top 53 bits become a double in
[0, 1). No generator state exists, so components of a parallel update can be
drawn in any order, on any thread, with identical results.
"""

from __future__ import annotations

import numba as nb
import numpy as np

__all__ = ["uniform", "uniforms", "StreamKey"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANE = np.uint64(0xD6E8FEB86659FD93)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, nogil=True)
def uniform(seed, step, index, lane):
    """Uniform double in [0, 1) keyed by ``(seed, step, index, lane)``."""
    z = _mix(np.uint64(seed) + _GOLDEN)
    z = _mix(z ^ (np.uint64(step) * _GOLDEN))
    z = _mix(z ^ (np.uint64(index) * _M2 + np.uint64(lane) * _LANE))
    return np.float64(_mix(z) >> _S11) * _INV53


@nb.njit(cache=True, nogil=True)
def uniforms(seed, step, indices, lane):
    out = np.empty(indices.size)
    for j in range(indices.size):
        out[j] = uniform(seed, step, indices[j], lane)
    return out


class StreamKey:
    """Seed plus step counter; the per-step context handed to the samplers."""

    __slots__ = ("seed", "step")

    def __init__(self, seed: int, step: int = 0):
        if seed < 0 or step < 0:
            raise ValueError("seed and step must be non-negative")
        self.seed = int(seed)
        self.step = int(step)

    def next(self) -> "StreamKey":
        return StreamKey(self.seed, self.step + 1)

    def __repr__(self):
        return f"StreamKey(seed={self.seed}, step={self.step})"
