"""Counter-based splitmix64 generator with Box-Muller normals.

The stream is fully specified so datasets and initial weights are
bit-reproducible from a seed on any platform:

* state advances by the golden-ratio increment ``0x9E3779B97F4A7C15``;
  output ``k`` (0-based) is ``mix(seed + (k + 1) * GAMMA)``
* uniforms are ``(out >> 11) * 2**-53`` in ``[0, 1)``
* normals come in pairs from two consecutive uniforms ``u1, u2``:
  ``rad = sqrt(-2 ln(1 - u1))``, emitted as ``rad*cos(2 pi u2)`` then
  ``rad*sin(2 pi u2)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def splitmix64(x: int) -> int:
    """First output of a splitmix64 stream whose state starts at ``x``."""
    return mix64((x + GAMMA) & MASK64)


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class Rng:
    """splitmix64 stream. Vectorised draws consume outputs in order."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self, n: int | None = None):
        count = 1 if n is None else int(n)
        k = np.arange(self.counter + 1, self.counter + 1 + count, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = np.uint64(self.seed) + k * np.uint64(GAMMA)
            out = _mix64_vec(state)
        self.counter += count
        return int(out[0]) if n is None else out

    def uniform(self, n: int | None = None):
        out = self.next_u64(1 if n is None else n)
        u = (out >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return float(u[0]) if n is None else u

    def uniform_range(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, lo: int, hi: int) -> int:
        """Integer in ``[lo, hi]`` inclusive."""
        span = hi - lo + 1
        return lo + min(int(self.uniform() * span), span - 1)

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1, u2 = u[0::2], u[1::2]
        rad = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = rad * np.cos(theta)
        z[1::2] = rad * np.sin(theta)
        return z[:n]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by this stream."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(0, i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
