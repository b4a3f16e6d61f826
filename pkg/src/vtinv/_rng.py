"""Self-contained deterministic PRNG used everywhere randomness is needed.

All stochastic behavior in this package (corpus splitting, weight init,
epoch shuffling, synthetic corpus generation) runs off xoshiro256++ seeded
through splitmix64. Both are pure 64-bit integer algorithms, so a given seed
produces the identical stream on every platform and Python/numpy version.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# splitmix64 constants (Steele, Lea, Flood 2014)
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MIX1 = 0xBF58476D1CE4E5B9
_SM_MIX2 = 0x94D049BB133111EB


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state once; returns (new_state, output)."""
    state = (state + _SM_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SM_MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _SM_MIX2) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Derive an independent 64-bit seed from a base seed and integer tags.

    Used to split one user-facing seed into decoupled streams (split vs.
    init vs. shuffle vs. per-sequence synthesis) without stream overlap.
    """
    state = seed & _MASK64
    for tag in tags:
        state, out = splitmix64_next(state ^ (tag & _MASK64))
        state = out
    state, out = splitmix64_next(state)
    return out


class Xoshiro256pp:
    """xoshiro256++ 1.0 (Blackman & Vigna), seeded via splitmix64.

    Scalar generation is a Python-level loop; batch helpers exist for the
    few hot paths (weight init, synthetic audio noise).
    """

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state, out = splitmix64_next(state)
            s.append(out)
        self._s = s

    @classmethod
    def from_state(cls, s0: int, s1: int, s2: int, s3: int) -> "Xoshiro256pp":
        rng = cls.__new__(cls)
        rng._s = [s0 & _MASK64, s1 & _MASK64, s2 & _MASK64, s3 & _MASK64]
        return rng

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        x = (s0 + s3) & _MASK64
        result = (((x << 23) | (x >> 41)) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0 & _MASK64, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle, descending index order."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def _u64_batch(self, n: int) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        out = np.empty(n, dtype=np.uint64)
        for i in range(n):
            x = (s0 + s3) & _MASK64
            out[i] = (((x << 23) | (x >> 41)) + s0) & _MASK64
            t = (s1 << 17) & _MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s0 &= _MASK64
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s = [s0, s1, s2, s3]
        return out

    def uniforms(self, n: int) -> np.ndarray:
        """n uniform doubles in [0, 1)."""
        bits = self._u64_batch(n)
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def uniform_matrix(self, lo: float, hi: float, shape: tuple[int, ...]) -> np.ndarray:
        size = int(np.prod(shape))
        return (lo + (hi - lo) * self.uniforms(size)).reshape(shape)

    def normals(self, n: int) -> np.ndarray:
        """n standard normal doubles via Box-Muller on batched uniforms."""
        m = (n + 1) // 2
        u1 = (self._u64_batch(m) >> np.uint64(11)).astype(np.float64)
        u2 = (self._u64_batch(m) >> np.uint64(11)).astype(np.float64)
        # map to (0, 1] so the log never sees zero
        u1 = (u1 + 1.0) * 2.0 ** -53
        u2 = (u2 + 1.0) * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n]
