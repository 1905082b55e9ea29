"""xoshiro256** with splitmix64 seeding.

Pure Python so generated fixtures are identical on every platform and can be
reproduced bit-for-bit from another language. Reference constants follow
Blackman & Vigna's published C code.
"""

from __future__ import annotations

import math

_MASK = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    def __init__(self, seed: int) -> None:
        sm = seed & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self.s = s

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi) by rejection (no modulo bias)."""
        span = hi - lo
        if span <= 0:
            raise ValueError("empty integer range")
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            x = self.next_u64()
            if x < limit:
                return lo + x % span

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        """Box-Muller, one draw per call (two uniforms consumed)."""
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def truncated_normal(self, mean: float, std: float, lo: float, hi: float) -> float:
        """Rejection-sampled normal on [lo, hi]; falls back to clipping after 64 tries."""
        if std == 0.0:
            return min(max(mean, lo), hi)
        for _ in range(64):
            x = self.normal(mean, std)
            if lo <= x <= hi:
                return x
        return min(max(mean, lo), hi)

    def spawn(self, key: int) -> Xoshiro256:
        """Independent child stream derived from the next output and ``key``."""
        return Xoshiro256(self.next_u64() ^ ((key * 0x9E3779B97F4A7C15) & _MASK))
