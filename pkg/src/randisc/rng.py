"""Deterministic counter-based random streams.

Everything random in this package draws from SplitMix64 streams.  A stream's
state is one 64-bit counter advanced by the golden-ratio increment, so child
streams can be split off by hashing (key, index) pairs; per-row and per-trial
substreams are therefore reproducible regardless of evaluation order or
thread count.  Integer draws use rejection sampling, which makes every
discrete draw *exact*: a sample from rational weights (a_0, ..., a_k) hits
index i with probability exactly a_i / sum(a).
"""

from bisect import bisect_right
from itertools import accumulate
from math import lcm

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(key: int, *path: int) -> int:
    """Derive a child stream key from a master key and an index path."""
    h = key & MASK64
    for idx in path:
        h = mix64(h + _GOLDEN)
        h = mix64(h ^ (idx & MASK64))
    return h


class Stream:
    """SplitMix64 generator with exact integer helpers."""

    __slots__ = ("_state",)

    def __init__(self, key: int):
        self._state = key & MASK64

    def next64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return mix64(self._state)

    def bits(self, k: int) -> int:
        """Uniform integer on [0, 2**k)."""
        out = 0
        filled = 0
        while filled < k:
            out = (out << 64) | self.next64()
            filled += 64
        return out >> (filled - k)

    def below(self, n: int) -> int:
        """Uniform integer on [0, n), exact via rejection."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        if n == 1:
            return 0
        k = (n - 1).bit_length()
        while True:
            x = self.bits(k)
            if x < n:
                return x

    def bernoulli(self, p) -> bool:
        """Exact Bernoulli draw for a rational p in [0, 1]."""
        return self.below(p.denominator) < p.numerator

    def shuffle_prefix(self, n: int, w: int) -> list:
        """First w entries of a uniform permutation of range(n) (Fisher-Yates)."""
        arr = list(range(n))
        for i in range(w):
            j = i + self.below(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:w]


class IntegerTable:
    """Inversion sampler over nonnegative integer weights; draws are exact."""

    __slots__ = ("cum", "total")

    def __init__(self, weights):
        if not weights or any(v < 0 for v in weights):
            raise ValueError("weights must be nonempty and nonnegative")
        self.cum = list(accumulate(weights))
        self.total = self.cum[-1]
        if self.total <= 0:
            raise ValueError("total weight must be positive")

    def draw(self, stream: Stream) -> int:
        return bisect_right(self.cum, stream.below(self.total))


def table_from_fractions(fracs) -> IntegerTable:
    """Exact sampler for rational weights (scaled to a common denominator)."""
    den = lcm(*(f.denominator for f in fracs))
    return IntegerTable([f.numerator * (den // f.denominator) for f in fracs])
