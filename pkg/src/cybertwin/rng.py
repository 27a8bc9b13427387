"""Counter-based, splittable random streams.

A stream is identified by a 64-bit key. Draw ``i`` of the stream is
``splitmix64_finalize(key + (i + 1) * 0x9E3779B97F4A7C15)`` (mod 2**64), so
any draw can be computed without the ones before it. Keys are derived from
``(seed, label)`` as ``finalize(seed ^ fnv1a64(utf8(label)))``; a child stream
of key ``k`` named ``label`` has key ``finalize(k ^ fnv1a64(utf8(label)))``.
Uniform floats take the top 53 bits: ``(u >> 11) * 2**-53``.

All arithmetic is on unsigned 64-bit words, so every platform and language
reproduces the same streams.
"""

import math

from . import kernels

MASK64 = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0


def derive_key(seed: int, label: str) -> int:
    return kernels.mix64((seed & MASK64) ^ kernels.fnv1a64(label.encode("utf-8")))


class Stream:
    """One reproducible random stream."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & MASK64
        self.counter = counter

    @classmethod
    def from_seed(cls, seed: int, label: str) -> "Stream":
        return cls(derive_key(seed, label))

    def split(self, label: str) -> "Stream":
        return Stream(kernels.mix64(self.key ^ kernels.fnv1a64(label.encode("utf-8"))))

    def next_u64(self) -> int:
        u = kernels.draw_u64(self.key, self.counter)
        self.counter += 1
        return u

    def random(self) -> float:
        """Uniform draw in [0, 1)."""
        u = kernels.draw_u64(self.key, self.counter)
        self.counter += 1
        return (u >> 11) * _INV53

    def uniforms(self, n: int) -> list:
        out = kernels.fill_uniform(self.key, self.counter, n)
        self.counter += n
        return out

    def uniform(self, a: float, b: float) -> float:
        return a + (b - a) * self.random()

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return min(int(self.random() * n), n - 1)

    def randint(self, a: int, b: int) -> int:
        """Integer in [a, b] inclusive."""
        return a + self.randbelow(b - a + 1)

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def expovariate(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate
