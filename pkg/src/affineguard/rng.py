"""Counter-based SplitMix64 random stream.

Every stochastic stage in this package (dataset rendering, weight init,
shuffling, augmentation draws) pulls from this generator so that a run is a
pure function of its seeds. The stream is counter-based: output ``i`` for a
seed ``s`` is ``mix64(s + (i + 1) * GOLDEN_GAMMA)`` where ``mix64`` is the
SplitMix64 finalizer. That closed form makes blocks of outputs computable in
one vectorized pass, and independent substreams derivable from (seed, keys)
without sharing state.

Bit-exact definition (all arithmetic mod 2**64):

    GOLDEN_GAMMA = 0x9E3779B97F4A7C15
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
              z ^= z >> 27; z *= 0x94D049BB133111EB
              z ^= z >> 31; return z
    output(seed, i) = mix64(seed + (i + 1) * GOLDEN_GAMMA)

Derived quantities:

    uniform in [0, 1):  (output >> 11) * 2.0**-53
    normal(std):        one normal consumes two outputs u1, u2;
                        z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2) * std
    shuffle(n items):   Fisher-Yates, for i = n-1 .. 1 draw one uniform u,
                        j = floor(u * (i + 1)), swap items i and j
    derive_seed(s, k1, ..., kn): fold keys left to right with
                        s = mix64((s + GOLDEN_GAMMA) ^ k)
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

_U64_GAMMA = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_INV_2_53 = 2.0**-53


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a plain integer (mod 2**64)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent substream seed from (seed, keys).

    Folding is order-sensitive, so derive_seed(s, a, b) != derive_seed(s, b, a).
    """
    s = seed & MASK64
    for k in keys:
        s = mix64(((s + GOLDEN_GAMMA) & MASK64) ^ (k & MASK64))
    return s


def raw_block(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs offset+1 .. offset+count of the stream for ``seed`` as uint64."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(np.uint64(seed & MASK64) + idx * _U64_GAMMA)


class RandomStream:
    """Stateful view over the counter stream for one seed.

    All draws route through the vectorized block path, so interleaving
    scalar and batch draws of the same kinds consumes the counter
    identically and yields identical values.
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def _take(self, count: int) -> np.ndarray:
        block = raw_block(self.seed, count, self.counter)
        self.counter += count
        return block

    def uniforms(self, count: int) -> np.ndarray:
        """``count`` float64 values in [0, 1)."""
        return (self._take(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(low + (high - low) * self.uniforms(1)[0])

    def normals(self, count: int, std: float = 1.0) -> np.ndarray:
        """``count`` centered Gaussian draws via Box-Muller (two outputs each)."""
        raw = (self._take(2 * count) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        u1 = raw[0::2]
        u2 = raw[1::2]
        return np.sqrt(-2.0 * np.log(1.0 - u1)) * np.cos(2.0 * np.pi * u2) * std

    def randint(self, n: int) -> int:
        """Integer in [0, n) as floor(u * n)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return min(int(self.uniforms(1)[0] * n), n - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle; consumes len(items) - 1 uniforms."""
        n = len(items)
        if n < 2:
            return
        us = self.uniforms(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(us[step] * (i + 1)), i)
            items[i], items[j] = items[j], items[i]

    def child(self, *keys: int) -> "RandomStream":
        return RandomStream(derive_seed(self.seed, *keys))
