"""Platform-independent shuffling.

numpy's ``Generator`` methods are allowed to change their output between
releases, the raw PCG64 bit stream is not. Everything that decides dataset
membership goes through :class:`StableRandom`, which only consumes
``PCG64.random_raw`` and applies a fixed Fisher-Yates with rejection
sampling for unbiased bounded integers.
"""
import numpy as np

MASK64 = (1 << 64) - 1


class StableRandom:
    def __init__(self, seed):
        self._bits = np.random.PCG64(int(seed) & MASK64)

    def next_u64(self):
        return int(self._bits.random_raw())

    def below(self, n):
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        # reject the low partial bucket so every residue is equally likely
        threshold = ((1 << 64) - n) % n
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % n

    def shuffle(self, items):
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def derive_seed(seed, *salt):
    """Mix extra integers into a seed (SplitMix64 finalizer per component)."""
    z = int(seed) & MASK64
    for s in salt:
        z = (z + 0x9E3779B97F4A7C15 + (int(s) & MASK64)) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        z ^= z >> 31
    return z
