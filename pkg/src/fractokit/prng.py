"""Portable deterministic PRNG used for fold shuffling.

Split assignments must reproduce bit-for-bit from a seed regardless of
platform or language, so this module pins the exact algorithms instead of
relying on a runtime's default generator:

* stream: splitmix64 (Steele, Lea & Flood 2014), 64-bit state, the
  finalizer constants below;
* integers in [0, n): rejection sampling on the top of the 64-bit range,
  then one modulo (no bias);
* shuffling: Fisher-Yates from the last index down, drawing j in [0, i].
"""

MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64 stream over a 64-bit state."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via unbiased rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]


def mix(seed: int, *salts: int) -> int:
    """Derive an independent stream seed from a base seed and salt values."""
    rng = SplitMix64(seed)
    out = rng.next_u64()
    for salt in salts:
        out = SplitMix64(out ^ (salt & MASK64)).next_u64()
    return out
