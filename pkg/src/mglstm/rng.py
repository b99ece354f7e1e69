"""Counter-based random streams.

Every random draw in the package comes from a Philox4x64-10 stream keyed by a
64-bit seed with the counter starting at zero. Raw 64-bit words are mapped to
the open unit interval as ``((w >> 11) + 0.5) * 2**-53`` and Gaussians are
produced by the Box-Muller transform on consecutive pairs ``(u1, u2)``::

    z[2k]   = sqrt(-2 ln u1) * cos(2 pi u2)
    z[2k+1] = sqrt(-2 ln u1) * sin(2 pi u2)

Philox is a published generator (Salmon et al., Random123) so the same streams
can be regenerated bit-for-bit outside Python.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts) -> int:
    """Hash arbitrary labels (global seed, stage name, sigma, ...) to a 64-bit seed."""
    text = "|".join(repr(p) if isinstance(p, float) else str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class CounterStream:
    """Sequential reader over a Philox4x64-10 stream."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._bitgen = np.random.Philox(key=self.seed, counter=0)

    def raw(self, n: int) -> np.ndarray:
        return self._bitgen.random_raw(int(n)).astype(np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles in the open interval (0, 1)."""
        words = self.raw(n)
        return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        n = int(n)
        n_pairs = (n + 1) // 2
        u = self.uniform(2 * n_pairs)
        u1, u2 = u[0::2], u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.empty(2 * n_pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]

    def integers(self, high: int, n: int) -> np.ndarray:
        """``n`` integers in ``[0, high)`` by flooring uniforms."""
        idx = np.floor(self.uniform(n) * high).astype(np.int64)
        return np.minimum(idx, high - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)`` driven by the stream."""
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
