"""Counter-based random streams.

Every stochastic draw in a run comes from a Philox generator keyed by
(run seed, purpose label, step), so results do not depend on how many
draws other components made before us.
"""
from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def label_hash(label: str) -> int:
    """FNV-1a over the UTF-8 bytes of `label` (Python's hash() is salted)."""
    h = _FNV_OFFSET
    for b in label.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _mix64(x: int) -> int:
    """splitmix64 finalizer: spreads structured inputs over 64 bits."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RunRng:
    """Factory for independent, reproducible streams within one run."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def stream(self, label: str, step: int = 0) -> np.random.Generator:
        sub = _mix64(label_hash(label) ^ _mix64(int(step) & _MASK64))
        key = np.array([self.seed, sub], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
