"""Reproducible, independently seedable uniform random streams.

Streams are counter-based (Philox) and keyed by (seed, stream_id), so a
replication grid maps onto stream ids without any coordination between
workers, and replaying a run is bit-exact.  Uniform draws are strictly
inside (0, 1) so downstream inversion formulas never see log(0).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(*values: int) -> int:
    """Deterministic 64-bit mix of integers (splitmix64 chain).

    Used to derive child stream ids, e.g. one sub-stream per route of a
    loss network, from a parent id and a tag.
    """
    h = 0x9E3779B97F4A7C15
    for v in values:
        h = (h ^ (v & _MASK64)) * 0xBF58476D1CE4E5B9 & _MASK64
        h = (h ^ (h >> 27)) * 0x94D049BB133111EB & _MASK64
        h = h ^ (h >> 31)
    return h


class RngStream:
    """One logical stream of uniforms, owned by a single task at a time."""

    __slots__ = ("seed", "stream_id", "_gen", "draws")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64],
                       dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.draws = 0

    def uniform(self) -> float:
        """One uniform in the open interval (0, 1)."""
        self.draws += 1
        u = self._gen.random()
        while u == 0.0:
            u = self._gen.random()
        return u

    def uniforms(self, n: int) -> np.ndarray:
        """Vector of n uniforms in (0, 1)."""
        self.draws += n
        u = self._gen.random(n)
        zero = u == 0.0
        while zero.any():
            u[zero] = self._gen.random(int(zero.sum()))
            zero = u == 0.0
        return u

    def child(self, tag: int) -> "RngStream":
        """Independent stream derived deterministically from this one."""
        return RngStream(self.seed, mix64(self.stream_id, tag))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def experiment_stream(seed: int, *tags: int) -> RngStream:
    """Stream for replication r of experiment e: id = mix64(e, r, ...)."""
    return RngStream(seed, mix64(*tags) if tags else 0)
