import hashlib

import numpy as np
import pytest

from perfectq.rng import RngStream


class StubStream:
    """Feeds predetermined uniforms; falls back to a real stream when empty."""

    def __init__(self, values, fallback_seed=0):
        self.vals = list(values)
        self._fallback = RngStream(fallback_seed, 987654321)
        self.draws = 0
        self.seed = -1
        self.stream_id = -1

    def uniform(self):
        self.draws += 1
        if self.vals:
            return self.vals.pop(0)
        return self._fallback.uniform()

    def uniforms(self, n):
        return np.array([self.uniform() for _ in range(n)])

    def child(self, tag):
        return self._fallback.child(tag)


@pytest.fixture
def stream(request):
    # per-test sub-stream so statistical tests are decorrelated
    digest = hashlib.sha256(request.node.name.encode()).digest()
    return RngStream(20240801, int.from_bytes(digest[:8], "big"))


def fresh(seed, sid=0):
    return RngStream(seed, sid)
