"""Coalescence detection and the perfect samplers for a single station.

The dominating infinite-server system is simulated backwards in time over
ever-deeper certified windows.  A coalescence time is a departure epoch tau
with (1) every customer present at tau gone by T = tau + R(tau) < 0, and
(2) the infinite-server occupancy staying within the loss capacity on
[tau, T].  At T the loss system provably holds exactly the same customers,
so replaying the loss dynamics forward over (T, 0] with the same customer
stream yields an unbiased draw of the loss system's time-zero state.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arrivals import ArrivalProcess, WalkParams
from .distributions import Deterministic, Distribution, TiltContext, make_tilt_context
from .errors import BlockBudgetExceeded, NoRoot
from .rng import RngStream
from .service import ServiceProcess
from .state import EventTimeline, SystemState, state_at


@dataclass
class StationModel:
    """A GI/GI/C/C station (C = inf gives the infinite-server system)."""

    interarrival: Distribution      # base (unscaled) law
    service: Distribution
    capacity: float = math.inf      # servers; arrivals finding all busy are lost
    scale: int = 1                  # arrival speed-up: interarrivals become X/s
    epsilon: float | None = None    # drift margin, scaled units; default mu/5
    m: float | None = None          # barrier width, scaled units; default mu
    max_blocks: int = 10 ** 4

    def validate(self) -> list[str]:
        errors = []
        if not (self.capacity == math.inf or
                (float(self.capacity).is_integer() and self.capacity >= 1)):
            errors.append("capacity must be a positive integer or inf")
        if self.scale < 1 or not float(self.scale).is_integer():
            errors.append("scale must be a positive integer")
        if isinstance(self.interarrival, Deterministic):
            errors.append("deterministic interarrivals admit no tilt root "
                          "(NoRoot); choose a family with positive variance")
        mu = self.interarrival.scaled(self.scale).mean()
        if self.epsilon is not None and not (0.0 < self.epsilon < mu):
            errors.append(f"epsilon must lie in (0, {mu:g})")
        if self.m is not None and self.m <= 0.0:
            errors.append("m must be positive")
        return errors

    def tilt_context(self) -> TiltContext:
        errs = self.validate()
        if errs:
            if any("NoRoot" in e for e in errs):
                raise NoRoot("; ".join(errs))
            _raise_config(errs)
        return make_tilt_context(self.interarrival.scaled(self.scale), self.epsilon)

    def walk_params(self, ctx: TiltContext | None = None) -> WalkParams:
        ctx = ctx or self.tilt_context()
        return WalkParams(tilt=ctx, m=self.m if self.m is not None else ctx.mu)


def _raise_config(errs):
    from .errors import ConfigError
    raise ConfigError("; ".join(errs))


@dataclass
class PerfectSample:
    """Unbiased time-zero state plus run diagnostics."""

    state: SystemState
    kappa: int
    tau: float | None
    T: float | None
    customers: int
    blocks_used: int
    rejections: int
    wall_ms: float
    seed: int
    stream_id: int

    def to_record(self, include_timing: bool = False) -> dict:
        rec = {"seed": self.seed, "stream_id": self.stream_id}
        rec.update(self.state.to_record())
        rec.update({"kappa": self.kappa, "tau": self.tau, "T": self.T,
                    "customers": self.customers, "blocks": self.blocks_used,
                    "rejections": self.rejections,
                    "wall_ms": self.wall_ms if include_timing else None})
        return rec


def detect_coalescence(timeline: EventTimeline, capacity: float):
    """First valid (tau, T) scanning departure epochs nearest zero first."""
    for tau in timeline.departure_epochs[::-1]:
        tau = float(tau)
        if tau < timeline.t_lo:
            continue
        r = timeline.max_remaining_at(tau)
        T = tau + r
        if T >= 0.0:            # condition 1: R(tau) < |tau|
            continue
        if timeline.sup_occupancy(tau, T) <= capacity:
            return tau, T
    return None


def replay_loss_forward(arrivals: np.ndarray, services: np.ndarray,
                        T: float, capacity: float) -> SystemState:
    """Loss-system state at 0, starting from the coalesced state at T.

    The state at T is the infinite-server state (the systems coincide
    there); arrivals in (T, 0] are admitted iff the loss occupancy is
    strictly below capacity, otherwise dropped.
    """
    arrivals = np.asarray(arrivals, dtype=float)
    services = np.asarray(services, dtype=float)
    departures = arrivals + services
    active = (arrivals <= T) & (departures > T)
    busy = sorted(departures[active].tolist())   # departure heap
    order = np.argsort(arrivals, kind="stable")
    in_win = [(float(arrivals[i]), float(departures[i]))
              for i in order if T < arrivals[i] <= 0.0]
    for t, dep in in_win:
        while busy and busy[0] <= t:
            heapq.heappop(busy)
        if len(busy) < capacity:
            heapq.heappush(busy, dep)
    remaining = np.sort([d for d in busy if d > 0.0])
    last_arrival = arrivals.max()
    return SystemState(elapsed_age=float(-last_arrival), remaining=remaining)


class _StationRun:
    """Shared backward-simulation state for the station samplers."""

    def __init__(self, model: StationModel, stream: RngStream):
        self.model = model
        self.stream = stream
        ctx = model.tilt_context()
        self.params = model.walk_params(ctx)
        self.service = ServiceProcess(model.service, ctx.slope, stream)
        self.arrivals = ArrivalProcess(self.params, self.service, stream)
        self.kappas: list[int] = []

    def extend(self) -> int:
        kappa = self.arrivals.extend_block()
        self.kappas.append(kappa)
        return kappa

    def points(self, kappa: int):
        mags = self.arrivals.snapshot().arrival_magnitudes(kappa)
        return -mags, self.service.values_array(kappa)

    def rejections(self) -> int:
        c = self.params.counters
        return int(c["down_rejects"] + c["race_rejects"] + c["bridge_rejects"])


def perfect_sample_infinite(model: StationModel, stream: RngStream) -> PerfectSample:
    """Unbiased draw of the stationary GI/GI/infinity state at time zero."""
    t0 = time.perf_counter()
    run = _StationRun(model, stream)
    kappa = run.extend()
    A, V = run.points(kappa)
    st = state_at(A, V, 0.0, certified_from=float(A[0]))
    return PerfectSample(state=st, kappa=kappa, tau=None, T=None,
                         customers=kappa, blocks_used=1,
                         rejections=run.rejections(),
                         wall_ms=1e3 * (time.perf_counter() - t0),
                         seed=stream.seed, stream_id=stream.stream_id)


def perfect_sample_loss(model: StationModel, stream: RngStream) -> PerfectSample:
    """Unbiased draw of the stationary GI/GI/C/C state at time zero."""
    if model.capacity == math.inf:
        return perfect_sample_infinite(model, stream)
    t0 = time.perf_counter()
    run = _StationRun(model, stream)
    prev_kappa = 1
    for _ in range(model.max_blocks):
        kappa = run.extend()
        A, V = run.points(kappa)
        window_lo = float(A[prev_kappa - 1])
        timeline = EventTimeline(A, V, t_lo=window_lo)
        hit = detect_coalescence(timeline, model.capacity)
        if hit is not None:
            tau, T = hit
            st = replay_loss_forward(A, V, T, model.capacity)
            return PerfectSample(state=st, kappa=kappa, tau=tau, T=T,
                                 customers=kappa,
                                 blocks_used=len(run.kappas),
                                 rejections=run.rejections(),
                                 wall_ms=1e3 * (time.perf_counter() - t0),
                                 seed=stream.seed, stream_id=stream.stream_id)
        prev_kappa = kappa
    raise BlockBudgetExceeded(
        f"no coalescence within {model.max_blocks} blocks "
        f"(kappa reached {run.kappas[-1] if run.kappas else 0})")
