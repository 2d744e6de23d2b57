"""Perfect sampling for generalized loss networks.

L route classes over J stations: a class-l customer holds one server at
every station j with P_l(j) = 1 for its whole service time and is lost if
any of those stations is full on arrival.  Each route class gets an
independent backward infinite-server simulation on its own sub-stream;
the dominating network is their superposition.  Network coalescence
requires every station to be within capacity over [tau', tau' + R(tau')],
after which the loss network is replayed forward with route-level blocking.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .coalescence import StationModel, _StationRun
from .distributions import Deterministic, Distribution
from .errors import BlockBudgetExceeded
from .rng import RngStream
from .state import SystemState, state_at


@dataclass
class Route:
    stations: tuple[int, ...]        # 0/1 routing vector over the J stations
    interarrival: Distribution       # base (unscaled) law
    service: Distribution


@dataclass
class LossNetworkModel:
    capacities: tuple[float, ...]    # per station; inf allowed
    routes: list[Route]
    scale: int = 1
    epsilon: float | None = None
    m: float | None = None
    max_blocks: int = 10 ** 4

    @property
    def n_stations(self) -> int:
        return len(self.capacities)

    def station_model(self, l: int) -> StationModel:
        r = self.routes[l]
        return StationModel(interarrival=r.interarrival, service=r.service,
                            capacity=math.inf, scale=self.scale,
                            epsilon=self.epsilon, m=self.m,
                            max_blocks=self.max_blocks)


def validate_model(model: LossNetworkModel) -> list[str]:
    errors = []
    if not model.routes:
        errors.append("network needs at least one route")
    for j, c in enumerate(model.capacities):
        if not (c == math.inf or (float(c).is_integer() and c >= 1)):
            errors.append(f"station {j}: capacity must be a positive integer or inf")
    for l, r in enumerate(model.routes):
        if len(r.stations) != model.n_stations:
            errors.append(f"route {l}: routing vector length != station count")
        if not any(r.stations):
            errors.append(f"route {l}: routing vector is all zeros")
        if any(v not in (0, 1) for v in r.stations):
            errors.append(f"route {l}: routing vector entries must be 0/1")
        if isinstance(r.interarrival, Deterministic):
            errors.append(f"route {l}: deterministic interarrivals admit no "
                          "tilt root (NoRoot); use a family with variance")
        if r.interarrival.mean() <= 0 or r.service.mean() <= 0:
            errors.append(f"route {l}: means must be positive and finite")
    return errors


@dataclass
class NetworkSample:
    """Time-zero network state plus per-route diagnostics."""

    route_states: list[SystemState]
    station_occupancy: tuple[int, ...]
    kappas: list[int]              # final certified index per route
    tau: float | None
    T: float | None
    blocks_used: int
    rejections: int
    wall_ms: float
    seed: int
    stream_id: int

    @property
    def route_counts(self) -> tuple[int, ...]:
        return tuple(st.occupancy for st in self.route_states)

    def to_record(self, include_timing: bool = False) -> dict:
        return {"seed": self.seed, "stream_id": self.stream_id,
                "stations": list(self.station_occupancy),
                "routes": [st.to_record() for st in self.route_states],
                "kappa": list(self.kappas), "tau": self.tau, "T": self.T,
                "blocks": self.blocks_used, "rejections": self.rejections,
                "wall_ms": self.wall_ms if include_timing else None}


class _RouteSim:
    """Backward simulation of one route class on its own sub-stream."""

    def __init__(self, model: LossNetworkModel, l: int, stream: RngStream):
        self.run = _StationRun(model.station_model(l), stream.child(l))
        self.vector = np.asarray(model.routes[l].stations, dtype=int)
        self.prev_kappa = 1
        self.kappa = 0
        self.A = np.empty(0)
        self.V = np.empty(0)

    def extend(self):
        self.prev_kappa = self.kappa if self.kappa else 1
        self.kappa = self.run.extend()
        self.A, self.V = self.run.points(self.kappa)

    @property
    def window_lo(self) -> float:
        return float(self.A[self.prev_kappa - 1])

    def departures(self) -> np.ndarray:
        return self.A + self.V


def detect_network_coalescence(routes: list[_RouteSim],
                               capacities: tuple[float, ...]):
    """First (tau', T') over the intersection of certified windows.

    Candidates are the union of departure epochs across routes, scanned in
    decreasing time; condition 1 is R(tau') <= |tau'| with R the maximum
    remaining service time across routes, and condition 2 requires every
    station's superposed occupancy to stay within its capacity on
    [tau', T'].
    """
    t_lo = max(r.window_lo for r in routes)
    deps = np.concatenate([r.departures() for r in routes])
    deps = np.sort(deps[(deps >= t_lo) & (deps < 0.0)])
    n_stations = len(capacities)
    caps = np.asarray(capacities, dtype=float)
    for tau in deps[::-1]:
        tau = float(tau)
        r_max = 0.0
        for r in routes:
            active = (r.A <= tau) & (r.A + r.V > tau)
            if active.any():
                r_max = max(r_max, float((r.A[active] + r.V[active]).max() - tau))
        T = tau + r_max
        if T > 0.0:              # condition 1: R(tau') <= |tau'|
            continue
        if _stations_within_caps(routes, caps, n_stations, tau, T):
            return tau, T
    return None


def _stations_within_caps(routes, caps, n_stations, tau, T) -> bool:
    occ = np.zeros(n_stations)
    times_all, deltas_all = [], []
    for r in routes:
        d = r.A + r.V
        active = (r.A <= tau) & (d > tau)
        occ += int(active.sum()) * r.vector
        sel_a = (r.A > tau) & (r.A <= T)
        sel_d = (d > tau) & (d <= T)
        if sel_a.any():
            times_all.append(r.A[sel_a])
            deltas_all.append(np.tile(r.vector, (int(sel_a.sum()), 1)))
        if sel_d.any():
            times_all.append(d[sel_d])
            deltas_all.append(np.tile(-r.vector, (int(sel_d.sum()), 1)))
    if np.any(occ > caps):
        return False
    if not times_all:
        return True
    times = np.concatenate(times_all)
    deltas = np.vstack(deltas_all)
    order = np.lexsort((deltas.sum(axis=1), times))  # departures first at ties
    running = occ + np.cumsum(deltas[order], axis=0)
    return bool(np.all(running.max(axis=0) <= caps))


def replay_network_forward(routes: list[_RouteSim],
                           capacities: tuple[float, ...],
                           T: float) -> tuple[list[SystemState], tuple[int, ...]]:
    """Replay all routes' arrivals on (T, 0] with route-level blocking."""
    caps = np.asarray(capacities, dtype=float)
    n_stations = len(capacities)
    occ = np.zeros(n_stations)
    # initial state: the infinite-server customers present at T, all admitted
    busy = []    # (departure_time, route_index) sorted ascending
    for l, r in enumerate(routes):
        d = r.A + r.V
        active = (r.A <= T) & (d > T)
        for dep in d[active]:
            busy.append((float(dep), l))
        occ += int(active.sum()) * r.vector
    busy.sort()
    events = []  # (arrival_time, route_index, departure_time)
    for l, r in enumerate(routes):
        sel = (r.A > T) & (r.A <= 0.0)
        for a, dep in zip(r.A[sel], (r.A + r.V)[sel]):
            events.append((float(a), l, float(dep)))
    events.sort()                      # ties: route index ascending
    admitted: dict[int, list[float]] = {l: [] for l in range(len(routes))}
    i_busy = 0
    for t, l, dep in events:
        while i_busy < len(busy) and busy[i_busy][0] <= t:
            occ -= routes[busy[i_busy][1]].vector
            i_busy += 1
        vec = routes[l].vector
        if np.all(occ[vec == 1] < caps[vec == 1]):
            occ += vec
            k = i_busy
            while k < len(busy) and busy[k][0] < dep:
                k += 1
            busy.insert(k, (dep, l))
        # else blocked and lost
    # state at time zero, per route
    states = []
    for l, r in enumerate(routes):
        rem = np.sort([dep - 0.0 for dep, ll in busy[i_busy:] if ll == l and dep > 0.0])
        last_arrival = float(r.A.max())
        states.append(SystemState(elapsed_age=-last_arrival, remaining=np.asarray(rem)))
    station_occ = np.zeros(n_stations, dtype=int)
    for l, st in enumerate(states):
        station_occ += st.occupancy * routes[l].vector
    return states, tuple(int(x) for x in station_occ)


def perfect_sample_network(model: LossNetworkModel,
                           stream: RngStream) -> NetworkSample:
    """Unbiased draw of the stationary loss-network state at time zero."""
    errs = validate_model(model)
    if errs:
        from .errors import ConfigError
        raise ConfigError("; ".join(errs))
    t0 = time.perf_counter()
    routes = [_RouteSim(model, l, stream) for l in range(len(model.routes))]
    for r in routes:
        r.extend()
    total_blocks = len(routes)
    while True:
        hit = detect_network_coalescence(routes, model.capacities)
        if hit is not None:
            tau, T = hit
            states, station_occ = replay_network_forward(
                routes, model.capacities, T)
            rej = sum(r.run.rejections() for r in routes)
            return NetworkSample(route_states=states,
                                 station_occupancy=station_occ,
                                 kappas=[r.kappa for r in routes],
                                 tau=tau, T=T, blocks_used=total_blocks,
                                 rejections=rej,
                                 wall_ms=1e3 * (time.perf_counter() - t0),
                                 seed=stream.seed, stream_id=stream.stream_id)
        if total_blocks >= model.max_blocks:
            raise BlockBudgetExceeded(
                f"no network coalescence within {model.max_blocks} blocks")
        # extend the route whose certified window is shallowest
        shallowest = max(routes, key=lambda r: r.window_lo)
        shallowest.extend()
        total_blocks += 1
