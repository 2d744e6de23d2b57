"""Analytic oracles and statistical harnesses.

The oracles here (Erlang-B recursion, product-form enumeration, forward
discrete-event simulation) never touch the backward samplers, so agreement
between the two routes is evidence of unbiasedness rather than circularity.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .coalescence import StationModel, perfect_sample_infinite, perfect_sample_loss
from .distributions import Distribution
from .errors import DegenerateBinning, StateSpaceTooLarge
from .network import LossNetworkModel
from .rng import RngStream, mix64

_MAX_PRODUCT_STATES = 10 ** 6


def erlang_b_distribution(capacity: int, offered_load: float):
    """Truncated-Poisson occupancy pmf over {0..C} and the blocking
    probability B(C, a), the latter via the numerically stable recursion
    B_k = a B_{k-1} / (k + a B_{k-1})."""
    assert capacity >= 1 and offered_load > 0
    log_w = [k * math.log(offered_load) - math.lgamma(k + 1)
             for k in range(capacity + 1)]
    mx = max(log_w)
    w = np.exp(np.array(log_w) - mx)
    pmf = w / w.sum()
    b = 1.0
    for k in range(1, capacity + 1):
        b = offered_load * b / (k + offered_load * b)
    return pmf, float(b)


def product_form_distribution(model: LossNetworkModel) -> dict[tuple[int, ...], float]:
    """Stationary law of the route-count vector for Poisson routes,
    pi(n) proportional to prod_l a_l^{n_l} / n_l!, by direct enumeration
    of the feasible set {sum_l n_l P_l(j) <= C_j}."""
    loads = []
    for r in model.routes:
        a = r.service.mean() / (r.interarrival.mean() / model.scale)
        loads.append(a)
    caps = np.asarray(model.capacities, dtype=float)
    vecs = [np.asarray(r.stations) for r in model.routes]
    weights: dict[tuple[int, ...], float] = {}
    count = 0

    def rec(l: int, used: np.ndarray, prefix: tuple[int, ...], logw: float):
        nonlocal count
        if l == len(loads):
            count += 1
            if count > _MAX_PRODUCT_STATES:
                raise StateSpaceTooLarge("feasible set exceeds 1e6 states")
            weights[prefix] = logw
            return
        n = 0
        while True:
            used2 = used + n * vecs[l]
            if np.any(used2 > caps):
                break
            rec(l + 1, used2,
                prefix + (n,), logw + n * math.log(loads[l]) - math.lgamma(n + 1))
            if not vecs[l].any():   # pragma: no cover - validated earlier
                break
            n += 1

    rec(0, np.zeros(len(caps)), (), 0.0)
    mx = max(weights.values())
    z = sum(math.exp(v - mx) for v in weights.values())
    return {k: math.exp(v - mx) / z for k, v in weights.items()}


@dataclass
class GofReport:
    name: str
    statistic: float
    dof: int
    p_value: float
    bins: list[tuple[str, float, float]]   # (label, observed, expected)
    pooled_note: str = ""
    provenance: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {"name": self.name, "statistic": self.statistic,
                "dof": self.dof, "p_value": self.p_value,
                "bins": [list(b) for b in self.bins],
                "pooled_note": self.pooled_note,
                "provenance": self.provenance}


def chi_square_test(observed: np.ndarray, expected_probs: np.ndarray,
                    name: str = "chi-square", provenance: dict | None = None,
                    ddof: int = 0) -> GofReport:
    """Pearson chi-square with tail pooling to expected counts >= 5."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected_probs, dtype=float) * observed.sum()
    total = observed.sum()
    if total < 200:
        raise DegenerateBinning("need at least 200 observations")
    labels = [str(i) for i in range(len(observed))]
    obs, exp, labs = list(observed), list(expected), list(labels)
    pooled = 0
    # pool from the right tail, then the left, until expected >= 5 everywhere
    while len(obs) > 1 and exp[-1] < 5.0:
        ev, ov = exp.pop(), obs.pop()
        labs.pop()
        exp[-1] += ev
        obs[-1] += ov
        labs[-1] = f"{labs[-1]}+"
        pooled += 1
    while len(obs) > 1 and exp[0] < 5.0:
        ev, ov = exp.pop(0), obs.pop(0)
        labs.pop(0)
        exp[0] += ev
        obs[0] += ov
        labs[0] = f"<={labs[0]}"
        pooled += 1
    if len(obs) < 2:
        raise DegenerateBinning("fewer than 2 bins remain after pooling")
    obs_a, exp_a = np.asarray(obs), np.asarray(exp)
    statistic = float(((obs_a - exp_a) ** 2 / exp_a).sum())
    dof = len(obs) - 1 - ddof
    p = float(stats.chi2.sf(statistic, dof))
    return GofReport(name=name, statistic=statistic, dof=dof, p_value=p,
                     bins=list(zip(labs, obs, exp)),
                     pooled_note=f"pooled {pooled} tail bins to expected >= 5",
                     provenance=provenance or {})


def ks_test(samples: np.ndarray, cdf, name: str = "ks",
            provenance: dict | None = None) -> GofReport:
    res = stats.kstest(np.asarray(samples, dtype=float),
                       lambda x: np.asarray(cdf(x), dtype=float))
    return GofReport(name=name, statistic=float(res.statistic), dof=len(samples),
                     p_value=float(res.pvalue), bins=[],
                     provenance=provenance or {})


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = max(len(p), len(q))
    p = np.pad(p, (0, n - len(p)))
    q = np.pad(q, (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# Independent forward simulation (oracle for GI/GI/C/C)
# ---------------------------------------------------------------------------

@dataclass
class ForwardSummary:
    occupancy_pmf: np.ndarray
    occupancy_mean: float
    occupancy_se: float
    blocking: float
    blocking_se: float
    arrivals: int
    blocked: int
    horizon: float

    def occupancy_ci(self, z: float = 1.96):
        return (self.occupancy_mean - z * self.occupancy_se,
                self.occupancy_mean + z * self.occupancy_se)

    def blocking_ci(self, z: float = 1.96):
        return (self.blocking - z * self.blocking_se,
                self.blocking + z * self.blocking_se)


def forward_loss_simulation(interarrival: Distribution, service: Distribution,
                            capacity: float, horizon: float, stream: RngStream,
                            burn_in: float = 0.1, batches: int = 20) -> ForwardSummary:
    """Long-run forward simulation of GI/GI/C/C from empty, time averages
    taken after the burn-in fraction, batch-mean standard errors."""
    import heapq
    t_start = burn_in * horizon
    edges = np.linspace(t_start, horizon, batches + 1)
    occ_hist = defaultdict(float)
    occ_time = np.zeros(batches)
    arr_count = np.zeros(batches)
    blk_count = np.zeros(batches)
    busy: list[float] = []
    _BUF = 65536
    xs = interarrival.sample_n(stream, _BUF)
    xi = 0
    t = float(xs[0])
    xi = 1
    last = 0.0
    occ = 0

    def account(upto):
        nonlocal last
        if upto > last:
            lo = max(last, t_start)
            if upto > lo:
                occ_hist[occ] += upto - lo
                b1 = np.searchsorted(edges, lo, side="right") - 1
                b2 = np.searchsorted(edges, upto, side="right") - 1
                if b1 == b2:
                    if 0 <= b1 < batches:
                        occ_time[b1] += (upto - lo) * occ
                else:
                    for b in range(max(b1, 0), min(b2, batches - 1) + 1):
                        seg = min(upto, edges[b + 1]) - max(lo, edges[b])
                        if seg > 0:
                            occ_time[b] += seg * occ
            last = upto
    while t <= horizon:
        while busy and busy[0] <= t:
            dep = heapq.heappop(busy)
            account(dep)
            occ -= 1
        account(t)
        if t >= t_start:
            b = min(int(np.searchsorted(edges, t, side="right") - 1), batches - 1)
            arr_count[b] += 1
        if occ < capacity:
            occ += 1
            heapq.heappush(busy, t + service.sample(stream))
        elif t >= t_start:
            b = min(int(np.searchsorted(edges, t, side="right") - 1), batches - 1)
            blk_count[b] += 1
        if xi == _BUF:
            xs = interarrival.sample_n(stream, _BUF)
            xi = 0
        t += float(xs[xi])
        xi += 1
    while busy and busy[0] <= horizon:
        dep = heapq.heappop(busy)
        account(dep)
        occ -= 1
    account(horizon)
    span = horizon - t_start
    kmax = max(occ_hist) if occ_hist else 0
    pmf = np.array([occ_hist.get(k, 0.0) for k in range(kmax + 1)]) / span
    batch_span = span / batches
    occ_means = occ_time / batch_span
    block_frac = np.divide(blk_count, arr_count,
                           out=np.zeros(batches), where=arr_count > 0)
    return ForwardSummary(
        occupancy_pmf=pmf,
        occupancy_mean=float(occ_means.mean()),
        occupancy_se=float(occ_means.std(ddof=1) / math.sqrt(batches)),
        blocking=float(blk_count.sum() / max(arr_count.sum(), 1.0)),
        blocking_se=float(block_frac.std(ddof=1) / math.sqrt(batches)),
        arrivals=int(arr_count.sum()), blocked=int(blk_count.sum()),
        horizon=horizon)


def stationary_blocking_burst(model: StationModel, sample, horizon: float,
                              stream: RngStream) -> tuple[int, int]:
    """(blocked, arrivals) over a fresh forward horizon started from one
    exactly stationary state; both counts are exact stationary rates for
    any horizon, so pooled ratios estimate the arrival-average blocking."""
    import heapq
    x_dist = model.interarrival.scaled(model.scale)
    busy = sorted(sample.state.remaining.tolist())
    age = sample.state.elapsed_age
    t = x_dist.sample_conditional(age, math.inf, stream) - age
    arrivals = blocked = 0
    while t <= horizon:
        while busy and busy[0] <= t:
            heapq.heappop(busy)
        arrivals += 1
        if len(busy) < model.capacity:
            heapq.heappush(busy, t + model.service.sample(stream))
        else:
            blocked += 1
        t += x_dist.sample(stream)
    return blocked, arrivals


# ---------------------------------------------------------------------------
# Scaling benchmarks
# ---------------------------------------------------------------------------

@dataclass
class ScalingRow:
    s: int
    capacity: float
    replications: int
    metric_mean: dict
    metric_se: dict


@dataclass
class ScalingTable:
    regime: str
    rows: list[ScalingRow]

    def slope(self, metric: str) -> float:
        """Least-squares slope of log(mean) vs log(s)."""
        xs = np.log([r.s for r in self.rows])
        ys = np.log([max(r.metric_mean[metric], 1e-300) for r in self.rows])
        return float(np.polyfit(xs, ys, 1)[0])

    def to_records(self) -> list[dict]:
        out = []
        for r in self.rows:
            rec = {"regime": self.regime, "s": r.s, "capacity": r.capacity,
                   "replications": r.replications}
            for k in r.metric_mean:
                rec[f"{k}_mean"] = r.metric_mean[k]
                rec[f"{k}_se"] = r.metric_se[k]
            out.append(rec)
        return out


def summarize_metric(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def run_scaling_benchmark(regime: str, interarrival: Distribution,
                          service: Distribution, s_values: list[int],
                          replications: int, seed: int,
                          beta: float = 2.0) -> ScalingTable:
    """Replicated perfect-sampling runs across system scales.

    Regimes: INF (infinite server, kappa metric), QD (capacity C_s = s),
    QED (capacity C_s = s + ceil(beta sqrt(s))).  Metrics per scale:
    kappa, |tau|, customers simulated, wall time.
    """
    regime = regime.upper()
    assert regime in ("INF", "QD", "QED")
    assert replications >= 30, "need >= 30 replications per scale"
    rows = []
    for s in s_values:
        if regime == "INF":
            cap = math.inf
        elif regime == "QD":
            cap = float(s)
        else:
            cap = float(s + math.ceil(beta * math.sqrt(s)))
        model = StationModel(interarrival=interarrival, service=service,
                             capacity=cap, scale=s)
        regime_tag = {"INF": 0, "QD": 1, "QED": 2}[regime]
        kappas, taus, customers, walls = [], [], [], []
        for rep in range(replications):
            stream = RngStream(seed, mix64(regime_tag, s, rep))
            if regime == "INF":
                ps = perfect_sample_infinite(model, stream)
            else:
                ps = perfect_sample_loss(model, stream)
            kappas.append(ps.kappa)
            taus.append(abs(ps.tau) if ps.tau is not None else 0.0)
            customers.append(ps.customers)
            walls.append(ps.wall_ms)
        means, ses = {}, {}
        for key, vals in (("kappa", kappas), ("tau", taus),
                          ("customers", customers), ("wall_ms", walls)):
            means[key], ses[key] = summarize_metric(np.asarray(vals))
        rows.append(ScalingRow(s=s, capacity=cap, replications=replications,
                               metric_mean=means, metric_se=ses))
    return ScalingTable(regime=regime, rows=rows)
