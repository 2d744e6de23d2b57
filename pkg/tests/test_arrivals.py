import math

import numpy as np
import pytest
from scipy import stats

from perfectq.arrivals import (ArrivalProcess, WalkParams, bernoulli_upcross,
                               bridge_fixed_length, generate_arrival_blocks,
                               generate_arrival_blocks_heavy,
                               segment_to_down_level,
                               segment_upcross_or_terminate,
                               verify_arrival_blocks)
from perfectq.distributions import (Exponential, Gamma, Pareto,
                                    make_tilt_context)
from perfectq.rng import RngStream
from perfectq.service import ServiceProcess


def _params(eps=0.2, m=1.0, dist=None):
    ctx = make_tilt_context(dist or Exponential(1.0), eps)
    return WalkParams(tilt=ctx, m=m)


# --- up-crossing Bernoulli ------------------------------------------------------

def test_infinite_barrier_short_circuits():
    p = _params()
    s = RngStream(1, 1)
    before = s.draws
    bit, path = bernoulli_upcross(p, math.inf, s)
    assert (bit, path) == (0, None)
    assert s.draws == before        # no randomness consumed


def test_negative_barrier_is_sure_success():
    bit, path = bernoulli_upcross(_params(), -0.5, RngStream(1, 2))
    assert bit == 1 and len(path) == 0


@pytest.mark.parametrize("xi", [1.0, 2.0, 4.0])
def test_lundberg_upper_bound(xi, stream):
    p = _params()
    n = 2 * 10 ** 4
    hits = sum(bernoulli_upcross(p, xi, stream)[0] for _ in range(n))
    q_hat = hits / n
    se = math.sqrt(q_hat * (1 - q_hat) / n)
    assert q_hat <= math.exp(-p.tilt.eta * xi) + 3 * se


def test_upcross_probability_against_nominal_truncation(stream):
    # oracle: long-horizon nominal walks, truncation error exponentially small
    p = _params()
    xi = 2.0
    n = 2 * 10 ** 4
    hits = sum(bernoulli_upcross(p, xi, stream)[0] for _ in range(n))
    q_hat = hits / n
    reps = 4 * 10 ** 4
    crossed = np.zeros(reps, dtype=bool)
    alive = np.arange(reps)
    s = np.zeros(reps)
    steps = 0
    while alive.size and steps < 10 ** 6:
        chunk = 512
        y = p.tilt.slope - p.tilt.dist.sample_n(stream, alive.size * chunk) \
            .reshape(alive.size, chunk)
        cs = s[alive, None] + np.cumsum(y, axis=1)
        crossed[alive] |= (cs > xi).any(axis=1)
        s[alive] = cs[:, -1]
        keep = ~crossed[alive] & (s[alive] > -40.0)
        alive = alive[keep]
        steps += chunk
    q_mc = crossed.mean()
    se = math.sqrt(q_hat * (1 - q_hat) / n + q_mc * (1 - q_mc) / reps)
    assert abs(q_hat - q_mc) < 3 * se


def test_accepted_path_ends_above_barrier(stream):
    p = _params()
    for _ in range(200):
        bit, path = bernoulli_upcross(p, 1.5, stream)
        if bit:
            assert path.end > 1.5
            assert path.cum[:-1].max(initial=-math.inf) <= 1.5


# --- descent segments ------------------------------------------------------------

def test_unconstrained_descent_accepts_first_proposal(stream):
    p = _params()
    path = segment_to_down_level(p, math.inf, -1.0, stream)
    assert path.end < -1.0
    assert p.counters["down_rejects"] == 0


def test_descent_respects_barrier_and_level(stream):
    p = _params()
    for _ in range(300):
        path = segment_to_down_level(p, 0.7, -1.0, stream)
        assert path.maxval <= 0.7
        assert path.end < -1.0


def test_descent_mean_length_matches_direct_simulation(stream):
    # oracle: direct nominal simulation of the first-passage time below -1
    p = _params()
    n = 10 ** 4
    lens = np.array([len(segment_to_down_level(p, math.inf, -1.0, stream))
                     for _ in range(n)], float)
    direct = []
    for _ in range(n):
        s, k = 0.0, 0
        while s >= -1.0:
            s += p.tilt.slope - p.tilt.dist.sample(stream)
            k += 1
        direct.append(k)
    direct = np.array(direct, float)
    se = math.sqrt(lens.var(ddof=1) / n + direct.var(ddof=1) / n)
    assert abs(lens.mean() - direct.mean()) < 3 * se


# --- rebound race ------------------------------------------------------------------

def test_race_frequency_estimates_q_m(stream):
    p = _params()
    n = 4 * 10 ** 4
    cont = sum(segment_upcross_or_terminate(p, math.inf, stream)[0]
               for _ in range(n))
    hits = sum(bernoulli_upcross(p, p.m, stream)[0] for _ in range(n))
    f1, f2 = cont / n, hits / n
    se = math.sqrt(f1 * (1 - f1) / n + f2 * (1 - f2) / n)
    assert abs(f1 - f2) < 3 * se


def test_race_path_rises_from_zero_above_m(stream):
    p = _params()
    seen = 0
    while seen < 100:
        cont, path = segment_upcross_or_terminate(p, math.inf, stream)
        if cont:
            assert path.end > p.m
            assert path.cum[:-1].max(initial=-math.inf) <= p.m
            seen += 1


# --- bridges -----------------------------------------------------------------------

def test_bridge_single_step_nearly_unconditioned(stream):
    p = _params()
    ys = np.array([bridge_fixed_length(p, 1, 1e6, stream).ys[0]
                   for _ in range(10 ** 4)])
    x = p.tilt.slope - ys       # recover the gap; must follow G
    assert stats.kstest(x, "expon").pvalue > 0.005


def test_bridge_prefix_constraint(stream):
    p = _params()
    for _ in range(300):
        path = bridge_fixed_length(p, 3, p.m, stream)
        assert path.maxval <= p.m
        assert len(path) == 3


def test_bridge_zero_length(stream):
    path = bridge_fixed_length(_params(), 0, 1.0, stream)
    assert len(path) == 0


def test_bridge_acceptance_rate_matches_brute_force(stream):
    # brute force: P(3-step prefix <= m and no later up-crossing of m - S_3)
    p = _params()
    n = 10 ** 4
    accepted = 0
    trials = 0
    for _ in range(n):
        before = p.counters["bridge_rejects"]
        bridge_fixed_length(p, 3, p.m, stream)
        trials += 1 + (p.counters["bridge_rejects"] - before)
        accepted += 1
    rate = accepted / trials
    reps = 4 * 10 ** 4
    y = p.tilt.slope - p.tilt.dist.sample_n(stream, 3 * reps).reshape(reps, 3)
    cs = np.cumsum(y, axis=1)
    ok = (cs.max(axis=1) <= p.m)
    s = cs[:, -1].copy()
    crossed = np.zeros(reps, dtype=bool)
    alive = np.nonzero(ok)[0]
    steps = 0
    while alive.size and steps < 10 ** 6:
        chunk = 512
        yy = p.tilt.slope - p.tilt.dist.sample_n(stream, alive.size * chunk) \
            .reshape(alive.size, chunk)
        cs2 = s[alive, None] + np.cumsum(yy, axis=1)
        crossed[alive] |= (cs2 > p.m).any(axis=1)
        s[alive] = cs2[:, -1]
        keep = ~crossed[alive] & (s[alive] > -40.0)
        alive = alive[keep]
        steps += chunk
    brute = (ok & ~crossed).mean()
    se = math.sqrt(rate * (1 - rate) / trials + brute * (1 - brute) / reps)
    assert abs(rate - brute) < 3 * se


# --- full blocks ---------------------------------------------------------------------

def test_blocks_satisfy_all_invariants():
    for rep in range(150):
        st = RngStream(61, rep)
        p = _params()
        sp = ServiceProcess(Exponential(1.0), p.tilt.slope, st)
        ab = generate_arrival_blocks(p, sp, 3, st)
        assert verify_arrival_blocks(ab, p.m) == []
        # kappa_j must be a service block start
        starts = set(sp.snapshot().block_starts)
        assert all(k in starts for k in ab.kappas)


def test_pooled_gap_marginals_follow_g(stream):
    xs = {2: [], 4: []}
    a1s = []
    for _ in range(2 * 10 ** 4):
        p = _params()
        sp = ServiceProcess(Exponential(1.0), p.tilt.slope, stream)
        proc = ArrivalProcess(p, sp, stream)
        while len(proc.raw_gaps) < 4:
            proc.extend_block()
        ab = proc.snapshot()
        xs[2].append(ab.raw_gaps[1])
        xs[4].append(ab.raw_gaps[3])
        a1s.append(ab.a1)
    assert stats.kstest(np.array(xs[2]), "expon").pvalue > 0.005
    assert stats.kstest(np.array(xs[4]), "expon").pvalue > 0.005
    # |A_1| follows the equilibrium law (= exponential by memorylessness)
    assert stats.kstest(np.array(a1s), "expon").pvalue > 0.005


def test_gamma_interarrivals_supported(stream):
    p = _params(dist=Gamma(2.0, 2.0))
    sp = ServiceProcess(Exponential(2.0), p.tilt.slope, stream)
    ab = generate_arrival_blocks(p, sp, 2, stream)
    assert verify_arrival_blocks(ab, p.m) == []


def test_alpha_geometric_domination(stream):
    # P(alpha_1 > k) <= exp(-eta m k) (1 + 3 s.e.): rebound succeeds with
    # probability q(m) <= exp(-eta m) independently per stage
    p = _params()
    n = 2 * 10 ** 4
    alphas = []
    for _ in range(n):
        sp = ServiceProcess(Exponential(1.0), p.tilt.slope, stream)
        proc = ArrivalProcess(p, sp, stream)
        proc.extend_block()
        alphas.append(proc.blocks[0].alpha)
    alphas = np.array(alphas)
    for k in range(1, 6):
        frac = (alphas > k).mean()
        bound = math.exp(-p.tilt.eta * p.m * k)
        se = math.sqrt(max(frac * (1 - frac), 1e-9) / n)
        assert frac <= bound * 1.0 + 3 * se


# --- heavy-tail coupling ----------------------------------------------------------

def test_heavy_requires_truncation_context(stream):
    from perfectq.errors import PerfectQError
    p = _params()
    sp = ServiceProcess(Exponential(1.0), p.tilt.slope, stream)
    with pytest.raises(PerfectQError):
        generate_arrival_blocks_heavy(p, sp, 1, stream)


def test_heavy_coupling_invariants():
    dist = Pareto(2.5, 1.0)
    ctx = make_tilt_context(dist, 0.2)
    for rep in range(400):
        st = RngStream(62, rep)
        p = WalkParams(tilt=ctx, m=ctx.mu)
        sp = ServiceProcess(Exponential(1.0), ctx.slope, st)
        ab = generate_arrival_blocks_heavy(p, sp, 2, st)
        assert ab.heavy_tail
        assert verify_arrival_blocks(ab, p.m) == []
        raw = ab.arrival_magnitudes()
        trunc = ab.truncated_magnitudes()
        assert np.all(raw >= trunc - 1e-9)
        eff = ctx.slope - np.diff(ab.walk[:len(raw)])
        assert np.all(ab.raw_gaps[:len(eff)] >= eff - 1e-9)
        assert np.all(eff <= ctx.truncation_b + 1e-9)
        if ab.a1 <= ctx.truncation_b:
            assert ab.a1_trunc == ab.a1


def test_heavy_pooled_raw_gaps_follow_pareto(stream):
    dist = Pareto(2.5, 1.0)
    ctx = make_tilt_context(dist, 0.2)
    vals = []
    for _ in range(2 * 10 ** 4):
        p = WalkParams(tilt=ctx, m=ctx.mu)
        sp = ServiceProcess(Exponential(1.0), ctx.slope, stream)
        proc = ArrivalProcess(p, sp, stream)
        while len(proc.raw_gaps) < 2:
            proc.extend_block()
        vals.append(proc.raw_gaps[1])
    assert stats.kstest(np.array(vals), "pareto", args=(2.5,)).pvalue > 0.005


def test_pair_independence_on_quantile_grid(stream):
    p = _params()
    pairs = []
    for _ in range(6000):
        sp = ServiceProcess(Exponential(1.0), p.tilt.slope, stream)
        proc = ArrivalProcess(p, sp, stream)
        while len(proc.raw_gaps) < 3:
            proc.extend_block()
        pairs.append((proc.raw_gaps[1], proc.raw_gaps[2]))
    pairs = np.array(pairs)
    edges = -np.log(1.0 - np.array([0.25, 0.5, 0.75]))
    i = np.digitize(pairs[:, 0], edges)
    j = np.digitize(pairs[:, 1], edges)
    obs = np.zeros((4, 4))
    for a, b in zip(i, j):
        obs[a, b] += 1
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / obs.sum()
    chi2 = ((obs - expected) ** 2 / expected).sum()
    assert stats.chi2.sf(chi2, 9) > 0.005
