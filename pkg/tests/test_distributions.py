import math

import numpy as np
import pytest
from scipy import integrate, stats

from perfectq.distributions import (Deterministic, Exponential, Gamma,
                                    LogNormal, Pareto, Uniform, Weibull,
                                    make_tilt_context, solve_eta,
                                    solve_truncation)
from perfectq.errors import DivergentTilt, NoRoot, ZeroMassInterval
from perfectq.rng import RngStream

ALL_FAMILIES = [
    Exponential(1.0),
    Exponential(2.0),
    Gamma(2.0, 2.0),
    Gamma(3.7, 1.3),
    Uniform(0.0, 1.0),
    Uniform(0.5, 2.5),
    Deterministic(3.0),
    LogNormal(-0.5, 1.0),
    Weibull(1.5, 1.0),
    Weibull(0.8, 2.0),
    Pareto(2.5, 1.0),
]

SCIPY_EQUIV = {
    "exponential": lambda d: stats.expon(scale=1.0 / d.rate),
    "gamma": lambda d: stats.gamma(d.shape, scale=1.0 / d.rate),
    "uniform": lambda d: stats.uniform(d.low, d.high - d.low),
    "lognormal": lambda d: stats.lognorm(d.sigma, scale=math.exp(d.mu)),
    "weibull": lambda d: stats.weibull_min(d.shape, scale=d.scale_param),
    "pareto": lambda d: stats.pareto(d.alpha, scale=d.xm),
}


# --- CDF -------------------------------------------------------------------

def test_cdf_exponential_log2():
    assert float(Exponential(1.0).cdf(math.log(2.0))) == pytest.approx(0.5)


@pytest.mark.parametrize("dist", ALL_FAMILIES, ids=repr)
def test_cdf_zero_at_origin(dist):
    assert float(dist.cdf(0.0)) == 0.0
    assert float(dist.cdf(-1.0)) == 0.0


def test_cdf_pareto_closed_form():
    assert float(Pareto(2.5, 1.0).cdf(2.0)) == pytest.approx(1.0 - 2.0 ** -2.5,
                                                             abs=1e-12)


@pytest.mark.parametrize("dist", [d for d in ALL_FAMILIES
                                  if d.family in SCIPY_EQUIV], ids=repr)
def test_cdf_quantile_against_scipy(dist):
    ref = SCIPY_EQUIV[dist.family](dist)
    xs = np.linspace(0.01, 6.0, 40)
    np.testing.assert_allclose(np.asarray(dist.cdf(xs)), ref.cdf(xs),
                               atol=1e-10)
    us = np.linspace(0.01, 0.99, 21)
    np.testing.assert_allclose(np.asarray(dist.quantile(us)), ref.ppf(us),
                               rtol=1e-9, atol=1e-12)


# --- plain sampling ---------------------------------------------------------

def test_deterministic_sampling(stream):
    assert Deterministic(3.0).sample(stream) == 3.0


def test_exponential_sample_mean(stream):
    x = Exponential(2.0).sample_n(stream, 10 ** 5)
    assert abs(x.mean() - 0.5) < 0.01


def test_exponential_sample_ks(stream):
    x = Exponential(1.0).sample_n(stream, 10 ** 4)
    assert stats.kstest(x, "expon").pvalue > 0.005


# --- conditional sampling ---------------------------------------------------

def test_conditional_noop_matches_plain(stream):
    d = Exponential(1.0)
    x = d.sample_conditional_n(0.0, math.inf, stream, 10 ** 4)
    assert stats.kstest(x, "expon").pvalue > 0.005


def test_conditional_uniform_band(stream):
    d = Uniform(0.0, 1.0)
    x = d.sample_conditional_n(0.25, 0.5, stream, 10 ** 4)
    assert np.all((x > 0.25) & (x <= 0.5))
    assert abs(x.mean() - 0.375) < 0.01


def test_conditional_zero_mass():
    with pytest.raises(ZeroMassInterval):
        Deterministic(3.0).sample_conditional(4.0, 5.0, RngStream(1, 1))


# --- equilibrium sampling ---------------------------------------------------

def test_equilibrium_exponential_memoryless(stream):
    x = np.array([Exponential(2.0).sample_equilibrium(stream)
                  for _ in range(10 ** 4)])
    assert stats.kstest(x, "expon", args=(0, 0.5)).pvalue > 0.005


def test_equilibrium_deterministic_uniform(stream):
    c = 3.0
    x = np.array([Deterministic(c).sample_equilibrium(stream)
                  for _ in range(10 ** 4)])
    assert stats.kstest(x, "uniform", args=(0, c)).pvalue > 0.005


def test_equilibrium_uniform_mean(stream):
    x = np.array([Uniform(0.0, 1.0).sample_equilibrium(stream)
                  for _ in range(10 ** 4)])
    assert abs(x.mean() - 1.0 / 3.0) < 0.01   # E[X^2] / (2 E[X])


@pytest.mark.parametrize("dist", [Gamma(2.0, 2.0), Pareto(2.5, 1.0),
                                  LogNormal(-0.5, 1.0)], ids=repr)
def test_equilibrium_generic_inversion(dist, stream):
    # oracle: equilibrium CDF is 1 - integrated_tail(x)/mean
    x = np.array([dist.sample_equilibrium(stream) for _ in range(4000)])
    cdf = lambda t: 1.0 - np.array([dist.integrated_tail(v) for v in
                                    np.atleast_1d(t)]) / dist.mean()
    assert stats.kstest(x, cdf).pvalue > 0.005


# --- log-MGF ----------------------------------------------------------------

def test_log_mgf_exponential():
    assert Exponential(2.0).log_mgf(1.0) == pytest.approx(math.log(2.0))


@pytest.mark.parametrize("dist", ALL_FAMILIES, ids=repr)
def test_log_mgf_zero(dist):
    assert dist.log_mgf(0.0) == 0.0


def test_log_mgf_pareto_diverges():
    assert Pareto(2.5, 1.0).log_mgf(0.1) == math.inf
    assert LogNormal(-0.5, 1.0).log_mgf(1e-9) == math.inf
    assert Weibull(0.8, 2.0).log_mgf(0.1) == math.inf


def _mgf_integrand(dist, th):
    def f(x):
        p = dist.pdf(x)
        if p <= 0.0:
            return 0.0
        lg = th * x + math.log(p)
        return math.exp(lg) if lg > -745.0 else 0.0
    return f


@pytest.mark.parametrize("dist,thetas", [
    (Exponential(1.0), (-1.0, -0.3, 0.3, 0.7)),
    (Gamma(2.0, 2.0), (-1.0, 0.5)),
    (Uniform(0.5, 2.5), (-1.0, 1.0)),
    (Weibull(1.5, 1.0), (-0.7,)),
    (Pareto(2.5, 1.0), (-0.5,)),
], ids=lambda v: repr(v))
def test_log_mgf_matches_quadrature(dist, thetas):
    for th in thetas:
        ref, _ = integrate.quad(_mgf_integrand(dist, th),
                                dist.support_min(), np.inf, limit=200)
        assert dist.log_mgf(th) == pytest.approx(math.log(ref), abs=1e-7)


@pytest.mark.parametrize("dist", [Exponential(1.0), Gamma(2.0, 2.0),
                                  Uniform(0.0, 1.0)], ids=repr)
def test_log_mgf_convex_with_mean_slope(dist):
    # psi(0) = 0, psi'(0) = mean by finite differences
    h = 1e-6
    deriv = (dist.log_mgf(h) - dist.log_mgf(-h)) / (2 * h)
    assert deriv == pytest.approx(dist.mean(), rel=1e-4)
    grid = np.linspace(-0.5, 0.5, 11)
    vals = [dist.log_mgf(t) for t in grid]
    for i in range(1, len(grid) - 1):
        assert vals[i] <= 0.5 * (vals[i - 1] + vals[i + 1]) + 1e-12


# --- tilted sampling ---------------------------------------------------------

def test_tilted_exponential_conjugacy(stream):
    x = np.array([Exponential(1.0).sample_tilted(0.5, stream)
                  for _ in range(10 ** 4)])
    assert stats.kstest(x, "expon", args=(0, 2.0)).pvalue > 0.005


def test_tilt_zero_identity(stream):
    x = np.array([Gamma(2.0, 2.0).sample_tilted(0.0, stream)
                  for _ in range(10 ** 4)])
    assert stats.kstest(x, "gamma", args=(2.0, 0, 0.5)).pvalue > 0.005


def test_tilted_exponential_mean(stream):
    x = np.array([Exponential(1.0).sample_tilted(0.5, stream)
                  for _ in range(10 ** 5)])
    assert abs(x.mean() - 2.0) < 0.04


def test_divergent_tilt_raises(stream):
    with pytest.raises(DivergentTilt):
        Pareto(2.5, 1.0).sample_tilted(0.1, stream)


@pytest.mark.parametrize("dist,theta,n", [
    (Exponential(1.0), 0.4, 10 ** 5),
    (Gamma(2.0, 2.0), 0.6, 10 ** 5),
    (Uniform(0.5, 2.5), 1.2, 10 ** 5),
    (Weibull(1.5, 1.0), -0.6, 3 * 10 ** 4),
    (Pareto(2.5, 1.0), -0.5, 4 * 10 ** 4),
    (LogNormal(-0.5, 1.0), -0.4, 3 * 10 ** 4),
], ids=lambda v: repr(v))
def test_tilted_mean_matches_psi_prime(dist, theta, n, stream):
    # psi'(theta) = E[X e^{theta X}] / E[e^{theta X}], both by quadrature
    num, _ = integrate.quad(lambda x: x * _mgf_integrand(dist, theta)(x),
                            dist.support_min(), np.inf, limit=400)
    den, _ = integrate.quad(_mgf_integrand(dist, theta),
                            dist.support_min(), np.inf, limit=400)
    psi_prime = num / den
    x = np.array([dist.sample_tilted(theta, stream) for _ in range(n)])
    se = x.std(ddof=1) / math.sqrt(n)
    assert abs(x.mean() - psi_prime) < 3.0 * se + 1e-4


def test_weibull_positive_tilt_numeric_inversion(stream):
    # shape > 1 keeps the MGF finite for positive tilts
    d = Weibull(1.5, 1.0)
    th = 0.5
    x = np.array([d.sample_tilted(th, stream) for _ in range(150)])
    h = 1e-5
    psi_prime = (d.log_mgf(th + h) - d.log_mgf(th - h)) / (2 * h)
    assert abs(x.mean() - psi_prime) < 4.0 * x.std(ddof=1) / math.sqrt(len(x))


# --- tilt roots and truncation ------------------------------------------------

def test_solve_eta_exponential():
    # oracle: bisection on the closed form psi_Y(t) = 0.8 t - log(1 + t)
    f = lambda t: 0.8 * t - math.log1p(t)
    lo, hi = 0.1, 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    eta = solve_eta(Exponential(1.0), 1.0, 0.2)
    assert eta == pytest.approx(0.5 * (lo + hi), abs=1e-8)
    assert abs(f(eta)) <= 1e-10


def test_solve_eta_no_root_for_deterministic():
    with pytest.raises(NoRoot):
        solve_eta(Deterministic(1.0), 1.0, 0.2)


def test_solve_eta_positive_slope():
    dist = Gamma(2.0, 2.0)
    eta = solve_eta(dist, dist.mean(), 0.2)
    h = 1e-6
    psi = lambda t: t * (dist.mean() - 0.2) + dist.log_mgf(-t)
    assert (psi(eta + h) - psi(eta - h)) / (2 * h) > 0.0


def test_truncation_exponential_closed_form():
    ctx = solve_truncation(Exponential(1.0), 1.0, 0.2)
    assert ctx.truncation_b == pytest.approx(math.log(10.0), abs=1e-7)
    assert ctx.epsilon_prime == pytest.approx(0.1)
    got = 1.0 - math.exp(-ctx.truncation_b)      # E[X ^ b]
    assert abs(got - 0.9) <= 1e-10


def test_truncation_pareto_against_quadrature():
    dist = Pareto(2.5, 1.0)
    mu = dist.mean()
    eps = 0.2
    ctx = solve_truncation(dist, mu, eps)
    # oracle: E[X ^ b] by quadrature of the survival function on [0, b]
    val, _ = integrate.quad(lambda x: float(dist.sf(x)), 0.0, ctx.truncation_b,
                            limit=200)
    assert val == pytest.approx(mu - eps / 2.0, abs=1e-8)
    # the tilt root solves the truncated-walk equation
    from perfectq.distributions import log_mgf_truncated
    psi = (ctx.eta * (mu - eps)
           + log_mgf_truncated(dist, -ctx.eta, ctx.truncation_b))
    assert abs(psi) <= 1e-9


def test_make_tilt_context_routes_heavy_tail():
    assert make_tilt_context(Exponential(1.0)).heavy_tail is False
    assert make_tilt_context(Pareto(2.5, 1.0)).heavy_tail is True
    assert make_tilt_context(LogNormal(-0.5, 1.0)).heavy_tail is True


# --- integrated tails ----------------------------------------------------------

def test_integrated_tail_exponential():
    assert Exponential(1.0).integrated_tail(0.0) == pytest.approx(1.0)
    assert Exponential(1.0).integrated_tail(2.0) == pytest.approx(math.exp(-2.0))


def test_integrated_tail_uniform():
    assert Uniform(0.0, 1.0).integrated_tail(0.5) == pytest.approx(0.125)


@pytest.mark.parametrize("dist", ALL_FAMILIES, ids=repr)
def test_integrated_tail_properties(dist):
    assert dist.integrated_tail(0.0) == pytest.approx(dist.mean(), abs=1e-9)
    hs = np.linspace(0.0, 8.0, 30)
    vals = [dist.integrated_tail(h) for h in hs]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("dist", ALL_FAMILIES, ids=repr)
def test_integrated_tail_against_quadrature(dist):
    for h in (0.3, 1.7):
        if math.isfinite(dist.support_max()):
            upper = dist.support_max()
            ref, _ = integrate.quad(lambda x: float(dist.sf(x)), h,
                                    max(upper, h), limit=400)
        else:
            ref, _ = integrate.quad(lambda x: float(dist.sf(x)), h, np.inf,
                                    limit=400)
        assert dist.integrated_tail(h) == pytest.approx(ref, rel=1e-6,
                                                        abs=1e-7)


# --- scaling --------------------------------------------------------------------

def test_scaled_divisor_semantics(stream):
    base = Exponential(1.0)
    s4 = base.scaled(4)
    assert s4.mean() == pytest.approx(0.25)
    assert float(s4.cdf(0.5)) == pytest.approx(float(base.cdf(2.0)))
    assert s4.integrated_tail(0.5) == pytest.approx(base.integrated_tail(2.0) / 4)
    assert s4.log_mgf(4.0) == pytest.approx(base.log_mgf(1.0))
    x = s4.sample_n(stream, 2 * 10 ** 4)
    assert abs(x.mean() - 0.25) < 0.01
    assert s4.scaled(2).scale == 8   # nesting collapses


def test_config_round_trip():
    from perfectq.distributions import from_config
    d = from_config({"family": "gamma", "params": {"shape": 2, "rate": 2},
                     "scale": 3})
    assert d.family == "gamma" and d.scale == 3
    assert from_config(d.to_config()).mean() == pytest.approx(d.mean())
