"""Distribution toolkit for interarrival and service laws.

Each family supports CDF/tail evaluation, plain and conditional sampling by
inversion, equilibrium (stationary-age) sampling, log-MGF evaluation,
exponentially tilted sampling, and integrated tails.  All sampling goes
through an explicit RngStream; everything else is pure.

Supported families: exponential, gamma (Erlang), uniform, deterministic,
lognormal, weibull, pareto.  A time-scale divisor can be applied with
``dist.scaled(s)`` (the law of X/s), so downstream code always works in
scaled units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DivergentTilt, NoRoot, ZeroMassInterval
from .rng import RngStream

_AR_CAP = 10 ** 7
_BISECT_TOL = 1e-12


class Distribution:
    """Base class; subclasses implement the per-family closed forms."""

    family: str
    scale: int = 1

    # --- required per family ---------------------------------------------
    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def log_mgf(self, theta: float) -> float:
        """log E[exp(theta X)]; math.inf when the MGF diverges."""
        raise NotImplementedError

    def integrated_tail(self, h: float) -> float:
        """Integral of the tail CDF over [h, inf)."""
        raise NotImplementedError

    def support_min(self) -> float:
        return 0.0

    def support_max(self) -> float:
        return math.inf

    @property
    def light_tailed(self) -> bool:
        """True when the MGF is finite in a right neighborhood of 0."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    # --- derived ----------------------------------------------------------
    def sf(self, x):
        return 1.0 - self.cdf(x)

    def pdf(self, x):
        raise NotImplementedError

    def sample(self, stream: RngStream) -> float:
        return float(self.quantile(stream.uniform()))

    def sample_n(self, stream: RngStream, n: int) -> np.ndarray:
        return np.asarray(self.quantile(stream.uniforms(n)), dtype=float)

    def sample_conditional(self, a: float, b: float, stream: RngStream) -> float:
        """Draw X conditional on X in (a, b]; b may be +inf."""
        return float(self._conditional_quantiles(a, b, np.array([stream.uniform()]))[0])

    def sample_conditional_n(self, a: float, b: float, stream: RngStream,
                             n: int) -> np.ndarray:
        return self._conditional_quantiles(a, b, stream.uniforms(n))

    def _conditional_quantiles(self, a, b, u):
        fa = float(self.cdf(a))
        fb = 1.0 if b == math.inf else float(self.cdf(b))
        mass = fb - fa
        if mass <= 0.0:
            raise ZeroMassInterval(
                f"{self.family}: no mass on ({a}, {b}]")
        x = np.asarray(self.quantile(fa + u * mass), dtype=float)
        # inversion is exact up to rounding; keep draws inside (a, b]
        np.clip(x, np.nextafter(a, math.inf), b, out=x)
        return x

    def sample_equilibrium(self, stream: RngStream) -> float:
        """Draw from the equilibrium law with density sf(t)/mean."""
        return self.eq_quantile(stream.uniform())

    def eq_quantile(self, u: float) -> float:
        # bisection on F_eq(x) = 1 - integrated_tail(x)/mean
        m = self.mean()
        target = (1.0 - u) * m
        lo, hi = 0.0, max(1.0, 2.0 * m)
        while self.integrated_tail(hi) > target:
            hi *= 2.0
            if hi > 1e9 * max(m, 1.0):  # pragma: no cover - defensive
                break
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.integrated_tail(mid) > target:
                lo = mid
            else:
                hi = mid
            if hi - lo <= _BISECT_TOL * max(1.0, hi):
                break
        return 0.5 * (lo + hi)

    def sample_tilted(self, theta: float, stream: RngStream) -> float:
        """Draw from dG_theta proportional to exp(theta x) dG(x)."""
        if theta == 0.0:
            return self.sample(stream)
        if self.log_mgf(theta) == math.inf:
            raise DivergentTilt(f"{self.family}: MGF diverges at {theta}")
        if theta < 0.0:
            return self._tilted_neg_ar(theta, stream)
        return self._tilted_pos(theta, stream)

    def _tilted_neg_ar(self, theta: float, stream: RngStream) -> float:
        # exp(theta x) <= exp(theta * support_min) for theta < 0
        lo = self.support_min()
        for _ in range(_AR_CAP):
            x = self.sample(stream)
            if stream.uniform() <= math.exp(theta * (x - lo)):
                return x
        raise DivergentTilt(f"{self.family}: tilt A/R failed at {theta}")

    def _tilted_pos(self, theta: float, stream: RngStream) -> float:
        # generic numeric inversion of the tilted CDF; rarely exercised
        # (families on the hot path override with closed forms)
        psi = self.log_mgf(theta)
        u = stream.uniform()

        def integrand(t):
            p = self.pdf(t)
            if p <= 0.0:
                return 0.0
            lg = theta * t - psi + math.log(p)
            return math.exp(min(lg, 700.0)) if lg > -745.0 else 0.0

        def tilted_cdf(x):
            val, _ = integrate.quad(integrand, self.support_min(), x, limit=200)
            return val

        lo, hi = self.support_min(), max(1.0, 2.0 * self.mean())
        while tilted_cdf(hi) < u:
            hi *= 2.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if tilted_cdf(mid) < u:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def scaled(self, s: int) -> "Distribution":
        return self if s == 1 else _Scaled(self, s)

    def to_config(self) -> dict:
        return {"family": self.family, "params": self.params(),
                "scale": self.scale}

    def __repr__(self):
        p = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        s = f", scale={self.scale}" if self.scale != 1 else ""
        return f"{self.family}({p}{s})"


@dataclass(frozen=True, repr=False)
class Exponential(Distribution):
    rate: float
    family = "exponential"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, 0.0, -np.expm1(-self.rate * x))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, 1.0, np.exp(-self.rate * x))

    def pdf(self, x):
        return self.rate * math.exp(-self.rate * x) if x > 0 else 0.0

    def quantile(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def mean(self):
        return 1.0 / self.rate

    def log_mgf(self, theta):
        if theta >= self.rate:
            return math.inf
        return -math.log1p(-theta / self.rate)

    def integrated_tail(self, h):
        if h <= 0.0:
            return 1.0 / self.rate
        return math.exp(-self.rate * h) / self.rate

    @property
    def light_tailed(self):
        return True

    def eq_quantile(self, u):
        # memorylessness: equilibrium law equals the law itself
        return float(self.quantile(u))

    def _tilted_pos(self, theta, stream):
        return Exponential(self.rate - theta).sample(stream)

    def _tilted_neg_ar(self, theta, stream):
        return Exponential(self.rate - theta).sample(stream)

    def params(self):
        return {"rate": self.rate}


@dataclass(frozen=True, repr=False)
class Gamma(Distribution):
    shape: float
    rate: float
    family = "gamma"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.gammainc(self.shape, self.rate * np.maximum(x, 0.0))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return special.gammaincc(self.shape, self.rate * np.maximum(x, 0.0))

    def pdf(self, x):
        if x <= 0:
            return 0.0
        k, lam = self.shape, self.rate
        return math.exp(k * math.log(lam) + (k - 1) * math.log(x)
                        - lam * x - math.lgamma(k))

    def quantile(self, u):
        return special.gammaincinv(self.shape, np.asarray(u, dtype=float)) / self.rate

    def mean(self):
        return self.shape / self.rate

    def log_mgf(self, theta):
        if theta >= self.rate:
            return math.inf
        return -self.shape * math.log1p(-theta / self.rate)

    def integrated_tail(self, h):
        if h <= 0.0:
            return self.mean()
        t = self.rate * h
        return (self.mean() * special.gammaincc(self.shape + 1.0, t)
                - h * special.gammaincc(self.shape, t))

    @property
    def light_tailed(self):
        return True

    def _tilted_pos(self, theta, stream):
        return Gamma(self.shape, self.rate - theta).sample(stream)

    def _tilted_neg_ar(self, theta, stream):
        return Gamma(self.shape, self.rate - theta).sample(stream)

    def params(self):
        return {"shape": self.shape, "rate": self.rate}


@dataclass(frozen=True, repr=False)
class Uniform(Distribution):
    low: float
    high: float
    family = "uniform"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.low) / (self.high - self.low), 0.0, 1.0)

    def pdf(self, x):
        return 1.0 / (self.high - self.low) if self.low < x < self.high else 0.0

    def quantile(self, u):
        return self.low + np.asarray(u, dtype=float) * (self.high - self.low)

    def mean(self):
        return 0.5 * (self.low + self.high)

    def support_min(self):
        return self.low

    def support_max(self):
        return self.high

    def log_mgf(self, theta):
        if theta == 0.0:
            return 0.0
        a, b = self.low, self.high
        # log((e^{tb} - e^{ta}) / (t(b-a))), stable at either sign
        return theta * a + math.log(math.expm1(theta * (b - a))
                                    / (theta * (b - a))) if theta > 0 else \
            theta * b + math.log(math.expm1(-theta * (b - a))
                                 / (-theta * (b - a)))

    def integrated_tail(self, h):
        a, b = self.low, self.high
        if h <= a:
            return (a - h) + 0.5 * (b - a)
        if h >= b:
            return 0.0
        return (b - h) ** 2 / (2.0 * (b - a))

    @property
    def light_tailed(self):
        return True

    def eq_quantile(self, u):
        # F_eq piecewise: linear below `low`, quadratic on [low, high]
        a, b, m = self.low, self.high, self.mean()
        if a > 0 and u <= a / m:
            return u * m
        # solve (a - h) + (b-h)^2/(2(b-a)) ... via the quadratic branch
        t = (1.0 - u) * m
        return b - math.sqrt(2.0 * (b - a) * t)

    def _tilted_pos(self, theta, stream):
        return self._tilted_inv(theta, stream)

    def _tilted_neg_ar(self, theta, stream):
        return self._tilted_inv(theta, stream)

    def _tilted_inv(self, theta, stream):
        a, b = self.low, self.high
        u = stream.uniform()
        # inversion of e^{tx} density on (a, b)
        return a + math.log1p(u * math.expm1(theta * (b - a))) / theta

    def params(self):
        return {"low": self.low, "high": self.high}


@dataclass(frozen=True, repr=False)
class Deterministic(Distribution):
    value: float
    family = "deterministic"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.value, 1.0, 0.0)

    def quantile(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.value)

    def mean(self):
        return self.value

    def support_min(self):
        return self.value

    def support_max(self):
        return self.value

    def log_mgf(self, theta):
        return theta * self.value

    def integrated_tail(self, h):
        return max(self.value - h, 0.0)

    @property
    def light_tailed(self):
        return True

    def sample_conditional(self, a, b, stream):
        if a < self.value <= b:
            stream.uniform()  # consume for reproducible draw accounting
            return self.value
        raise ZeroMassInterval(f"deterministic({self.value}): no mass on ({a}, {b}]")

    def sample_conditional_n(self, a, b, stream, n):
        if a < self.value <= b:
            stream.uniforms(n)
            return np.full(n, self.value)
        raise ZeroMassInterval(f"deterministic({self.value}): no mass on ({a}, {b}]")

    def eq_quantile(self, u):
        return u * self.value

    def sample_tilted(self, theta, stream):
        stream.uniform()
        return self.value

    def params(self):
        return {"value": self.value}


@dataclass(frozen=True, repr=False)
class LogNormal(Distribution):
    mu: float
    sigma: float
    family = "lognormal"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0.0, x, 1.0)
        return np.where(x > 0.0,
                        special.ndtr((np.log(safe) - self.mu) / self.sigma), 0.0)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        safe = np.where(x > 0.0, x, 1.0)
        return np.where(x > 0.0,
                        special.ndtr(-(np.log(safe) - self.mu) / self.sigma), 1.0)

    def pdf(self, x):
        if x <= 0:
            return 0.0
        z = (math.log(x) - self.mu) / self.sigma
        return math.exp(-0.5 * z * z) / (x * self.sigma * math.sqrt(2 * math.pi))

    def quantile(self, u):
        return np.exp(self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float)))

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma ** 2)

    def log_mgf(self, theta):
        if theta > 0.0:
            return math.inf
        if theta == 0.0:
            return 0.0
        return _log_mgf_quad(self, theta)

    def integrated_tail(self, h):
        if h <= 0.0:
            return self.mean()
        z = (math.log(h) - self.mu) / self.sigma
        return (self.mean() * special.ndtr(self.sigma - z)
                - h * special.ndtr(-z))

    @property
    def light_tailed(self):
        return False

    def params(self):
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True, repr=False)
class Weibull(Distribution):
    shape: float
    scale_param: float
    family = "weibull"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return -np.expm1(-np.power(np.maximum(x, 0.0) / self.scale_param, self.shape))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-np.power(np.maximum(x, 0.0) / self.scale_param, self.shape))

    def pdf(self, x):
        if x <= 0:
            return 0.0
        k, lam = self.shape, self.scale_param
        t = (x / lam) ** k
        return (k / lam) * (x / lam) ** (k - 1.0) * math.exp(-t)

    def quantile(self, u):
        return self.scale_param * np.power(-np.log1p(-np.asarray(u, dtype=float)),
                                           1.0 / self.shape)

    def mean(self):
        return self.scale_param * math.gamma(1.0 + 1.0 / self.shape)

    def log_mgf(self, theta):
        if theta == 0.0:
            return 0.0
        if theta > 0.0 and self.shape < 1.0:
            return math.inf
        if theta > 0.0 and self.shape == 1.0:
            return Exponential(1.0 / self.scale_param).log_mgf(theta)
        return _log_mgf_quad(self, theta)

    def integrated_tail(self, h):
        k, lam = self.shape, self.scale_param
        if h <= 0.0:
            return self.mean()
        t = (h / lam) ** k
        return (lam / k) * math.gamma(1.0 / k) * special.gammaincc(1.0 / k, t)

    @property
    def light_tailed(self):
        return self.shape >= 1.0

    def params(self):
        return {"shape": self.shape, "scale": self.scale_param}


@dataclass(frozen=True, repr=False)
class Pareto(Distribution):
    alpha: float
    xm: float
    family = "pareto"

    def __post_init__(self):
        if self.alpha <= 1.0:
            raise ValueError("pareto needs alpha > 1 for a finite mean")

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.xm, 0.0, 1.0 - np.power(self.xm / np.maximum(x, self.xm), self.alpha))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.xm, 1.0, np.power(self.xm / np.maximum(x, self.xm), self.alpha))

    def pdf(self, x):
        if x < self.xm:
            return 0.0
        return self.alpha * self.xm ** self.alpha / x ** (self.alpha + 1.0)

    def quantile(self, u):
        return self.xm * np.power(1.0 - np.asarray(u, dtype=float), -1.0 / self.alpha)

    def mean(self):
        return self.alpha * self.xm / (self.alpha - 1.0)

    def support_min(self):
        return self.xm

    def log_mgf(self, theta):
        if theta > 0.0:
            return math.inf
        if theta == 0.0:
            return 0.0
        return _log_mgf_quad(self, theta)

    def integrated_tail(self, h):
        if h <= self.xm:
            return (self.xm - h) + self.xm / (self.alpha - 1.0)
        return self.xm ** self.alpha * h ** (1.0 - self.alpha) / (self.alpha - 1.0)

    @property
    def light_tailed(self):
        return False

    def params(self):
        return {"alpha": self.alpha, "xm": self.xm}


class _Scaled(Distribution):
    """Law of X/s for a base distribution X and integer divisor s >= 1."""

    def __init__(self, base: Distribution, s: int):
        if isinstance(base, _Scaled):  # collapse nesting
            s = s * base.scale
            base = base.base
        self.base = base
        self.scale = int(s)
        self.family = base.family

    def cdf(self, x):
        return self.base.cdf(np.asarray(x, dtype=float) * self.scale)

    def sf(self, x):
        return self.base.sf(np.asarray(x, dtype=float) * self.scale)

    def pdf(self, x):
        return self.scale * self.base.pdf(x * self.scale)

    def quantile(self, u):
        return self.base.quantile(u) / self.scale

    def mean(self):
        return self.base.mean() / self.scale

    def support_min(self):
        return self.base.support_min() / self.scale

    def support_max(self):
        return self.base.support_max() / self.scale

    def log_mgf(self, theta):
        return self.base.log_mgf(theta / self.scale)

    def integrated_tail(self, h):
        return self.base.integrated_tail(h * self.scale) / self.scale

    @property
    def light_tailed(self):
        return self.base.light_tailed

    def eq_quantile(self, u):
        return self.base.eq_quantile(u) / self.scale

    def sample_tilted(self, theta, stream):
        return self.base.sample_tilted(theta / self.scale, stream) / self.scale

    def sample_conditional(self, a, b, stream):
        hi = b * self.scale if b != math.inf else math.inf
        return self.base.sample_conditional(a * self.scale, hi, stream) / self.scale

    def sample_conditional_n(self, a, b, stream, n):
        hi = b * self.scale if b != math.inf else math.inf
        return self.base.sample_conditional_n(a * self.scale, hi, stream, n) / self.scale

    def params(self):
        return self.base.params()


def _log_mgf_quad(dist: Distribution, theta: float) -> float:
    def integrand(x):
        p = dist.pdf(x)
        if p <= 0.0:
            return 0.0
        lg = theta * x + math.log(p)
        # log-space guard: the product decays even where exp(theta*x) alone
        # would overflow
        return math.exp(min(lg, 700.0)) if lg > -745.0 else 0.0

    val, _ = integrate.quad(integrand, dist.support_min(), math.inf, limit=200)
    return math.log(val)


_FAMILIES = {
    "exponential": (Exponential, ("rate",)),
    "gamma": (Gamma, ("shape", "rate")),
    "erlang": (Gamma, ("shape", "rate")),
    "uniform": (Uniform, ("low", "high")),
    "deterministic": (Deterministic, ("value",)),
    "lognormal": (LogNormal, ("mu", "sigma")),
    "weibull": (Weibull, ("shape", "scale")),
    "pareto": (Pareto, ("alpha", "xm")),
}


def from_config(cfg: dict) -> Distribution:
    """Build a distribution from {"family", "params", "scale"?}."""
    from .errors import ConfigError
    if not isinstance(cfg, dict) or "family" not in cfg:
        raise ConfigError("distribution config needs a 'family' key")
    fam = cfg["family"]
    if fam not in _FAMILIES:
        raise ConfigError(f"unknown distribution family '{fam}'")
    cls, names = _FAMILIES[fam]
    params = dict(cfg.get("params", {}))
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigError(f"{fam}: missing parameter(s) {missing}")
    extra = [k for k in params if k not in names]
    if extra:
        raise ConfigError(f"{fam}: unknown parameter(s) {extra}")
    args = [float(params[n]) for n in names]
    dist = cls(*args)
    return dist.scaled(int(cfg.get("scale", 1)))


# ---------------------------------------------------------------------------
# Tilt context: drift margin, tilt root, heavy-tail truncation
# ---------------------------------------------------------------------------

@dataclass
class TiltContext:
    """Everything the arrival walk needs about the interarrival law.

    The walk increments are Y = (mu - epsilon) - X with X the (scaled)
    interarrival time; eta > 0 is the root of psi_Y.  In the heavy-tail
    case the walk runs on X ^ b (truncated), with E[X ^ b] - epsilon'
    = mu - epsilon, and eta solves the truncated-walk root instead.
    """

    dist: Distribution
    mu: float
    epsilon: float
    eta: float
    truncation_b: float | None = None
    epsilon_prime: float | None = None

    @property
    def slope(self) -> float:
        return self.mu - self.epsilon

    @property
    def heavy_tail(self) -> bool:
        return self.truncation_b is not None


def psi_walk(dist: Distribution, mu: float, epsilon: float, theta: float) -> float:
    """Log-MGF of the walk increment Y = (mu - epsilon) - X at theta."""
    return theta * (mu - epsilon) + dist.log_mgf(-theta)


def solve_eta(dist: Distribution, mu: float, epsilon: float,
              *, _psi=None) -> float:
    """Positive root of psi_Y, located by bracket expansion + bisection.

    Raises NoRoot when no sign change is found up to eta = 1e6 (reduce
    epsilon, or the interarrival law is degenerate).
    """
    if not (0.0 < epsilon < mu):
        raise NoRoot(f"need 0 < epsilon < mu, got epsilon={epsilon}, mu={mu}")
    psi = _psi if _psi is not None else (
        lambda t: psi_walk(dist, mu, epsilon, t))
    hi = 1e-6
    while psi(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise NoRoot("no positive tilt root below 1e6; reduce epsilon "
                         "(deterministic interarrivals never have one)")
    lo = hi / 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v = psi(mid)
        if abs(v) <= 1e-10:
            return mid
        if v < 0.0:
            lo = mid
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    if abs(psi(root)) > 1e-10:
        raise NoRoot("bisection failed to reach the tilt-root tolerance")
    return root


def log_mgf_truncated(dist: Distribution, theta: float, b: float) -> float:
    """log E[exp(theta (X ^ b))]: continuous part by quadrature + atom at b."""
    lo = dist.support_min()
    if b <= lo:
        return theta * b
    cont, _ = integrate.quad(lambda x: math.exp(theta * x) * dist.pdf(x),
                             lo, b, limit=200)
    atom = math.exp(theta * b) * float(dist.sf(b))
    return math.log(cont + atom)


def solve_truncation(dist: Distribution, mu: float, epsilon: float) -> TiltContext:
    """Heavy-tail context: choose b with E[X ^ b] = mu - epsilon/2.

    Since E[X ^ b] = mu - integrated_tail(b), b solves
    integrated_tail(b) = epsilon/2, by bisection with a monotone bracket.
    epsilon' = epsilon/2, and eta solves the truncated-walk root.
    """
    target = 0.5 * epsilon
    lo = dist.support_min()
    hi = max(2.0 * mu, lo + 1.0)
    while dist.integrated_tail(hi) > target:
        hi *= 2.0
        if hi > 1e12:
            raise NoRoot("truncation bracket expansion failed")
    f_lo, f_hi = dist.integrated_tail(lo), dist.integrated_tail(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = dist.integrated_tail(mid)
        # the bracket must stay monotone: tail(lo) >= target >= tail(hi)
        assert f_lo >= val >= f_hi, "integrated tail must be nonincreasing"
        if val > target:
            lo, f_lo = mid, val
        else:
            hi, f_hi = mid, val
        if abs(val - target) <= 1e-10:
            break
    b = 0.5 * (lo + hi)
    eps_prime = 0.5 * epsilon
    eta_b = solve_eta(
        dist, mu, epsilon,
        _psi=lambda t: t * (mu - epsilon) + log_mgf_truncated(dist, -t, b))
    return TiltContext(dist=dist, mu=mu, epsilon=epsilon, eta=eta_b,
                       truncation_b=b, epsilon_prime=eps_prime)


def tilted_quantile_fn(dist: Distribution, theta: float):
    """Vectorized quantile of the theta-tilted law, or None when no closed
    form exists (callers fall back to scalar acceptance-rejection)."""
    if theta == 0.0:
        return dist.quantile
    if isinstance(dist, _Scaled):
        inner = tilted_quantile_fn(dist.base, theta / dist.scale)
        if inner is None:
            return None
        s = dist.scale
        return lambda u: inner(u) / s
    if isinstance(dist, Exponential) and theta < dist.rate:
        return Exponential(dist.rate - theta).quantile
    if isinstance(dist, Gamma) and theta < dist.rate:
        return Gamma(dist.shape, dist.rate - theta).quantile
    if isinstance(dist, Uniform):
        a, span = dist.low, dist.high - dist.low
        e = math.expm1(theta * span)
        return lambda u: a + np.log1p(np.asarray(u, dtype=float) * e) / theta
    if isinstance(dist, Deterministic):
        v = dist.value
        return lambda u: np.full_like(np.asarray(u, dtype=float), v)
    return None


def make_tilt_context(dist: Distribution, epsilon: float | None = None) -> TiltContext:
    """Light- or heavy-tail context as dictated by the interarrival family."""
    mu = dist.mean()
    eps = mu / 5.0 if epsilon is None else epsilon
    if dist.light_tailed:
        return TiltContext(dist=dist, mu=mu, epsilon=eps,
                           eta=solve_eta(dist, mu, eps))
    return solve_truncation(dist, mu, eps)
