"""Backward simulation of i.i.d. service times with boundary-exceedance records.

The service sequence {V_n} is simulated jointly with the record times at
which V_n exceeds the growing boundary (n - anchor) * slope.  Records are
drawn first by inverting their exact conditional law through a sandwich of
computable upper/lower bounds on the infinite product of non-exceedance
probabilities; the remaining values are then filled in conditionally below
the boundary.  Once a block reports "no further record", every later index
is certified to sit below the boundary anchored at that block's start --
exactly the property the arrival sampler needs to terminate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .distributions import Distribution, Exponential, TiltContext
from .errors import GuardViolation, IterationCap
from .rng import RngStream

INFINITY = math.inf

_RECORD_ITER_CAP = 10 ** 7
# 1 - p >= exp(-2p) holds for p <= ~0.7968; the lower bound of the sandwich
# is only activated once the record probability has dropped to 1/2.
_SANDWICH_P_MAX = 0.5


def record_exceedance_prob(dist: Distribution, slope: float, h: int,
                           cap_gap: float = INFINITY) -> float:
    """P(V > h*slope | V <= h*slope + cap_gap*slope), the record probability
    at offset h from the block anchor.  cap_gap = inf gives the unconditioned
    first-block form P(V > h*slope)."""
    bound = h * slope
    if cap_gap == INFINITY:
        return float(dist.sf(bound))
    denom = float(dist.cdf(bound + cap_gap * slope))
    if denom <= 0.0:
        # conditioning interval below the support: a record is forced iff
        # the boundary itself is below the support
        return 1.0 if bound < dist.support_min() else 0.0
    p = 1.0 - float(dist.cdf(bound)) / denom
    return min(max(p, 0.0), 1.0)


def _conditional_tail_integral(dist: Distribution, a: float, d: float) -> float:
    """Integral over [a, inf) of P(V > v | V <= v + d); d in time units."""
    if d == INFINITY:
        return dist.integrated_tail(a)
    if isinstance(dist, Exponential):
        lam = dist.rate
        w0 = math.exp(-lam * (a + d))
        return -(math.expm1(lam * d) / lam) * math.log1p(-w0)

    def phi(v):
        denom = float(dist.cdf(v + d))
        if denom <= 0.0:
            return 1.0
        return max(0.0, (denom - float(dist.cdf(v))) / denom)

    vmax = dist.support_max()
    with warnings.catch_warnings():
        # the requested tolerance is aggressive; quad's roundoff warning is
        # informational (achieved accuracy is far below what the bound needs)
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if math.isfinite(vmax):
            # phi vanishes once the boundary passes the support
            if a >= vmax:
                return 0.0
            val, _ = integrate.quad(phi, a, vmax, limit=200,
                                    points=[max(a, vmax - d)] if vmax - d > a else None,
                                    epsabs=1e-14, epsrel=1e-12)
        else:
            val, _ = integrate.quad(phi, a, math.inf, limit=200,
                                    epsabs=1e-14, epsrel=1e-12)
    return max(val, 0.0)


@lru_cache(maxsize=200_000)
def _tail_bound_cached(dist: Distribution, slope: float, h: int,
                       cap_gap: float) -> float:
    d = cap_gap * slope if cap_gap != INFINITY else INFINITY
    integral = _conditional_tail_integral(dist, h * slope, d)
    return math.exp(-2.0 * integral / slope)


def record_tail_lower_bound(dist: Distribution, slope: float, h: int,
                            cap_gap: float = INFINITY) -> float:
    """Lower bound on P(no record beyond offset h): exp of minus twice the
    conditional integrated tail from h*slope, over the slope."""
    try:
        return _tail_bound_cached(dist, slope, int(h), float(cap_gap))
    except TypeError:    # unhashable distribution wrapper
        d = cap_gap * slope if cap_gap != INFINITY else INFINITY
        integral = _conditional_tail_integral(dist, h * slope, d)
        return math.exp(-2.0 * integral / slope)


def sample_next_record(dist: Distribution, slope: float, prev_offset: int,
                       stream: RngStream, cap_gap: float = INFINITY) -> float:
    """Next record offset after prev_offset, or INFINITY if none ever occurs.

    Inversion of the exact law: U is compared against the decreasing partial
    products g_h = prod(1 - p(i)) and their certified lower bounds
    f_h = g_h * u(h).  The loop extends h while f_h < U < g_h; exiting below
    returns INFINITY, exiting above returns the offset h.  The lower bound is
    exact only where the remaining record probabilities stay <= 1/2, so it is
    switched on at that point; before then the loop runs pure inversion on g,
    which cannot declare INFINITY but is always correct.
    """
    u_rv = stream.uniform()
    h = prev_offset
    g = 1.0
    activated = False
    for _ in range(_RECORD_ITER_CAP):
        h += 1
        g *= 1.0 - record_exceedance_prob(dist, slope, h, cap_gap)
        p_next = record_exceedance_prob(dist, slope, h + 1, cap_gap)
        if p_next <= _SANDWICH_P_MAX:
            activated = True
            f = g * record_tail_lower_bound(dist, slope, h, cap_gap)
        else:
            if activated:
                raise GuardViolation(
                    "record probability rose past 1/2 after the sandwich "
                    "lower bound was activated")
            f = 0.0
        if not (f < u_rv < g):
            return INFINITY if u_rv <= f else h
    raise IterationCap("record sandwich did not resolve after "
                       f"{_RECORD_ITER_CAP} refinements")


@dataclass
class ServiceBlock:
    start: int                 # block anchor J_k(0)
    cap_start: float           # previous anchor (record value cap); -inf disables
    records: list[int] = field(default_factory=list)  # absolute record indices
    gamma: int | None = None   # draw count at which INFINITY came back
    jumped: bool = False       # opened by an anchor jump, not by a record

    @property
    def cap_gap(self) -> float:
        if self.cap_start == -math.inf:
            return INFINITY
        return self.start - self.cap_start


@dataclass
class ServiceBlocks:
    """Snapshot of the simulated prefix of {V_n} plus its record structure."""

    values: np.ndarray          # values[i] is V_{i+1}
    blocks: list[ServiceBlock]
    boundary_slope: float

    @property
    def block_starts(self) -> list[int]:
        return [b.start for b in self.blocks]

    def value(self, n: int) -> float:
        return float(self.values[n - 1])

    def next_start_at_or_after(self, q: int) -> int:
        for s in self.block_starts:
            if s >= q:
                return s
        raise IterationCap("pre-generated service blocks exhausted; "
                           "generate more blocks or pass a live ServiceProcess")


class ServiceProcess:
    """Lazy generator of the service sequence and its record blocks.

    Blocks are opened and closed on demand: ``next_start_at_or_after(q)``
    advances the chain until a block anchor >= q exists.  When the chain
    exhausts (a block closes recordless, after which every subsequent
    natural block would be recordless too), a fresh block is opened
    directly at the requested index, conditioning on the certificate
    already in force.
    """

    def __init__(self, dist: Distribution, slope: float, stream: RngStream):
        self.dist = dist
        self.slope = slope
        self.stream = stream
        self._values: list[float] = [dist.sample(stream)]  # V_1, unconditioned
        self.blocks: list[ServiceBlock] = [ServiceBlock(start=1, cap_start=-math.inf)]
        self._open: ServiceBlock | None = self.blocks[0]
        self._hunt_offset = 0          # record-hunt position within open block
        self._exhausted_anchor: int | None = None

    # -- value bookkeeping --------------------------------------------------
    @property
    def filled_through(self) -> int:
        return len(self._values)

    def value(self, n: int) -> float:
        assert 1 <= n <= self.filled_through, "value requested beyond frontier"
        return self._values[n - 1]

    def values_array(self, n: int) -> np.ndarray:
        assert n <= self.filled_through
        return np.asarray(self._values[:n])

    def _fill_below_boundary(self, lo: int, hi: int, anchor: int) -> None:
        """Draw V_n | V_n <= (n - anchor)*slope for n in (lo, hi]."""
        count = hi - lo
        if count <= 0:
            return
        n_arr = np.arange(lo + 1, hi + 1, dtype=float)
        bounds = (n_arr - anchor) * self.slope
        fb = np.asarray(self.dist.cdf(bounds), dtype=float)
        if not (fb > 0.0).all():
            raise GuardViolation("conditional fill hit a zero-mass boundary")
        u = self.stream.uniforms(count)
        vals = np.asarray(self.dist.quantile(u * fb), dtype=float)
        np.minimum(vals, bounds, out=vals)   # guard rounding at the boundary
        self._values.extend(vals.tolist())

    def _draw_record_value(self, block: ServiceBlock, offset: int) -> float:
        lo = offset * self.slope
        hi = math.inf if block.cap_gap == INFINITY else (offset + block.cap_gap) * self.slope
        return self.dist.sample_conditional(lo, hi, self.stream)

    # -- block machinery ------------------------------------------------------
    def _close_open_block(self) -> ServiceBlock:
        block = self._open
        assert block is not None
        draws = 0
        while True:
            off = sample_next_record(self.dist, self.slope, self._hunt_offset,
                                     self.stream, block.cap_gap)
            draws += 1
            if off == INFINITY:
                block.gamma = draws
                break
            absolute = block.start + int(off)
            self._fill_below_boundary(self.filled_through, absolute - 1, block.start)
            self._values.append(self._draw_record_value(block, int(off)))
            block.records.append(absolute)
            self._hunt_offset = int(off)
        self._open = None
        if not block.records:
            self._exhausted_anchor = block.start
        return block

    def _open_block(self, start: int, cap_start: float, jumped: bool = False) -> None:
        assert self._open is None
        block = ServiceBlock(start=start, cap_start=cap_start, jumped=jumped)
        self.blocks.append(block)
        self._open = block
        self._hunt_offset = 0

    def next_start_at_or_after(self, q: int) -> int:
        """Smallest block anchor >= q, extending or jumping as needed."""
        for b in self.blocks:
            if b.start >= q:
                return b.start
        while True:
            if self._open is not None:
                closed = self._close_open_block()
                if closed.records:
                    nxt = closed.records[-1]
                    self._open_block(nxt, cap_start=closed.start)
                    if nxt >= q:
                        return nxt
                    continue
            # chain exhausted: certificate anchored at _exhausted_anchor
            anchor = self._exhausted_anchor
            assert anchor is not None
            self._fill_below_boundary(self.filled_through, q, anchor)
            self._open_block(q, cap_start=float(anchor), jumped=True)
            return q

    def snapshot(self) -> ServiceBlocks:
        return ServiceBlocks(values=np.asarray(self._values),
                             blocks=[ServiceBlock(b.start, b.cap_start,
                                                  list(b.records), b.gamma, b.jumped)
                                     for b in self.blocks],
                             boundary_slope=self.slope)


def generate_service_blocks(ctx: TiltContext, dist_service: Distribution,
                            blocks: int, stream: RngStream) -> ServiceBlocks:
    """Run the record construction for a fixed number of closed blocks."""
    assert blocks >= 1
    proc = ServiceProcess(dist_service, ctx.slope, stream)
    closed = 0
    while closed < blocks:
        blk = proc._close_open_block()
        closed += 1
        if closed < blocks:
            if blk.records:
                proc._open_block(blk.records[-1], cap_start=blk.start)
            else:
                # recordless closure ends the natural chain; later blocks
                # would certify nothing new
                break
    return proc.snapshot()


def verify_service_blocks(sb: ServiceBlocks) -> list[str]:
    """Exhaustive structural checks; returns human-readable violations."""
    bad: list[str] = []
    w = sb.boundary_slope
    n_filled = len(sb.values)
    starts = sb.block_starts
    if any(b <= a for a, b in zip(starts, starts[1:])):
        bad.append("block starts not strictly increasing")
    for k, blk in enumerate(sb.blocks):
        rec = set(blk.records)
        nxt_start = starts[k + 1] if k + 1 < len(starts) else n_filled
        for n in range(blk.start + 1, min(nxt_start, n_filled) + 1):
            v = sb.value(n)
            if n in rec:
                lo = (n - blk.start) * w
                if not v > lo:
                    bad.append(f"record V_{n}={v} not above boundary {lo}")
                if blk.cap_gap != INFINITY:
                    hi = (n - blk.cap_start) * w
                    if not v <= hi + 1e-12:
                        bad.append(f"record V_{n}={v} above cap {hi}")
            else:
                if not v <= (n - blk.start) * w + 1e-12:
                    bad.append(f"V_{n}={v} exceeds boundary "
                               f"{(n - blk.start) * w} of block {k}")
        if k + 1 < len(sb.blocks) and not sb.blocks[k + 1].jumped:
            if blk.records and sb.blocks[k + 1].start != blk.records[-1]:
                bad.append(f"block {k + 1} start is not block {k}'s last record")
    return bad
