"""Backward simulation of stationary renewal arrivals.

The arrival times are produced through the negative-drift walk
S_n = n*(mu - epsilon) - (|A_{n+1}| - |A_1|), built segment by segment:
descents to new record levels are proposed from the nominal law, rare
rebounds are proposed under the exponentially tilted measure, and
acceptance-rejection with the change-of-measure identity
J(xi) = 1{U <= exp(-eta * S_{T_xi})} decides, without simulating an
infinite future, whether the walk ever climbs back by the barrier width m.
Once a block certifies "no rebound ever", the walk stays below its record
level forever, which pins down a certified index kappa_j beyond which no
earlier customer can matter.

Heavy-tailed interarrivals run the same machinery on the truncated gaps
X ^ b while emitting the untruncated gaps alongside, coupled pathwise.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .distributions import Distribution, TiltContext, tilted_quantile_fn
from .errors import IterationCap, PerfectQError
from .rng import RngStream
from .service import ServiceProcess, ServiceBlocks

_CHUNK = 64
_PROPOSAL_CAP = 10 ** 6
_TILTED_STEP_CAP = 10 ** 8


@dataclass
class WalkParams:
    """Tilt context plus the barrier width m (in scaled time units)."""

    tilt: TiltContext
    m: float
    counters: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.gaps = GapSampler(self.tilt)

    @property
    def heavy_tail(self) -> bool:
        return self.tilt.heavy_tail


class GapSampler:
    """Nominal and tilted draws of interarrival gaps.

    Returns pairs (y, x_raw): y is the walk increment (slope - effective
    gap) and x_raw the untruncated gap.  In the light-tailed case the
    effective gap equals the raw gap; in the heavy-tailed case the walk
    runs on x ^ b while the raw gap is emitted jointly.
    """

    def __init__(self, ctx: TiltContext):
        self.ctx = ctx
        self.dist = ctx.dist
        self.slope = ctx.slope
        self.eta = ctx.eta
        self.heavy = ctx.heavy_tail
        if self.heavy:
            b = ctx.truncation_b
            self.b = b
            # tilted mass of the atom {X ^ b = b}: exp(eta*(slope-b)) * P(X >= b)
            self.atom_p = math.exp(self.eta * (self.slope - b)) * float(self.dist.sf(b))
            self.cdf_b = float(self.dist.cdf(b))
            self._tilted_q = None
        else:
            self.b = None
            self._tilted_q = tilted_quantile_fn(self.dist, -self.eta)

    def nominal(self, stream: RngStream, n: int):
        x = self.dist.sample_n(stream, n)
        if self.heavy:
            eff = np.minimum(x, self.b)
            return self.slope - eff, x
        return self.slope - x, x

    def tilted(self, stream: RngStream, n: int):
        if not self.heavy:
            if self._tilted_q is not None:
                x = np.asarray(self._tilted_q(stream.uniforms(n)), dtype=float)
            else:
                x = np.array([self.dist.sample_tilted(-self.eta, stream)
                              for _ in range(n)])
            return self.slope - x, x
        return self._tilted_heavy(stream, n)

    def _tilted_heavy(self, stream: RngStream, n: int):
        """Tilted draw of X ^ b with the raw X recovered alongside:
        the atom at b is hit with its tilted mass and the raw gap is then
        redrawn conditional on X >= b under the nominal law; otherwise the
        continuous part is the negatively tilted law restricted below b."""
        eff = np.empty(n)
        raw = np.empty(n)
        at_atom = stream.uniforms(n) <= self.atom_p
        k_atom = int(at_atom.sum())
        if k_atom:
            eff[at_atom] = self.b
            u = stream.uniforms(k_atom)
            raw[at_atom] = np.asarray(
                self.dist.quantile(self.cdf_b + u * (1.0 - self.cdf_b)))
        todo = np.nonzero(~at_atom)[0]
        lo = self.dist.support_min()
        guard = 0
        while todo.size:
            guard += 1
            if guard > _PROPOSAL_CAP:
                raise IterationCap("tilted truncated-gap sampler stalled")
            u = stream.uniforms(todo.size)
            x = np.asarray(self.dist.quantile(u * self.cdf_b), dtype=float)
            acc = stream.uniforms(todo.size) <= np.exp(-self.eta * (x - lo))
            hit = todo[acc]
            eff[hit] = x[acc]
            raw[hit] = x[acc]
            todo = todo[~acc]
        return self.slope - eff, raw


@dataclass
class Path:
    """One walk segment: increments, raw gaps, running values from 0."""

    ys: np.ndarray
    raw: np.ndarray
    cum: np.ndarray

    @classmethod
    def empty(cls) -> "Path":
        z = np.empty(0)
        return cls(z, z, z)

    @property
    def end(self) -> float:
        return float(self.cum[-1]) if self.cum.size else 0.0

    @property
    def maxval(self) -> float:
        return float(self.cum.max()) if self.cum.size else 0.0

    def __len__(self):
        return len(self.ys)


def _propose_first_passage(params: WalkParams, stream: RngStream, *,
                           below: float | None = None,
                           above: float | None = None,
                           tilted: bool = False) -> Path:
    """Nominal or tilted path run to a strict first passage."""
    draw = params.gaps.tilted if tilted else params.gaps.nominal
    ys_parts, raw_parts, cum_parts = [], [], []
    s = 0.0
    steps = 0
    while True:
        y, x = draw(stream, _CHUNK)
        cs = s + np.cumsum(y)
        hit = np.nonzero(cs < below)[0] if below is not None else \
            np.nonzero(cs > above)[0]
        if hit.size:
            cut = int(hit[0]) + 1
            ys_parts.append(y[:cut])
            raw_parts.append(x[:cut])
            cum_parts.append(cs[:cut])
            return Path(np.concatenate(ys_parts), np.concatenate(raw_parts),
                        np.concatenate(cum_parts))
        ys_parts.append(y)
        raw_parts.append(x)
        cum_parts.append(cs)
        s = float(cs[-1])
        steps += _CHUNK
        if steps > _TILTED_STEP_CAP:
            raise IterationCap("first-passage proposal exceeded step cap "
                               "(misconfigured tilt?)")


def _propose_fixed(params: WalkParams, stream: RngStream, h: int) -> Path:
    y, x = (params.gaps.nominal(stream, h))
    return Path(y, x, np.cumsum(y))


def bernoulli_upcross(params: WalkParams, xi: float, stream: RngStream):
    """Bernoulli with success probability q(xi) = P(walk ever exceeds xi).

    Simulates the tilted walk to its first passage above xi and flips
    U <= exp(-eta * S_T): returns (1, path) where the path is distributed
    as the nominal walk conditioned on the up-crossing, or (0, None).
    xi = inf short-circuits to 0 (no simulation); xi < 0 is an immediate
    success with an empty path.
    """
    if xi == math.inf:
        return 0, None
    if xi < 0.0:
        return 1, Path.empty()
    params.counters["conrep_calls"] += 1
    path = _propose_first_passage(params, stream, above=xi, tilted=True)
    if stream.uniform() <= math.exp(-params.tilt.eta * path.end):
        return 1, path
    return 0, None


def segment_to_down_level(params: WalkParams, xi: float, gamma: float,
                          stream: RngStream) -> Path:
    """Nominal path to its first passage strictly below gamma (<= 0),
    conditioned on never exceeding xi, now or at any later time.

    Acceptance-rejection: propose the nominal descent, reject on a prefix
    above xi, then require the no-future-up-crossing Bernoulli to land 0.
    """
    assert gamma <= 0.0
    for _ in range(_PROPOSAL_CAP):
        path = _propose_first_passage(params, stream, below=gamma)
        if path.maxval > xi:
            params.counters["down_rejects"] += 1
            continue
        bit, _ = bernoulli_upcross(params, xi - path.end, stream)
        if bit == 0:
            return path
        params.counters["down_rejects"] += 1
    raise IterationCap("descent segment: proposal cap exceeded")


def segment_upcross_or_terminate(params: WalkParams, xi: float,
                                 stream: RngStream):
    """Decide whether the walk ever rebounds by m before exceeding xi.

    Race of two exact events per round: a tilted proposal to the first
    passage above m is accepted as the rebound path via
    U <= exp(-eta * S_{T_m}) and kept only if the inherited barrier is
    never crossed afterwards (Bernoulli 0); the complementary branch
    U > exp(-eta * S_{T_m}) has exactly probability P(T_m = inf) and
    declares termination.  Rounds that accept the rebound but fail the
    barrier check are discarded and retried, which restores the
    conditioning on the barrier event.

    Returns (1, path) to continue the record structure, or (0, None) to
    terminate the block.
    """
    eta = params.tilt.eta
    for _ in range(_PROPOSAL_CAP):
        path = _propose_first_passage(params, stream, above=params.m, tilted=True)
        if stream.uniform() > math.exp(-eta * path.end):
            return 0, None
        bit, _ = bernoulli_upcross(params, xi - path.end, stream)
        if bit == 0:
            return 1, path
        params.counters["race_rejects"] += 1
    raise IterationCap("rebound race: proposal cap exceeded")


def bridge_fixed_length(params: WalkParams, h: int, xi: float,
                        stream: RngStream) -> Path:
    """Exactly h nominal steps conditioned on never exceeding xi from now on."""
    assert h >= 0 and xi >= 0.0
    if h == 0:
        return Path.empty()
    for _ in range(_PROPOSAL_CAP):
        path = _propose_fixed(params, stream, h)
        if path.maxval > xi:
            params.counters["bridge_rejects"] += 1
            continue
        bit, _ = bernoulli_upcross(params, xi - path.end, stream)
        if bit == 0:
            return path
        params.counters["bridge_rejects"] += 1
    raise IterationCap("bridge segment: proposal cap exceeded")


# ---------------------------------------------------------------------------
# Block assembly
# ---------------------------------------------------------------------------

@dataclass
class ArrivalBlock:
    delta0: int               # walk index anchoring the block's record level
    deltas: list[int]         # descent record indices Delta_j(l), l = 1..alpha
    rebounds: list[int]       # rebound indices Gamma_j(l), l = 1..alpha-1
    alpha: int
    kappa: int                # certified customer index, a service-block start


@dataclass
class ArrivalBlocks:
    """Simulated walk, arrivals, and record structure after J blocks."""

    walk: np.ndarray            # S_0 .. S_N
    raw_gaps: np.ndarray        # untruncated gaps |A_{i+1}| - |A_i|
    a1: float                   # |A_1| (raw), equilibrium-distributed
    blocks: list[ArrivalBlock]
    slope: float
    truncation_b: float | None = None
    a1_trunc: float | None = None

    @property
    def kappas(self) -> list[int]:
        return [b.kappa for b in self.blocks]

    @property
    def heavy_tail(self) -> bool:
        return self.truncation_b is not None

    def arrival_magnitudes(self, count: int | None = None) -> np.ndarray:
        """|A_1| .. |A_count| from the raw gaps."""
        n = len(self.raw_gaps) + 1 if count is None else count
        out = np.empty(n)
        out[0] = self.a1
        out[1:] = self.a1 + np.cumsum(self.raw_gaps[:n - 1])
        return out

    def arrivals_signed(self, count: int | None = None) -> np.ndarray:
        return -self.arrival_magnitudes(count)

    def truncated_magnitudes(self, count: int | None = None) -> np.ndarray:
        """|A_1(b)| .. |A_count(b)|: the coupled truncated arrival times."""
        a1 = self.a1 if self.a1_trunc is None else self.a1_trunc
        n = len(self.raw_gaps) + 1 if count is None else count
        eff = self.slope - np.diff(self.walk[:n])
        out = np.empty(n)
        out[0] = a1
        out[1:] = a1 + np.cumsum(eff)
        return out


class ArrivalProcess:
    """Lazy block-by-block construction of the arrival walk and kappa_j's."""

    def __init__(self, params: WalkParams, service: ServiceProcess | ServiceBlocks,
                 stream: RngStream):
        self.params = params
        self.service = service
        self.stream = stream
        ctx = params.tilt
        self.a1 = ctx.dist.sample_equilibrium(stream)
        self.a1_trunc: float | None = None
        if ctx.heavy_tail:
            b = ctx.truncation_b
            if self.a1 <= b:
                self.a1_trunc = self.a1
            else:
                x = ctx.dist.sample_equilibrium(stream)
                while x > b:
                    x = ctx.dist.sample_equilibrium(stream)
                self.a1_trunc = x
        self.walk: list[float] = [0.0]
        self.raw_gaps: list[float] = []
        self.blocks: list[ArrivalBlock] = []
        self._barrier_abs = math.inf

    # current walk index
    @property
    def top(self) -> int:
        return len(self.walk) - 1

    def _append(self, path: Path) -> None:
        base = self.walk[-1]
        self.walk.extend((base + path.cum).tolist())
        self.raw_gaps.extend(path.raw.tolist())

    def extend_block(self) -> int:
        """Run one block: records until termination, then bridge to the next
        certified service anchor.  Returns kappa_j."""
        params, stream = self.params, self.stream
        anchor = self.top                     # Delta_j(0) = kappa_{j-1} - 1
        level = self.walk[anchor] - params.m
        deltas: list[int] = []
        rebounds: list[int] = []
        while True:
            cur = self.walk[self.top]
            gamma_rel = min(0.0, level - cur)
            xi_rel = self._barrier_abs - cur
            path = segment_to_down_level(params, xi_rel, gamma_rel, stream)
            self._append(path)
            deltas.append(self.top)
            cont, path2 = segment_upcross_or_terminate(
                params, self._barrier_abs - self.walk[self.top], stream)
            if not cont:
                break
            self._append(path2)
            rebounds.append(self.top)
        alpha = len(deltas)
        delta_alpha = deltas[-1]
        kappa = self.service.next_start_at_or_after(delta_alpha + 1)
        bridge = bridge_fixed_length(params, kappa - 1 - delta_alpha,
                                     params.m, stream)
        self._append(bridge)
        assert self.top == kappa - 1
        self._barrier_abs = self.walk[delta_alpha] + params.m
        blk = ArrivalBlock(delta0=anchor, deltas=deltas, rebounds=rebounds,
                           alpha=alpha, kappa=kappa)
        self.blocks.append(blk)
        return kappa

    def snapshot(self) -> ArrivalBlocks:
        ctx = self.params.tilt
        return ArrivalBlocks(
            walk=np.asarray(self.walk),
            raw_gaps=np.asarray(self.raw_gaps),
            a1=self.a1,
            blocks=[ArrivalBlock(b.delta0, list(b.deltas), list(b.rebounds),
                                 b.alpha, b.kappa) for b in self.blocks],
            slope=ctx.slope,
            truncation_b=ctx.truncation_b,
            a1_trunc=self.a1_trunc,
        )


def generate_arrival_blocks(params: WalkParams,
                            service: ServiceProcess | ServiceBlocks,
                            j_blocks: int, stream: RngStream) -> ArrivalBlocks:
    """Run Step-0 initialization plus j_blocks full blocks."""
    proc = ArrivalProcess(params, service, stream)
    for _ in range(j_blocks):
        proc.extend_block()
    return proc.snapshot()


def generate_arrival_blocks_heavy(params: WalkParams,
                                  service: ServiceProcess | ServiceBlocks,
                                  j_blocks: int, stream: RngStream) -> ArrivalBlocks:
    """Heavy-tail variant; params must carry a truncation context."""
    if not params.heavy_tail:
        raise PerfectQError("heavy-tail generation needs a truncation context")
    return generate_arrival_blocks(params, service, j_blocks, stream)


def verify_arrival_blocks(ab: ArrivalBlocks, m: float, atol: float = 1e-9) -> list[str]:
    """Exhaustive record/barrier/identity checks; returns violations."""
    bad: list[str] = []
    S = ab.walk
    n_walk = len(S) - 1
    # affine identity on the (effective) walk
    mags = ab.truncated_magnitudes()
    a1 = mags[0]
    n_idx = np.arange(1, len(mags))
    recon = a1 + n_idx * ab.slope - S[1:len(mags)]
    err = np.abs(mags[1:] - recon)
    if err.size and err.max() > atol:
        bad.append(f"affine identity violated, max err {err.max():.3g}")
    if ab.heavy_tail:
        raw = ab.arrival_magnitudes()
        eff_gaps = ab.slope - np.diff(S[:len(raw)])
        if np.any(ab.raw_gaps[:len(eff_gaps)] < eff_gaps - atol):
            bad.append("raw gap below truncated gap")
        if np.any(raw < ab.truncated_magnitudes() - atol):
            bad.append("raw arrival magnitude below truncated one")
        if ab.a1 <= ab.truncation_b and ab.a1_trunc != ab.a1:
            bad.append("a1 <= b but a1(b) != a1")
    prev_kappa = 1
    for j, blk in enumerate(ab.blocks):
        ref = S[blk.delta0]
        for l, d in enumerate(blk.deltas):
            if not S[d] <= ref - m + atol:
                bad.append(f"block {j}: S[Delta({l + 1})] above record level")
        for l, g in enumerate(blk.rebounds):
            if not S[g] >= S[blk.deltas[l]] + m - atol:
                bad.append(f"block {j}: rebound {l + 1} shorter than m")
        da = blk.deltas[-1]
        tail = S[da:n_walk + 1]
        if tail.size and tail.max() > S[da] + m + atol:
            bad.append(f"block {j}: walk exceeds certified barrier after "
                       f"Delta(alpha)")
        if blk.kappa < da + 1:
            bad.append(f"block {j}: kappa below Delta(alpha)+1")
        # certified arrival-side condition relative to kappa_{j-1}:
        # |A_n - A_{kappa_{j-1}}| >= (n - kappa_{j-1}) * slope for n >= kappa_j,
        # equivalently S[n-1] <= S[kappa_{j-1} - 1]
        base = prev_kappa - 1
        seg = S[blk.kappa - 1:n_walk + 1]
        if seg.size and seg.max() > S[base] + atol:
            bad.append(f"block {j}: certified condition fails beyond kappa")
        prev_kappa = blk.kappa
    return bad
