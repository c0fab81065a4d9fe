"""Exact rejection sampling of jump-diffusion bridges (unit diffusion).

A proposal consists of a compound-Poisson jump process plus a Brownian bridge
forced into the right endpoint.  It is accepted with probability
p1 * p2 * p3: two computable Bernoulli factors for the endpoint and jump
terms and a Poisson-coin factor for the path integral.  The accepted draw is
returned as a finite skeleton that can be extended consistently afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bridges import SegmentBridge, bb_bridge_at
from .coins import CoinPiece, CoinSpec, poisson_coin
from .models import ContractError, TransformedModel, Theta

__all__ = ["Skeleton", "propose_jumps", "jbea_bridge", "skeleton_fill",
           "AttemptCapError"]

ATTEMPT_CAP = 1_000_000


class AttemptCapError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# proposal jump process
# ---------------------------------------------------------------------------

def propose_jumps(rng: np.random.Generator, tm: TransformedModel,
                  interval: tuple[float, float], theta: Theta,
                  measure: str = "D") -> list[tuple[float, float]]:
    """Jump times and sizes from the proposal measure on the interval.

    ``measure`` is "D" (homogeneous Poisson with iid f0 sizes) or "F" (the
    same law exponentially tilted by c0 * sum |J_j|).
    """
    t_a, t_b = interval
    if measure == "D":
        pieces = getattr(tm, "proposal_rate_pieces", None)
        if pieces is not None:
            span = pieces(t_a, t_b, theta)
        else:
            span = [(t_a, t_b, tm.proposal_rate_bound(theta))]
        jumps = []
        for (p0, p1, rate) in span:
            if rate <= 0.0:
                continue
            n = rng.poisson(rate * (p1 - p0))
            for t in np.sort(p0 + (p1 - p0) * rng.random(n)):
                jumps.append((float(t), float(tm.f0_sample(rng, theta))))
        jumps.sort()
        return jumps
    if measure == "F":
        c0 = tm.c0(theta)
        if c0 is None:
            raise ContractError("Lipschitz proposal unavailable: alpha unbounded")
        rate = tm.proposal_rate_bound(theta) * math.exp(tm.f0_log_zeta(theta))
        n = rng.poisson(rate * (t_b - t_a))
        times = np.sort(t_a + (t_b - t_a) * rng.random(n))
        return [(float(t), float(tm.f0_sample_tilted(rng, theta))) for t in times]
    raise ValueError(f"unknown proposal measure '{measure}'")


# ---------------------------------------------------------------------------
# skeleton
# ---------------------------------------------------------------------------

@dataclass
class Skeleton:
    """Finite exact representation of one accepted bridge.

    ``bstar`` caches the Brownian backbone B* (from x to y - J); the bridge
    itself is B*(s) plus the accumulated jumps.  ``segments`` is set when the
    backbone was proposed with layers.
    """

    t_a: float
    t_b: float
    x: float
    y: float
    jumps: list[tuple[float, float]]
    bstar: dict
    psis: np.ndarray
    kappa: int
    m_i: float
    r_i: float
    attempts: int
    theta_values: np.ndarray
    segments: list | None = None
    stats: dict = field(default_factory=dict)

    @property
    def total_jump(self) -> float:
        return sum(j for _, j in self.jumps)

    def jump_times(self) -> list[float]:
        return [t for t, _ in self.jumps]

    def _jump_sum_before(self, s: float, inclusive: bool) -> float:
        tot = 0.0
        for t, j in self.jumps:
            if t < s or (inclusive and t == s):
                tot += j
        return tot

    def anchor_times(self) -> list[float]:
        return [self.t_a, *self.jump_times(), self.t_b]

    def x_left(self, s: float) -> float:
        """Left limit of the bridge at s (must be cached in the backbone)."""
        return self.bstar[s] + self._jump_sum_before(s, inclusive=False)

    def x_right(self, s: float) -> float:
        return self.bstar[s] + self._jump_sum_before(s, inclusive=True)

    def bstar_value(self, rng, s: float) -> float:
        if s in self.bstar:
            return self.bstar[s]
        if self.segments is not None:
            for seg, (va, vb) in self.segments:
                if seg.t_a < s < seg.t_b:
                    r = (s - seg.t_a) / (seg.t_b - seg.t_a)
                    val = seg.value(rng, s) + (1.0 - r) * va + r * vb
                    self.bstar[s] = val
                    return val
            raise ContractError(f"time {s} not interior to any segment")
        anchors = sorted(self.bstar)
        k = int(np.searchsorted(anchors, s, side="right")) - 1
        if k < 0 or k >= len(anchors) - 1:
            raise ContractError(f"time {s} outside the skeleton interval")
        t0, t1 = anchors[k], anchors[k + 1]
        val = float(bb_bridge_at(rng, t0, self.bstar[t0], t1, self.bstar[t1], [s])[0])
        self.bstar[s] = val
        return val

    def value(self, rng, s: float) -> float:
        """Bridge value at a non-jump time (deterministic on repeat query)."""
        if any(s == t for t, _ in self.jumps):
            raise ContractError(
                f"{s} is a jump time; request x_left/x_right explicitly")
        if not self.t_a <= s <= self.t_b:
            raise ContractError(f"time {s} outside [{self.t_a}, {self.t_b}]")
        return self.bstar_value(rng, s) + self._jump_sum_before(s, inclusive=True)


def skeleton_fill(rng: np.random.Generator, skeleton: Skeleton, times) -> np.ndarray:
    """Reveal the accepted bridge at further times (not at jump times)."""
    return np.array([skeleton.value(rng, s) for s in times])


# ---------------------------------------------------------------------------
# the sampler
# ---------------------------------------------------------------------------

def _reveal_backbone_at_jumps(rng, bstar, jump_times):
    new = [t for t in jump_times if t not in bstar]
    if not new:
        return
    anchors = sorted(bstar)
    groups: dict[tuple[float, float], list[float]] = {}
    for s in new:
        k = int(np.searchsorted(anchors, s, side="right")) - 1
        groups.setdefault((anchors[k], anchors[k + 1]), []).append(s)
    for (t0, t1), tt in groups.items():
        tt.sort()
        vals = bb_bridge_at(rng, t0, bstar[t0], t1, bstar[t1], tt)
        for s, v in zip(tt, vals):
            bstar[s] = v


def _log_p2(tm, theta, jumps, bstar, c0):
    """Jump-term acceptance: sum of log lambda fg / (lam0 f0) - dA - c0|J|."""
    if not jumps:
        return 0.0
    total = 0.0
    run = 0.0
    for (t_j, j_j) in jumps:
        u_left = bstar[t_j] + run
        lam_j = tm.lam(t_j, u_left, theta)
        if lam_j <= 0.0:
            return -math.inf
        d_a = tm.A(u_left + j_j, theta) - tm.A(u_left, theta)
        total += (math.log(lam_j) + tm.log_fg(j_j, t_j, u_left, theta)
                  - math.log(tm.proposal_rate(t_j, theta))
                  - tm.f0_logpdf(j_j, theta)
                  - d_a - c0 * abs(j_j))
        run += j_j
    if total > 1e-7:
        raise RuntimeError(
            f"p2 = exp({total}) > 1: proposal does not dominate the jump law")
    return min(total, 0.0)


def jbea_bridge(rng: np.random.Generator, tm: TransformedModel,
                x: float, y: float, interval: tuple[float, float],
                theta: Theta, cap: int = ATTEMPT_CAP,
                use_layers: bool | None = None,
                refine_m: int = 1) -> Skeleton:
    """Exact draw of the bridge of the transformed process from x to y.

    ``use_layers`` forces the layered backbone (required when the model has
    no global phi bound); by default it is inferred from the bound provider.
    """
    t_a, t_b = interval
    dt = t_b - t_a
    m_i, r_i = tm.m_r(t_a, t_b, theta)
    if use_layers is None:
        use_layers = r_i is None
    c0 = tm.c0(theta)
    if c0 is None:
        raise ContractError("JBEA needs a Lipschitz drift antiderivative (alpha bounded)")
    measure = "F" if c0 > 0.0 else "D"
    phi_evals_total = 0

    for attempt in range(1, cap + 1):
        jumps = propose_jumps(rng, tm, interval, theta, measure)
        j_tot = sum(j for _, j in jumps)
        # p1: endpoint factor, known in closed form
        log_p1 = -(y - j_tot - x) ** 2 / (2.0 * dt)
        if math.log(rng.random()) > log_p1:
            continue
        bstar = {t_a: x, t_b: y - j_tot}
        _reveal_backbone_at_jumps(rng, bstar, [t for t, _ in jumps])
        log_p2 = _log_p2(tm, theta, jumps, bstar, c0)
        if math.log(rng.random()) > log_p2:
            continue

        # p3 via the Poisson coin
        def phi(s, u, _m=m_i):
            return tm.phi_full(s, u, theta) - _m

        if not use_layers:
            def reveal(s, _bstar=bstar, _jumps=jumps):
                if s not in _bstar:
                    anchors = sorted(_bstar)
                    k = int(np.searchsorted(anchors, s, side="right")) - 1
                    t0, t1 = anchors[k], anchors[k + 1]
                    _bstar[s] = float(bb_bridge_at(rng, t0, _bstar[t0],
                                                   t1, _bstar[t1], [s])[0])
                run = sum(j for t, j in _jumps if t < s)
                return _bstar[s] + run

            spec = CoinSpec(pieces=[CoinPiece(t_a, t_b, r_i)],
                            phi=phi, reveal=reveal)
            segments = None
        else:
            # layered backbone: one standard bridge per inter-jump segment
            anchors = [t_a, *[t for t, _ in jumps], t_b]
            segments = []
            for a0, a1 in zip(anchors[:-1], anchors[1:]):
                seg = SegmentBridge.propose(rng, a0, a1, m=refine_m)
                segments.append((seg, (bstar[a0], bstar[a1])))
            pieces = []
            for seg, (va, vb) in segments:
                run = sum(j for t, j in jumps if t <= seg.t_a)
                span = seg.t_b - seg.t_a
                for (p0, p1, lo, hi) in seg.bounds_pieces():
                    # chord of B* plus jump offset maps the band to X-space
                    ch0 = va + (p0 - seg.t_a) / span * (vb - va)
                    ch1 = va + (p1 - seg.t_a) / span * (vb - va)
                    x_lo = min(ch0, ch1) + lo + run
                    x_hi = max(ch0, ch1) + hi + run
                    _, sup = tm.phi_range(p0, p1, x_lo, x_hi, theta)
                    pieces.append(CoinPiece(p0, p1, max(sup - m_i, 0.0)))

            def reveal(s, _segs=segments, _jumps=jumps, _bstar=bstar):
                for seg, (va, vb) in _segs:
                    if seg.t_a < s < seg.t_b:
                        r = (s - seg.t_a) / (seg.t_b - seg.t_a)
                        _bstar[s] = seg.value(rng, s) + (1 - r) * va + r * vb
                        return _bstar[s] + sum(j for t, j in _jumps if t < s)
                raise ContractError(f"mark {s} outside segments")

            spec = CoinSpec(pieces=pieces, phi=phi, reveal=reveal)

        if poisson_coin(rng, spec):
            psis = np.array(spec.stats.get("mark_times", []))
            return Skeleton(
                t_a=t_a, t_b=t_b, x=x, y=y, jumps=jumps, bstar=bstar,
                psis=np.sort(psis), kappa=spec.stats["marks"], m_i=m_i,
                r_i=(r_i if r_i is not None else math.nan),
                attempts=attempt, theta_values=theta.values.copy(),
                segments=segments,
                stats={"phi_evals_accepted": spec.stats["phi_evals"],
                       "phi_evals_total": spec.stats["phi_evals"] + phi_evals_total})
        phi_evals_total += spec.stats["phi_evals"]

    raise AttemptCapError(
        f"JBEA attempt cap {cap} exceeded on [{t_a}, {t_b}] (x={x}, y={y})")
