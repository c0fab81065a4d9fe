"""Layered Brownian bridges: layer sampling, conditioned extrema, fills.

A layered bridge is a standard Brownian bridge (0 at both ends) simulated
jointly with the index I of the smallest symmetric band (-b_I, b_I) that
contains it.  Conditional on the band, any finite set of points can be
revealed exactly: first the extremum that touches the outer ring is drawn,
then points are filled by rejection with alternating-series acceptance
decisions.  Everything here consumes randomness only through the supplied
generator, so a record is a single consistent realization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import ContractError
from .series import (
    BoundStream,
    const_stream,
    delta4_stream,
    delta5_stream,
    delta_ratio_stream,
    gamma_general_stream,
    product_stream,
    ratio_stream,
    retro_bernoulli,
    sample_layer_index,
    sample_layer_indices_fast,
)

__all__ = [
    "LayerRecord",
    "SegmentBridge",
    "bb_bridge_at",
    "sample_conditioned_minimum",
    "sample_layered_extremum",
    "fill_case_a",
    "fill_case_b",
    "refine_layers",
    "RejectionCapError",
]

REJECTION_CAP = 1_000_000


class RejectionCapError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# plain Brownian-bridge conditionals
# ---------------------------------------------------------------------------

def bb_bridge_at(rng: np.random.Generator, t0: float, w0: float,
                 t1: float, w1: float, times) -> np.ndarray:
    """Sample a Brownian path at ``times`` given values at t0 and t1.

    Sequential Gaussian conditionals; ``times`` must be sorted and strictly
    inside (t0, t1).
    """
    out = np.empty(len(times))
    ta, wa = t0, w0
    for i, s in enumerate(times):
        if not ta < s < t1:
            raise ContractError(f"fill time {s} outside bracket ({ta}, {t1})")
        r = (s - ta) / (t1 - ta)
        mean = wa + r * (w1 - wa)
        var = (s - ta) * (t1 - s) / (t1 - ta)
        out[i] = mean + math.sqrt(var) * rng.standard_normal()
        ta, wa = s, out[i]
    return out


# ---------------------------------------------------------------------------
# conditioned minimum of a standard bridge
# ---------------------------------------------------------------------------

def sample_conditioned_minimum(rng: np.random.Generator, t: float,
                               m1: float, m2: float) -> tuple[float, float]:
    """Minimum (value, location) of a standard bridge given min in [m1, m2].

    The value has cdf F(w) = exp(-2 w^2 / t) restricted to [m1, m2]; the
    location comes from the inverse-Gaussian mixture.  Location is relative
    to the start of the bridge.
    """
    if m2 > 0.0 or m1 > m2:
        raise ContractError(f"need m1 <= m2 <= 0, got ({m1}, {m2})")
    f1 = math.exp(-2.0 * m1 * m1 / t)
    f2 = math.exp(-2.0 * m2 * m2 / t)
    u1 = f1 + (f2 - f1) * rng.random()
    e = -math.log(u1)
    m = -math.sqrt(2.0 * t * e) / 2.0
    # location: inverse-Gaussian mixture with c1 = c2 = m^2 / (2 t)
    c = m * m / (2.0 * t)
    if rng.random() < 0.5:
        v = rng.wald(1.0, 2.0 * c)
    else:
        v = 1.0 / rng.wald(1.0, 2.0 * c)
    t_m = t / (1.0 + v)
    return m, t_m


# ---------------------------------------------------------------------------
# layer record
# ---------------------------------------------------------------------------

@dataclass
class LayerRecord:
    """Layer information for one standard bridge on (t_a, t_b).

    Either ``index`` is set (ring I of the default ladder b_k = k * b_unit)
    or ``band`` carries explicit (lo, hi) bounds.  ``cache`` maps absolute
    times to bridge values and always contains the two anchors at 0.
    """

    t_a: float
    t_b: float
    index: int | None = None
    b_unit: float | None = None
    band: tuple[float, float] | None = None
    extremum: tuple | None = None      # (side, value, time), side in {"min","max"}
    cache: dict = field(default_factory=dict)
    children: list | None = None       # refined: [(t0, t1, lo, hi)]

    def __post_init__(self):
        if self.index is None and self.band is None:
            raise ValueError("need a layer index or an explicit band")
        if self.b_unit is None:
            self.b_unit = math.sqrt(self.t_b - self.t_a)
        self.cache.setdefault(self.t_a, 0.0)
        self.cache.setdefault(self.t_b, 0.0)

    @property
    def length(self) -> float:
        return self.t_b - self.t_a

    def bounds(self) -> tuple[float, float]:
        """Certified (lo, hi) for the whole record."""
        if self.band is not None:
            lo, hi = self.band
        else:
            b_i = self.index * self.b_unit
            lo, hi = -b_i, b_i
        if self.extremum is not None:
            side, m, _ = self.extremum
            if side == "min":
                lo = m
            else:
                hi = m
        return lo, hi

    def bounds_pieces(self) -> list[tuple[float, float, float, float]]:
        """Piecewise (t0, t1, lo, hi); children give refined pieces."""
        if self.children:
            return list(self.children)
        lo, hi = self.bounds()
        return [(self.t_a, self.t_b, lo, hi)]

    # -- filling ---------------------------------------------------------

    def ensure_extremum(self, rng: np.random.Generator):
        if self.extremum is None and self.index is not None:
            sample_layered_extremum(rng, self)

    def fill(self, rng: np.random.Generator, times) -> np.ndarray:
        """Reveal the bridge at ``times`` (sorted); cached times repeat exactly."""
        out = np.empty(len(times))
        new = [s for s in times if s not in self.cache]
        if new:
            if self.index is not None:
                self.ensure_extremum(rng)
            if self.children:
                for (t0, t1, lo, hi) in self.children:
                    tt = [s for s in new if t0 < s < t1]
                    if tt:
                        self._fill_within(rng, tt, lo, hi, limit=(t0, t1))
            else:
                lo, hi = self.bounds()
                self._fill_within(rng, new, lo, hi)
        for i, s in enumerate(times):
            out[i] = self.cache[s]
        return out

    def value(self, rng: np.random.Generator, s: float) -> float:
        return float(self.fill(rng, [s])[0])

    def _fill_within(self, rng, new_times, lo, hi, limit=None):
        cache_view = self.cache if limit is None else \
            {k: v for k, v in self.cache.items() if limit[0] <= k <= limit[1]}
        for (s0, s1), tt in _group_by_bracket(cache_view, new_times):
            self._fill_bracket(rng, s0, s1, tt, lo, hi)

    def _fill_bracket(self, rng, s0, s1, tt, lo, hi):
        # canonicalize to the minimum side; (lo, hi) certified for this bracket
        side, m_val, t_star = self.extremum if self.extremum else (None, None, None)
        reflect = side == "max"
        sgn = -1.0 if reflect else 1.0
        w0, w1 = self.cache[s0] * sgn, self.cache[s1] * sgn
        blo, bhi = ((-hi, -lo) if reflect else (lo, hi))
        if t_star is not None and (s0 == t_star or s1 == t_star):
            vals = _case_b(rng, s0, w0, s1, w1, tt, m_val * sgn, bhi, t_star)
        else:
            vals = _case_a(rng, s0, w0, s1, w1, tt, blo, bhi)
        for s, v in zip(tt, vals):
            self.cache[s] = v * sgn


def _group_by_bracket(cache: dict, new_times):
    """Yield ((s0, s1), [times...]) with s0, s1 consecutive cached times."""
    anchors = sorted(cache)
    groups: dict[tuple[float, float], list[float]] = {}
    for s in sorted(new_times):
        k = int(np.searchsorted(anchors, s, side="right")) - 1
        if k < 0 or k >= len(anchors) - 1:
            raise ContractError(f"time {s} outside the record interval")
        groups.setdefault((anchors[k], anchors[k + 1]), []).append(s)
    return groups.items()


# ---------------------------------------------------------------------------
# layered extremum (rejection from the two-sided extremum proposal)
# ---------------------------------------------------------------------------

def sample_layered_extremum(rng: np.random.Generator, rec: LayerRecord,
                            cap: int = REJECTION_CAP) -> LayerRecord:
    """Draw the extremum certifying the ring index of ``rec`` and cache it."""
    if rec.index is None:
        raise ContractError("extremum sampling needs a ring index")
    if rec.extremum is not None:
        return rec
    if len(rec.cache) > 2:
        raise ContractError("extremum must be sampled before interior fills")
    t = rec.length
    b_i = rec.index * rec.b_unit
    b_im1 = (rec.index - 1) * rec.b_unit
    for _ in range(cap):
        use_min = rng.random() < 0.5
        m, t_m = sample_conditioned_minimum(rng, t, -b_i, -b_im1)
        # numerator: path stays below b_i on both sides of the minimum
        k = b_i - m
        num = product_stream(delta4_stream(t_m, -m, k),
                             delta4_stream(t - t_m, -m, k))
        if not retro_bernoulli(rng, num):
            continue
        if rec.index == 1:
            both = True  # the opposite extreme always falls inside the first band
        else:
            # stays below b_{I-1} given below b_I <=> opposite ring NOT reached
            inner = product_stream(
                delta5_stream(t_m, -m, b_im1 - m, k),
                delta5_stream(t - t_m, -m, b_im1 - m, k))
            both = not retro_bernoulli(rng, inner)
        if both and rng.random() >= 0.5:
            continue
        t_star = rec.t_a + t_m
        if use_min:
            rec.extremum = ("min", m, t_star)
            rec.cache[t_star] = m
        else:
            rec.extremum = ("max", -m, t_star)
            rec.cache[t_star] = -m
        return rec
    raise RejectionCapError(f"extremum rejection cap {cap} exceeded (I={rec.index})")


# ---------------------------------------------------------------------------
# conditional fills (canonical minimum side: path in (m_star, hi))
# ---------------------------------------------------------------------------

def _case_a(rng, s0, w0, s1, w1, times, lo, hi, cap=REJECTION_CAP):
    """Fill ``times`` in (s0, s1) given the path stays inside (lo, hi)."""
    if not times:
        return []
    for _ in range(cap):
        vals = bb_bridge_at(rng, s0, w0, s1, w1, times)
        grid_t = [s0, *times, s1]
        grid_w = [w0, *vals, w1]
        streams = [gamma_general_stream(tb - ta, wa, wb, lo, hi)
                   for ta, tb, wa, wb in zip(grid_t[:-1], grid_t[1:],
                                             grid_w[:-1], grid_w[1:])]
        if retro_bernoulli(rng, product_stream(*streams)):
            return vals
    raise RejectionCapError(f"case-a rejection cap exceeded on ({s0},{s1})")


def _bessel_marginal(rng, frac, delta_end):
    """Marginal of a unit 3-d Bessel bridge from 0 to delta_end at time frac."""
    sd = math.sqrt(frac * (1.0 - frac))
    n1, n2, n3 = rng.standard_normal(3) * sd
    return math.sqrt((delta_end * frac + n1) ** 2 + n2 ** 2 + n3 ** 2)


def _case_b(rng, s0, w0, s1, w1, times, m_star, hi, t_star, cap=REJECTION_CAP):
    """Fill ``times`` in a bracket whose edge is the minimum location."""
    if not times:
        return []
    times = sorted(times)
    k_cap = hi - m_star
    if s0 == t_star:
        s_m = times[0]
        rest = times[1:]
        seg_len = s1 - s0
        end_val = w1
        first_gap = s_m - t_star
        second_len = s1 - s_m
    else:
        s_m = times[-1]
        rest = times[:-1]
        seg_len = s1 - s0
        end_val = w0
        first_gap = t_star - s_m
        second_len = s_m - s0
    delta_end = (end_val - m_star) / math.sqrt(seg_len)
    frac = first_gap / seg_len
    w_m = None
    for _ in range(cap):
        r = _bessel_marginal(rng, frac, delta_end)
        w_prop = m_star + math.sqrt(seg_len) * r
        if w_prop >= hi:
            continue
        acc = product_stream(
            delta4_stream(first_gap, w_prop - m_star, k_cap),
            delta_ratio_stream(second_len, w_prop - m_star, end_val - m_star, k_cap))
        if retro_bernoulli(rng, acc):
            w_m = w_prop
            break
    if w_m is None:
        raise RejectionCapError("case-b rejection cap exceeded")
    out = {s_m: w_m}
    if rest:
        if s0 == t_star:
            vals = _case_a(rng, s_m, w_m, s1, w1, rest, m_star, hi)
        else:
            vals = _case_a(rng, s0, w0, s_m, w_m, rest, m_star, hi)
        out.update(dict(zip(rest, vals)))
    return [out[s] for s in times]


def fill_case_a(rng: np.random.Generator, rec: LayerRecord, times) -> np.ndarray:
    """Fill times lying in brackets away from the extremum location."""
    rec.ensure_extremum(rng)
    side, m_star, t_star = rec.extremum
    for bracket, _ in _group_by_bracket(rec.cache, times):
        if t_star in bracket:
            raise ContractError("bracket touches the extremum; use fill_case_b")
    return rec.fill(rng, times)


def fill_case_b(rng: np.random.Generator, rec: LayerRecord, times) -> np.ndarray:
    """Fill times in the brackets adjacent to the extremum location."""
    rec.ensure_extremum(rng)
    return rec.fill(rng, times)


# ---------------------------------------------------------------------------
# refinement of an existing record (tighter piecewise bounds)
# ---------------------------------------------------------------------------

def _conditional_band_index(rng, length, a, b, parent_lo, parent_hi,
                            t_edge_is_extremum, m_star=None,
                            max_index=64, max_pairs=100_000):
    """Smallest ladder band containing the sub-bridge, given parent bounds.

    Returns (lo, hi) in parent coordinates.  Bands grow by sqrt(length) per
    step and saturate at the parent constraints.
    """
    h = math.sqrt(length)
    pairs_used = 0
    u = rng.random()

    def band(j):
        if t_edge_is_extremum:
            return m_star, min(parent_hi, max(a, b) + j * h)
        return max(parent_lo, min(a, b) - j * h), min(parent_hi, max(a, b) + j * h)

    def cdf_stream(j):
        lo, hi = band(j)
        if t_edge_is_extremum:
            end = (a if a != m_star else b) - m_star
            num = delta4_stream(length, end, hi - m_star)
            den = delta4_stream(length, end, parent_hi - m_star)
        else:
            num = gamma_general_stream(length, a, b, lo, hi)
            den = gamma_general_stream(length, a, b, parent_lo, parent_hi)
        return ratio_stream(num, den)

    for j in range(1, max_index + 1):
        lo, hi = band(j)
        if lo <= parent_lo + 1e-15 and hi >= parent_hi - 1e-15 and not t_edge_is_extremum:
            return parent_lo, parent_hi
        if t_edge_is_extremum and hi >= parent_hi - 1e-15:
            return m_star, parent_hi
        stream = cdf_stream(j)
        decided = False
        for k, (slo, sup) in enumerate(stream.pairs(), start=1):
            pairs_used += 1
            if pairs_used > max_pairs:
                raise RejectionCapError("pair budget exceeded in band refinement")
            if k < stream.threshold:
                continue
            if u < slo:
                return band(j)
            if u > sup:
                decided = True
                break
        if not decided:
            raise RejectionCapError("band refinement stream stalled")
    return (m_star, parent_hi) if t_edge_is_extremum else (parent_lo, parent_hi)


def refine_layers(rng: np.random.Generator, rec: LayerRecord, m: int) -> LayerRecord:
    """Reveal the bridge at m-1 equally spaced times and band each sub-interval.

    The refined bounds nest inside the parent constraints by construction.
    m = 1 returns the record unchanged.
    """
    if m < 1:
        raise ContractError("m must be >= 1")
    if m == 1:
        return rec
    rec.ensure_extremum(rng)
    interior = [rec.t_a + k * rec.length / m for k in range(1, m)]
    rec.fill(rng, [s for s in interior if s not in rec.cache])
    side, m_ext, t_star = rec.extremum if rec.extremum else (None, None, None)
    plo, phi_ = rec.bounds()
    knots = sorted(rec.cache)
    children = []
    for t0, t1 in zip(knots[:-1], knots[1:]):
        a, b = rec.cache[t0], rec.cache[t1]
        reflect = side == "max"
        if reflect:
            a_, b_, lo_, hi_ = -a, -b, -phi_, -plo
            ms = -m_ext
        else:
            a_, b_, lo_, hi_ = a, b, plo, phi_
            ms = m_ext
        touches = side is not None and (t0 == t_star or t1 == t_star)
        blo, bhi = _conditional_band_index(rng, t1 - t0, a_, b_, lo_, hi_,
                                           touches, m_star=ms)
        if reflect:
            blo, bhi = -bhi, -blo
        children.append((t0, t1, blo, bhi))
    rec.children = children
    return rec


# ---------------------------------------------------------------------------
# anchored segment: standard bridge with creation-time refinement
# ---------------------------------------------------------------------------

class SegmentBridge:
    """Standard bridge on (t_a, t_b) revealed at knots with per-knot-gap layers.

    The engine fast path: the bridge is first drawn at ``m - 1`` equally
    spaced knots (plain Gaussian), then each gap carries an independent layer
    for its own standard sub-bridge.  Fills route through the gap records.
    """

    __slots__ = ("t_a", "t_b", "knots", "knot_vals", "records")

    def __init__(self, t_a, t_b, knots, knot_vals, records):
        self.t_a, self.t_b = t_a, t_b
        self.knots = knots
        self.knot_vals = knot_vals
        self.records = records

    @classmethod
    def propose(cls, rng: np.random.Generator, t_a: float, t_b: float,
                m: int = 1, indices: np.ndarray | None = None) -> "SegmentBridge":
        knots = np.linspace(t_a, t_b, m + 1)
        vals = np.zeros(m + 1)
        if m > 1:
            vals[1:-1] = bb_bridge_at(rng, t_a, 0.0, t_b, 0.0, knots[1:-1])
        if indices is None:
            indices = sample_layer_indices_fast(rng, m)
        records = [LayerRecord(t_a=float(knots[k]), t_b=float(knots[k + 1]),
                               index=int(indices[k]))
                   for k in range(m)]
        return cls(t_a, t_b, knots, vals, records)

    def _gap(self, s: float) -> int:
        k = int(np.searchsorted(self.knots, s, side="right")) - 1
        if k < 0 or k >= len(self.records):
            raise ContractError(f"time {s} outside segment ({self.t_a}, {self.t_b})")
        return k

    def _chord(self, k: int, s: float) -> float:
        t0, t1 = self.knots[k], self.knots[k + 1]
        r = (s - t0) / (t1 - t0)
        return (1.0 - r) * self.knot_vals[k] + r * self.knot_vals[k + 1]

    def value(self, rng: np.random.Generator, s: float) -> float:
        """Standard-bridge value at s (reveals lazily)."""
        k = int(np.searchsorted(self.knots, s))
        if k < len(self.knots) and self.knots[k] == s:
            return float(self.knot_vals[k])
        k = self._gap(s)
        return self._chord(k, s) + self.records[k].value(rng, s)

    def bounds_pieces(self) -> list[tuple[float, float, float, float]]:
        """Certified piecewise-constant bounds for the segment bridge."""
        out = []
        for k, rec in enumerate(self.records):
            lo_r, hi_r = rec.bounds()
            base_lo = min(self.knot_vals[k], self.knot_vals[k + 1])
            base_hi = max(self.knot_vals[k], self.knot_vals[k + 1])
            for (t0, t1, plo, phi_) in rec.bounds_pieces():
                out.append((t0, t1, base_lo + plo, base_hi + phi_))
        return out

    def bounds_at(self, s: float) -> tuple[float, float]:
        k = self._gap(s)
        rec = self.records[k]
        lo_r, hi_r = rec.bounds()
        if rec.children:
            for (t0, t1, clo, chi) in rec.children:
                if t0 <= s < t1:
                    lo_r, hi_r = clo, chi
                    break
        base_lo = min(self.knot_vals[k], self.knot_vals[k + 1])
        base_hi = max(self.knot_vals[k], self.knot_vals[k + 1])
        return base_lo + lo_r, base_hi + hi_r
