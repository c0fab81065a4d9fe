"""Alternating-series machinery for Brownian-bridge crossing probabilities.

The crossing probabilities used by the layered-bridge samplers are limits of
alternating series whose partial sums sandwich the true value: after a
parameter-dependent number of pairs the even partial sums increase and the odd
ones decrease towards the limit.  Events of such probabilities can then be
decided exactly with a single uniform draw (retrospective Bernoulli), without
ever computing the limit.
"""

from __future__ import annotations

import math
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "BoundStream",
    "SeriesError",
    "const_stream",
    "gamma_stream",
    "gamma_general_stream",
    "delta4_stream",
    "delta5_stream",
    "delta_ratio_stream",
    "product_stream",
    "ratio_stream",
    "retro_bernoulli",
    "converge_stream",
    "sample_layer_index",
    "layer_cdf_table",
    "default_b_sequence",
]

# Sandwich violations below this size are treated as floating-point noise
# and clamped; anything larger aborts.
_SANDWICH_TOL = 1e-13

DEFAULT_PAIR_BUDGET = 100_000


class SeriesError(RuntimeError):
    """A bound stream failed to behave as a convergent sandwich."""


def _exp(x: float) -> float:
    # exponents are assembled in log space and exponentiated exactly once
    if x > 700.0:
        raise SeriesError(f"series term overflow, exponent {x}")
    return math.exp(x)


class BoundStream:
    """Stream of (lower, upper) sandwich bounds for a probability.

    ``pair_factory`` yields raw pairs; pairs are trusted (monotone lower
    nondecreasing, upper nonincreasing, lower <= upper) only from pair number
    ``threshold`` (1-based) onwards.
    """

    def __init__(self, pair_factory: Callable[[], Iterator[tuple[float, float]]],
                 threshold: int, desc: str):
        self._factory = pair_factory
        self.threshold = max(1, int(threshold))
        self.desc = desc

    def pairs(self) -> Iterator[tuple[float, float]]:
        """Yield clamped, monotonicity-enforced pairs (trusted after threshold)."""
        best_lo, best_up = 0.0, 1.0
        for k, (lo, up) in enumerate(self._factory(), start=1):
            lo = min(1.0, max(0.0, lo))
            up = min(1.0, max(0.0, up))
            if k < self.threshold:
                yield best_lo, best_up
                continue
            if lo > up + _SANDWICH_TOL:
                raise SeriesError(
                    f"sandwich inverted for {self.desc}: lower={lo!r} upper={up!r} at pair {k}")
            if lo < best_lo - _SANDWICH_TOL or up > best_up + _SANDWICH_TOL:
                raise SeriesError(
                    f"sandwich not monotone for {self.desc} at pair {k}: "
                    f"({best_lo!r},{best_up!r}) -> ({lo!r},{up!r})")
            best_lo = max(best_lo, lo)
            best_up = min(best_up, up)
            if best_lo > best_up:  # noise within tolerance
                best_lo = best_up = 0.5 * (best_lo + best_up)
            yield best_lo, best_up


def const_stream(p: float) -> BoundStream:
    p = float(p)

    def factory():
        while True:
            yield p, p

    return BoundStream(factory, 1, f"const({p})")


def _series_threshold(s: float, K: float) -> int:
    # sandwich guaranteed immediately if 3K^2 > s, else after the stated
    # number of pairs
    if 3.0 * K * K > s:
        return 1
    return int(math.ceil(math.sqrt(s + K * K) / (2.0 * K)))


# ---------------------------------------------------------------------------
# gamma: probability that a Brownian bridge stays inside a symmetric band
# ---------------------------------------------------------------------------

def _gamma_sigma_bar(j: int, s: float, u1: float, u2: float, K: float) -> float:
    return _exp(-(2.0 / s) * (2.0 * K * j - (K + u1)) * (2.0 * K * j - (K + u2)))


def _gamma_tau_bar(j: int, s: float, u1: float, u2: float, K: float) -> float:
    return _exp(-(2.0 * j / s) * (4.0 * K * K * j + 2.0 * K * (u1 - u2)))


def gamma_stream(s: float, u1: float, u2: float, K: float) -> BoundStream:
    """Sandwich for P(BB from u1 to u2 over length s stays inside (-K, K))."""
    if s <= 0.0 or K <= 0.0:
        raise ValueError(f"gamma_stream needs s>0, K>0, got s={s}, K={K}")
    if abs(u1) >= K or abs(u2) >= K:
        return const_stream(0.0)

    def factory():
        partial = 1.0
        j = 1
        while True:
            sig = (_gamma_sigma_bar(j, s, u1, u2, K)
                   + _gamma_sigma_bar(j, s, -u1, -u2, K))
            tau = (_gamma_tau_bar(j, s, u1, u2, K)
                   + _gamma_tau_bar(j, s, -u1, -u2, K))
            lower = partial - sig
            upper = lower + tau
            partial = upper
            yield lower, upper
            j += 1

    return BoundStream(factory, _series_threshold(s, K),
                       f"gamma(s={s},u1={u1},u2={u2},K={K})")


def gamma_general_stream(s: float, a: float, b: float,
                         lo: float, hi: float) -> BoundStream:
    """Sandwich for P(BB from a to b over length s stays inside (lo, hi))."""
    if hi <= lo:
        return const_stream(0.0)
    c = 0.5 * (lo + hi)
    return gamma_stream(s, a - c, b - c, 0.5 * (hi - lo))


# ---------------------------------------------------------------------------
# delta: crossing probabilities for bridges anchored at an attained extremum
# ---------------------------------------------------------------------------

def _delta_xi(j: int, s: float, u2: float, K: float) -> float:
    return (2.0 * K * j + u2) * _exp(-2.0 * K * j * (K * j + u2) / s)


def _delta_zeta(j: int, s: float, u2: float, K: float) -> float:
    return _delta_xi(j, s, -u2, K)


def delta4_stream(s: float, u2: float, K: float) -> BoundStream:
    """Sandwich for the extremum-anchored crossing probability delta(s,0,u2,K).

    Segment runs from the attained minimum (relative value 0) to relative
    value u2 > 0 and must stay below K.
    """
    if u2 == 0.0:
        raise ValueError("delta4_stream requires u2 != 0")
    if s <= 0.0:
        raise ValueError("delta4_stream requires s > 0")
    if u2 >= K:
        return const_stream(0.0)

    def factory():
        partial = 1.0
        j = 1
        while True:
            zeta = _delta_zeta(j, s, u2, K) / u2
            xi = _delta_xi(j, s, u2, K) / u2
            lower = partial - zeta
            upper = lower + xi
            partial = upper
            yield lower, upper
            j += 1

    return BoundStream(factory, _series_threshold(s, K),
                       f"delta4(s={s},u2={u2},K={K})")


def delta5_stream(s: float, u2: float, K: float, L: float) -> BoundStream:
    """Sandwich for delta(s,0,u2,K;L) = delta4(K)/delta4(L), requires K < L."""
    if not K < L:
        if K == L:
            return const_stream(1.0)
        raise ValueError(f"delta5_stream requires K <= L, got K={K}, L={L}")
    num = delta4_stream(s, u2, K)
    den = delta4_stream(s, u2, L)
    return ratio_stream(num, den)


def delta_ratio_stream(s: float, u1: float, u2: float, K: float) -> BoundStream:
    """Sandwich for delta(s,u1,u2,K) = gamma(s,u1-K/2,u2-K/2,K/2)/(1-exp(-2 u1 u2/s)).

    Both endpoints sit strictly above the attained extremum (u1, u2 > 0).
    """
    if u1 <= 0.0 or u2 <= 0.0:
        raise ValueError("delta_ratio_stream requires u1, u2 > 0")
    den = 1.0 - _exp(-2.0 * u1 * u2 / s)
    num = gamma_stream(s, u1 - 0.5 * K, u2 - 0.5 * K, 0.5 * K)

    def factory():
        for lo, up in num.pairs():
            yield min(1.0, lo / den), min(1.0, up / den)

    return BoundStream(factory, num.threshold,
                       f"delta_ratio(s={s},u1={u1},u2={u2},K={K})")


# ---------------------------------------------------------------------------
# combinators
# ---------------------------------------------------------------------------

def product_stream(*streams: BoundStream) -> BoundStream:
    """Sandwich for the product of independent event probabilities."""
    streams = tuple(s if isinstance(s, BoundStream) else const_stream(s)
                    for s in streams)
    if not streams:
        return const_stream(1.0)
    thr = max(s.threshold for s in streams)

    def factory():
        its = [s.pairs() for s in streams]
        while True:
            lows, ups = 1.0, 1.0
            for it in its:
                lo, up = next(it)
                lows *= lo
                ups *= up
            yield lows, ups

    return BoundStream(factory, thr, "product(" + ",".join(s.desc for s in streams) + ")")


def ratio_stream(num: BoundStream, den: BoundStream) -> BoundStream:
    """Sandwich for num/den where the true ratio lies in [0, 1]."""
    thr = max(num.threshold, den.threshold)

    def factory():
        itn, itd = num.pairs(), den.pairs()
        while True:
            nlo, nup = next(itn)
            dlo, dup = next(itd)
            lo = 0.0 if dup <= 0.0 else nlo / dup
            up = 1.0 if dlo <= 0.0 else min(1.0, nup / dlo)
            yield lo, up

    return BoundStream(factory, thr, f"ratio({num.desc},{den.desc})")


# ---------------------------------------------------------------------------
# retrospective decisions
# ---------------------------------------------------------------------------

def retro_bernoulli(rng: np.random.Generator, stream: BoundStream,
                    max_pairs: int = DEFAULT_PAIR_BUDGET) -> bool:
    """Exact Bernoulli draw with success probability equal to the stream limit.

    Consumes exactly one uniform from ``rng``.
    """
    u = rng.random()
    for k, (lo, up) in enumerate(stream.pairs(), start=1):
        if k >= stream.threshold:
            if u < lo:
                return True
            if u > up:
                return False
        if k >= max_pairs:
            raise SeriesError(
                f"pair budget {max_pairs} exceeded deciding {stream.desc} "
                f"(u={u}, bounds=({lo},{up}))")
    raise SeriesError(f"stream {stream.desc} terminated unexpectedly")


def converge_stream(stream: BoundStream, tol: float = 1e-12,
                    max_pairs: int = DEFAULT_PAIR_BUDGET) -> float:
    """Run the sandwich until its width is below tol; return the midpoint."""
    for k, (lo, up) in enumerate(stream.pairs(), start=1):
        if k >= stream.threshold and up - lo < tol:
            return 0.5 * (lo + up)
        if k >= max_pairs:
            raise SeriesError(f"pair budget exceeded converging {stream.desc}")
    raise SeriesError(f"stream {stream.desc} terminated unexpectedly")


# ---------------------------------------------------------------------------
# layer index
# ---------------------------------------------------------------------------

def default_b_sequence(t: float) -> Callable[[int], float]:
    """Linear layer ladder b_i = i*sqrt(t) (b_1 fixed at sqrt(t))."""
    root = math.sqrt(t)
    return lambda i: i * root


def sample_layer_index(rng: np.random.Generator, t: float,
                       b_sequence: Callable[[int], float] | Sequence[float] | None = None,
                       max_pairs: int = DEFAULT_PAIR_BUDGET,
                       max_index: int = 10_000) -> int:
    """Sample the layer index I with cdf F(i) = gamma(t, 0, 0, b_i).

    Decided by the nested alternating-series comparison: one uniform u is
    drawn and I = i is returned once an upper bound of F(i-1) lies below u
    and a lower bound of F(i) lies above it.
    """
    if b_sequence is None:
        b_fn = default_b_sequence(t)
    elif callable(b_sequence):
        b_fn = b_sequence
    else:
        seq = list(b_sequence)
        b_fn = lambda i: seq[i - 1]

    u = rng.random()
    pairs_used = 0
    i = 1
    while i <= max_index:
        b_i = b_fn(i)
        if i > 1 and b_i <= b_fn(i - 1):
            raise ValueError("b_sequence must be strictly increasing")
        stream = gamma_stream(t, 0.0, 0.0, b_i)
        for k, (lo, up) in enumerate(stream.pairs(), start=1):
            pairs_used += 1
            if pairs_used > max_pairs:
                raise SeriesError(f"pair budget exceeded sampling layer index (t={t})")
            if k < stream.threshold:
                continue
            if u < lo:
                return i
            if u > up:
                break
        else:  # pragma: no cover - generator never ends
            raise SeriesError("layer stream ended")
        i += 1
    raise SeriesError(f"layer index exceeded {max_index} (t={t}, u={u})")


def layer_cdf_table(max_index: int = 12, tol: float = 1e-15) -> np.ndarray:
    """Converged F(i) = gamma(1,0,0,i) for the default ladder of a unit bridge.

    By Brownian scaling the same table serves any interval length when
    b_i = i*sqrt(t).  Used as a fast path equivalent to sample_layer_index.
    """
    out = np.empty(max_index)
    for i in range(1, max_index + 1):
        out[i - 1] = converge_stream(gamma_stream(1.0, 0.0, 0.0, float(i)), tol)
    return out


_LAYER_TABLE: np.ndarray | None = None


def sample_layer_indices_fast(rng: np.random.Generator, n: int) -> np.ndarray:
    """Vectorized draw of n layer indices for the default ladder (any t)."""
    global _LAYER_TABLE
    if _LAYER_TABLE is None:
        _LAYER_TABLE = layer_cdf_table()
    u = rng.random(n)
    return np.searchsorted(_LAYER_TABLE, u) + 1
