"""Exact Bernoulli factories: the Poisson coin and the two-coin algorithm.

The Poisson coin decides events of probability exp(-int phi) by checking a
dominating Poisson process against the curve phi/r, revealing the underlying
path only at the process points.  The two-coin algorithm turns a pair of such
simulable coins plus two computable weights into an exact draw with the
Barker acceptance odds, without ever evaluating the intractable integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["CoinSpec", "CoinPiece", "poisson_coin", "two_coin",
           "BoundViolationError", "RestartCapError"]


class BoundViolationError(RuntimeError):
    """phi left [0, rate] at an evaluated point: a bound provider is wrong."""


class RestartCapError(RuntimeError):
    pass


@dataclass
class CoinPiece:
    """One sub-interval of a Poisson coin with its own rate bound.

    ``screen`` (optional) maps a time to a certified upper envelope of phi
    there; points with mark above screen/rate are discarded without revealing
    the path.
    """

    t_a: float
    t_b: float
    rate: float
    screen: Callable[[float], float] | None = None


@dataclass
class CoinSpec:
    """Specification of a probability exp(-int_ta^tb phi(s, X_s) ds).

    ``phi`` maps (s, x) to the nonnegative integrand; ``reveal`` produces the
    path value at any requested s (triggering conditional fills).
    """

    pieces: Sequence[CoinPiece]
    phi: Callable[[float, float], float]
    reveal: Callable[[float], float]
    stats: dict = field(default_factory=lambda: {"marks": 0, "phi_evals": 0})


def poisson_coin(rng: np.random.Generator, spec: CoinSpec) -> bool:
    """True with probability exp(-int phi), unveiling the path only at marks.

    Marks are processed in time order; the first mark under the curve settles
    the coin at False.
    """
    tol = 1e-9
    for piece in spec.pieces:
        if piece.rate < 0.0:
            raise BoundViolationError(f"negative rate bound {piece.rate}")
        if piece.rate == 0.0:
            continue
        span = piece.t_b - piece.t_a
        kappa = rng.poisson(piece.rate * span)
        if kappa == 0:
            continue
        psis = np.sort(piece.t_a + span * rng.random(kappa))
        upsilons = rng.random(kappa)
        spec.stats["marks"] += int(kappa)
        spec.stats.setdefault("mark_times", []).extend(float(p) for p in psis)
        for psi, ups in zip(psis, upsilons):
            height = ups * piece.rate
            if piece.screen is not None and height >= piece.screen(psi):
                continue  # certified above the curve; no reveal needed
            x = spec.reveal(psi)
            val = spec.phi(psi, x)
            spec.stats["phi_evals"] += 1
            if val < -tol or val > piece.rate * (1.0 + 1e-9) + tol:
                raise BoundViolationError(
                    f"phi={val} outside [0, {piece.rate}] at s={psi} (x={x})")
            if height < val:
                return False
    return True


def two_coin(rng: np.random.Generator,
             log_s_prop: float, log_s_prev: float,
             coin_prop: Callable[[np.random.Generator], bool],
             coin_prev: Callable[[np.random.Generator], bool],
             cap: int = 1_000_000) -> bool:
    """Exact Bernoulli with odds s_prop p_prop : s_prev p_prev.

    The weights enter on the log scale; the coins must be independently
    re-flippable.  Returns True for the proposal side.
    """
    if not (math.isfinite(log_s_prop) or math.isfinite(log_s_prev)):
        raise ValueError("at least one weight must be finite on the log scale")
    # P(C1 = proposal side) = 1 / (1 + exp(log_s_prev - log_s_prop))
    d = log_s_prev - log_s_prop
    if d > 700.0:
        p_c1 = 0.0
    elif d < -700.0:
        p_c1 = 1.0
    else:
        p_c1 = 1.0 / (1.0 + math.exp(d))
    for _ in range(cap):
        if rng.random() < p_c1:
            if coin_prop(rng):
                return True
        else:
            if coin_prev(rng):
                return False
    raise RestartCapError(
        f"two-coin restart cap {cap} exceeded (log_s_prop={log_s_prop}, "
        f"log_s_prev={log_s_prev}); success probabilities are degenerate")
