"""Independent approximate references for statistical validation.

Fine-grid Monte Carlo simulators and frequency-test helpers used only by the
test-suite to cross-check the exact samplers.  Nothing here is reachable from
the exact engines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import ModelSpec, Theta

__all__ = [
    "euler_simulate",
    "euler_bridge_samples",
    "grid_loglik",
    "frequency_check",
    "FrequencyVerdict",
    "bb_band_survival",
    "bessel_sup_below_mc",
    "bb_paths",
]


# ---------------------------------------------------------------------------
# Euler-Maruyama with thinned jumps
# ---------------------------------------------------------------------------

def euler_simulate(rng: np.random.Generator, model: ModelSpec, theta: Theta,
                   v0: float, horizon: float, step: float):
    """Euler scheme for the jump-diffusion in V-space.

    Jumps are produced by thinning a dominating Poisson stream evaluated on
    the grid.  Returns (times, values).
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    n = int(round(horizon / step))
    times = np.linspace(0.0, horizon, n + 1)
    vals = np.empty(n + 1)
    vals[0] = v0
    lam_bound = model.jump_rate_bound(theta)
    v = v0
    sqrt_h = math.sqrt(step)
    normals = rng.standard_normal(n)
    unifs = rng.random(n) if lam_bound > 0 else None
    for k in range(n):
        s = times[k]
        drift = model.drift_b(v, s, theta)
        sig = model.diffusion_sigma(v, theta)
        v = v + drift * step + sig * sqrt_h * normals[k]
        if lam_bound > 0.0:
            # thinning: at most one jump per step (error O(step^2))
            if unifs[k] < lam_bound * step:
                if rng.random() < model.jump_rate_lambda1(s, v, theta) / lam_bound:
                    z = model.sample_jump_z(rng, s, theta)
                    v = v + model.jump_g1(z, v, theta)
        if not model.in_state_space(v):
            raise RuntimeError(
                f"euler path left the state space at t={s + step:.6g} (v={v:.6g})")
        vals[k + 1] = v
    return times, vals


def euler_bridge_samples(rng: np.random.Generator, model: ModelSpec, theta: Theta,
                         x0: float, y: float, length: float, step: float,
                         n_paths: int, band: float = 0.01,
                         keep_at: float | None = None,
                         space: str = "x") -> np.ndarray:
    """Bridge oracle: forward paths kept when they end within +-band of y.

    Simulates the Lamperti-transformed process when space == "x" (unit
    diffusion coefficient), with jumps mapped through the transform.  Returns
    the retained path values at time ``keep_at`` (default: midpoint).
    """
    if keep_at is None:
        keep_at = 0.5 * length
    n = int(round(length / step))
    k_keep = int(round(keep_at / step))
    tm = model.transform()
    lam_bound = tm.lambda_bound(theta)
    out = []
    chunk = max(1, min(n_paths, 200_000 // max(n, 1) + 1000))
    done = 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        x = np.full(m, x0)
        kept = np.empty(m)
        for k in range(n):
            s = k * step
            x = x + tm.alpha_vec(x, theta) * step \
                + math.sqrt(step) * rng.standard_normal(m)
            if lam_bound > 0.0:
                hit = rng.random(m) < lam_bound * step
                if np.any(hit):
                    idx = np.nonzero(hit)[0]
                    rates = np.array([tm.lam(s, xi, theta) for xi in x[idx]])
                    acc = idx[rng.random(idx.size) < rates / lam_bound]
                    for i in acc:
                        x[i] += tm.sample_jump(rng, s, x[i], theta)
            if k + 1 == k_keep:
                kept = x.copy()
        sel = np.abs(x - y) <= band
        out.append(kept[sel])
        done += m
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# grid likelihood (Riemann version of the complete-data log-likelihood)
# ---------------------------------------------------------------------------

def grid_loglik(tm, theta: Theta, times: np.ndarray, values: np.ndarray,
                jumps: list[tuple[float, float]] | None = None) -> float:
    """Riemann evaluation of the complete-data log-likelihood terms.

    ``times``/``values`` describe a densely revealed path of the transformed
    process between jumps; ``jumps`` holds (time, size) pairs with values
    interpolated from the dense grid.
    """
    jumps = jumps or []
    x0, xT = float(values[0]), float(values[-1])
    total = tm.A(xT, theta) - tm.A(x0, theta)
    # mid-point Riemann sum of the (alpha^2+alpha')/2 + lambda term
    dt = np.diff(times)
    phi_vals = np.array([tm.phi_full(float(t), float(u), theta)
                         for t, u in zip(times[:-1], values[:-1])])
    total -= float(np.sum(phi_vals * dt))
    for (tj, jj) in jumps:
        k = int(np.searchsorted(times, tj)) - 1
        u_left = float(values[k])
        total -= tm.A(u_left + jj, theta) - tm.A(u_left, theta)
        total += math.log(tm.lam(tj, u_left, theta))
        total += tm.log_fg(jj, tj, u_left, theta)
    return total


# ---------------------------------------------------------------------------
# frequency testing
# ---------------------------------------------------------------------------

@dataclass
class FrequencyVerdict:
    passed: bool
    freq: float
    target: float
    sigma: float
    trials: int

    def __bool__(self) -> bool:
        return self.passed


def frequency_check(rng: np.random.Generator, coin, p_target: float,
                    trials: int, n_sigma: float = 3.0) -> FrequencyVerdict:
    """3-sigma binomial band verdict for an exact coin."""
    if trials < 1000:
        raise ValueError("need at least 10^3 trials")
    hits = sum(1 for _ in range(trials) if coin(rng))
    freq = hits / trials
    sigma = math.sqrt(max(p_target * (1.0 - p_target), 1e-12) / trials)
    return FrequencyVerdict(abs(freq - p_target) <= n_sigma * sigma,
                            freq, p_target, sigma, trials)


# ---------------------------------------------------------------------------
# Brownian-bridge band survival (oracle for the gamma series)
# ---------------------------------------------------------------------------

def bb_paths(rng: np.random.Generator, n_paths: int, n_steps: int,
             length: float, u1: float, u2: float) -> np.ndarray:
    """Brownian bridges from u1 to u2 on a regular grid, shape (n_paths, n_steps+1)."""
    dt = length / n_steps
    incr = rng.standard_normal((n_paths, n_steps)) * math.sqrt(dt)
    w = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(incr, axis=1)], axis=1)
    tt = np.linspace(0.0, length, n_steps + 1)
    # pin the endpoint and add the straight line between the anchors
    w = w - (tt / length)[None, :] * w[:, -1:]
    return w + u1 + (u2 - u1) * (tt / length)[None, :]


def bb_band_survival(rng: np.random.Generator, n_paths: int, n_steps: int,
                     length: float, u1: float, u2: float, lo: float, hi: float,
                     chunk: int = 20_000) -> tuple[float, float]:
    """MC estimate of P(BB from u1 to u2 stays inside (lo, hi)).

    Fine-grid simulation with the exact within-step boundary-crossing
    probability folded in multiplicatively, which removes the grid bias of a
    plain sup-indicator.  Returns (estimate, standard error).
    """
    dt = length / n_steps
    total, total_sq, done = 0.0, 0.0, 0
    while done < n_paths:
        m = min(chunk, n_paths - done)
        w = bb_paths(rng, m, n_steps, length, u1, u2)
        inside = np.all((w > lo) & (w < hi), axis=1)
        # per-step probability of not crossing either boundary between knots
        a = w[:, :-1]
        b = w[:, 1:]
        with np.errstate(over="ignore"):
            p_hi = np.exp(-2.0 * np.clip(hi - a, 0.0, None)
                          * np.clip(hi - b, 0.0, None) / dt)
            p_lo = np.exp(-2.0 * np.clip(a - lo, 0.0, None)
                          * np.clip(b - lo, 0.0, None) / dt)
        surv = np.prod((1.0 - p_hi) * (1.0 - p_lo), axis=1) * inside
        total += float(np.sum(surv))
        total_sq += float(np.sum(surv * surv))
        done += m
    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0)
    return mean, math.sqrt(var / n_paths)


def bessel_sup_below_mc(rng: np.random.Generator, n_paths: int, n_steps: int,
                        length: float, delta_end: float, cap: float) -> tuple[float, float]:
    """MC estimate of P(sup of a 3-d Bessel bridge from 0 to delta_end < cap).

    Plain fine-grid indicator; use a small step so the grid bias is well below
    the returned standard error.
    """
    tt = np.linspace(0.0, 1.0, n_steps + 1)
    hits, done = 0, 0
    scale = math.sqrt(length)
    chunk = max(1, 2_000_000 // (n_steps + 1))
    while done < n_paths:
        m = min(chunk, n_paths - done)
        sup = np.zeros(m)
        comps = np.zeros((3, m, n_steps + 1))
        for c in range(3):
            comps[c] = bb_paths(rng, m, n_steps, 1.0, 0.0, 0.0)
        r = np.sqrt((delta_end / scale * tt[None, :] + comps[0]) ** 2
                    + comps[1] ** 2 + comps[2] ** 2) * scale
        sup = r.max(axis=1)
        hits += int(np.sum(sup < cap))
        done += m
    p = hits / n_paths
    return p, math.sqrt(max(p * (1 - p), 1e-12) / n_paths)
