"""Jump-diffusion model definitions and the unit-diffusion transformation.

A model is described in observation space (V) by its drift, diffusion
coefficient, jump rate and jump-size distribution.  All simulation and
inference run on the transformed process X = eta(V) with unit diffusion
coefficient; presets ship closed forms for the transformed drift, its
antiderivative and the bound providers the exact algorithms need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special

__all__ = [
    "Theta",
    "ObservationSet",
    "ModelSpec",
    "TransformedModel",
    "AssumptionReport",
    "validate_assumptions",
    "detrend_path",
    "retrend_path",
    "get_preset",
    "PRESETS",
    "DomainError",
    "ContractError",
]


class DomainError(ValueError):
    """Evaluation outside the declared state space or parameter support."""


class ContractError(RuntimeError):
    """A documented precondition was violated by the caller."""


# ---------------------------------------------------------------------------
# parameters and data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Theta:
    """Ordered parameter vector with support constraints and block structure."""

    names: tuple[str, ...]
    values: np.ndarray
    support: tuple[tuple[float, float], ...]
    blocks: dict = field(default_factory=dict)  # {"theta1": (...), "theta2": (...)}

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if len(self.names) != self.values.size or len(self.support) != self.values.size:
            raise ValueError("names, values and support must align")
        if self.blocks:
            listed = tuple(n for blk in self.blocks.values() for n in blk)
            if sorted(listed) != sorted(self.names):
                raise ValueError("blocks must partition the parameter names")

    def get(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def replace_values(self, **kw) -> "Theta":
        vals = self.values.copy()
        for k, v in kw.items():
            vals[self.names.index(k)] = v
        return replace(self, values=vals)

    def with_vector(self, values) -> "Theta":
        return replace(self, values=np.asarray(values, dtype=float))

    def in_support(self) -> bool:
        return all(lo < v < hi for v, (lo, hi) in zip(self.values, self.support))

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class ObservationSet:
    """Discrete observations of V at strictly increasing times."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.size != v.size:
            raise ValueError("times and values must have equal length")
        if t.size < 2:
            raise ValueError("need at least two observations")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    def interval(self, i: int) -> tuple[float, float]:
        return float(self.times[i]), float(self.times[i + 1])


# ---------------------------------------------------------------------------
# jump size distributions (X-space) with exponential |w| tilting
# ---------------------------------------------------------------------------

def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _trunc_norm_sample(rng, mean, sd, lower=None, upper=None):
    # inverse-cdf truncated normal
    a = 0.0 if lower is None else _norm_cdf((lower - mean) / sd)
    b = 1.0 if upper is None else _norm_cdf((upper - mean) / sd)
    u = a + (b - a) * rng.random()
    return mean + sd * special.ndtri(min(max(u, 1e-300), 1.0 - 1e-16))


class NormalJumps:
    """Jump sizes w ~ N(mean, sd^2)."""

    def __init__(self, mean: float, sd: float):
        self.mean, self.sd = mean, sd

    def logpdf(self, w):
        return -0.5 * ((w - self.mean) / self.sd) ** 2 \
            - math.log(self.sd) - 0.5 * math.log(2.0 * math.pi)

    def sample(self, rng, n=None):
        return rng.normal(self.mean, self.sd, size=n)

    def log_zeta(self, c0: float) -> float:
        # E[exp(c0 |w|)], finite for every c0 >= 0
        m, s = self.mean, self.sd
        wp = math.exp(c0 * m + 0.5 * c0 * c0 * s * s) * _norm_cdf((m + c0 * s * s) / s)
        wm = math.exp(-c0 * m + 0.5 * c0 * c0 * s * s) * _norm_cdf(-(m - c0 * s * s) / s)
        return math.log(wp + wm)

    def sample_tilted(self, rng, c0: float):
        # density prop to pdf(w) * exp(c0 |w|): split-sign tilted normal
        m, s = self.mean, self.sd
        wp = math.exp(c0 * m + 0.5 * c0 * c0 * s * s) * _norm_cdf((m + c0 * s * s) / s)
        wm = math.exp(-c0 * m + 0.5 * c0 * c0 * s * s) * _norm_cdf(-(m - c0 * s * s) / s)
        if rng.random() < wp / (wp + wm):
            return _trunc_norm_sample(rng, m + c0 * s * s, s, lower=0.0)
        return _trunc_norm_sample(rng, m - c0 * s * s, s, upper=0.0)


class ExponentialJumps:
    """Jump sizes w ~ Exp(rate) on (0, inf)."""

    def __init__(self, rate: float):
        self.rate = rate

    def logpdf(self, w):
        w = np.asarray(w, dtype=float)
        out = np.where(w > 0, math.log(self.rate) - self.rate * w, -np.inf)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, n=None):
        return rng.exponential(1.0 / self.rate, size=n)

    def log_zeta(self, c0: float) -> float:
        if c0 >= self.rate:
            raise DomainError(f"tilt {c0} not integrable against Exp({self.rate})")
        return math.log(self.rate / (self.rate - c0))

    def sample_tilted(self, rng, c0: float):
        if c0 >= self.rate:
            raise DomainError(f"tilt {c0} not integrable against Exp({self.rate})")
        return rng.exponential(1.0 / (self.rate - c0))


class TwoSidedExpJumps:
    """Mixture p Exp(rate_up) on (0,inf) + (1-p) (-Exp(rate_dn)) on (-inf,0)."""

    def __init__(self, p: float, rate_up: float, rate_dn: float):
        self.p, self.rate_up, self.rate_dn = p, rate_up, rate_dn

    def logpdf(self, w):
        if w > 0:
            return math.log(self.p * self.rate_up) - self.rate_up * w
        if w < 0:
            return math.log((1.0 - self.p) * self.rate_dn) + self.rate_dn * w
        return -math.inf

    def sample(self, rng, n=None):
        if n is None:
            if rng.random() < self.p:
                return rng.exponential(1.0 / self.rate_up)
            return -rng.exponential(1.0 / self.rate_dn)
        return np.array([self.sample(rng) for _ in range(n)])

    def log_zeta(self, c0: float) -> float:
        if c0 >= min(self.rate_up, self.rate_dn):
            raise DomainError("tilt not integrable against two-sided exponential")
        z = self.p * self.rate_up / (self.rate_up - c0) \
            + (1.0 - self.p) * self.rate_dn / (self.rate_dn - c0)
        return math.log(z)

    def sample_tilted(self, rng, c0: float):
        wu = self.p * self.rate_up / (self.rate_up - c0)
        wd = (1.0 - self.p) * self.rate_dn / (self.rate_dn - c0)
        if rng.random() < wu / (wu + wd):
            return rng.exponential(1.0 / (self.rate_up - c0))
        return -rng.exponential(1.0 / (self.rate_dn - c0))


class SignedGammaJumps:
    """Mixture p Gamma(shape, rate) + (1-p) (-Gamma(shape, rate)), scaled by 1/scale."""

    def __init__(self, p: float, shape: float, rate: float, scale: float = 1.0):
        # w = z / scale with z from the gamma mixture
        self.p, self.shape, self.rate, self.scale = p, shape, rate, scale

    def _log_gamma_pdf(self, z):
        a, r = self.shape, self.rate
        return a * math.log(r) - math.lgamma(a) + (a - 1.0) * math.log(z) - r * z

    def logpdf(self, w):
        z = abs(w) * self.scale
        if z == 0.0:
            return -math.inf
        base = self._log_gamma_pdf(z) + math.log(self.scale)
        return base + math.log(self.p if w > 0 else 1.0 - self.p)

    def sample(self, rng, n=None):
        if n is None:
            z = rng.gamma(self.shape, 1.0 / self.rate) / self.scale
            return z if rng.random() < self.p else -z
        return np.array([self.sample(rng) for _ in range(n)])

    def log_zeta(self, c0: float) -> float:
        if c0 == 0.0:
            return 0.0
        raise DomainError("gamma mixture implements only the untilted proposal")

    def sample_tilted(self, rng, c0: float):
        if c0 == 0.0:
            return self.sample(rng)
        raise DomainError("gamma mixture implements only the untilted proposal")


# ---------------------------------------------------------------------------
# path detrending (second-level transformation and its inverse)
# ---------------------------------------------------------------------------

def _bracket(anchor_times, s):
    k = int(np.searchsorted(anchor_times, s, side="right")) - 1
    if k < 0 or k >= len(anchor_times) - 1:
        raise ContractError(f"time {s} outside anchor range")
    return k


def detrend_path(anchor_times, anchor_left, anchor_right, times, values):
    """Subtract the broken-line interpolant through the anchors.

    ``anchor_left[k]``/``anchor_right[k]`` are the path values at the right
    and left limits of anchor k (they differ at jump anchors).  Interior
    ``times`` must fall strictly between consecutive anchors.
    """
    anchor_times = np.asarray(anchor_times, dtype=float)
    out = np.empty(len(times))
    for i, (s, x) in enumerate(zip(times, values)):
        k = _bracket(anchor_times, s)
        ta, tb = anchor_times[k], anchor_times[k + 1]
        if s == ta:
            out[i] = x - anchor_left[k]
            continue
        r = (s - ta) / (tb - ta)
        out[i] = x - (1.0 - r) * anchor_left[k] - r * anchor_right[k + 1]
    return out


def retrend_path(anchor_times, anchor_left, anchor_right, times, dotted):
    """Inverse of detrend_path."""
    anchor_times = np.asarray(anchor_times, dtype=float)
    out = np.empty(len(times))
    for i, (s, d) in enumerate(zip(times, dotted)):
        k = _bracket(anchor_times, s)
        ta, tb = anchor_times[k], anchor_times[k + 1]
        if s == ta:
            out[i] = d + anchor_left[k]
            continue
        r = (s - ta) / (tb - ta)
        out[i] = d + (1.0 - r) * anchor_left[k] + r * anchor_right[k + 1]
    return out


# ---------------------------------------------------------------------------
# base classes
# ---------------------------------------------------------------------------

class TransformedModel:
    """X-space view of a model: unit diffusion coefficient.

    Subclasses provide closed forms for alpha, its derivative and
    antiderivative, the transformed jump rate/size density, the Lamperti map
    and the bound providers.  All evaluations are pure functions of
    (s, u, theta); instances are immutable and shareable.
    """

    preset_id = "custom"
    theta_names: tuple[str, ...] = ()
    jumps_only = False          # skeletons need no interior bridge values
    lambda_state_dependent = True

    # --- Lamperti map ---
    def eta(self, v, theta):
        raise NotImplementedError

    def eta_inv(self, x, theta):
        raise NotImplementedError

    def eta_prime(self, v, theta):
        raise NotImplementedError

    # --- transformed dynamics ---
    def alpha(self, u, theta):
        raise NotImplementedError

    def alpha_prime(self, u, theta):
        raise NotImplementedError

    def A(self, u, theta):
        raise NotImplementedError

    def lam(self, s, u, theta):
        raise NotImplementedError

    def lambda_bound(self, theta):
        raise NotImplementedError

    def log_fg(self, w, s, u_left, theta):
        """Log density of the X-space jump size w at time s from level u_left."""
        raise NotImplementedError

    def sample_jump(self, rng, s, u_left, theta):
        raise NotImplementedError

    def alpha_vec(self, u, theta):
        u = np.asarray(u, dtype=float)
        return np.array([self.alpha(float(x), theta) for x in u])

    def phi_full(self, s, u, theta):
        a = self.alpha(u, theta)
        return 0.5 * (a * a + self.alpha_prime(u, theta)) + self.lam(s, u, theta)

    def phi_part(self, u, theta):
        a = self.alpha(u, theta)
        return 0.5 * (a * a + self.alpha_prime(u, theta))

    # --- bound providers ---
    def phi_range(self, ta, tb, lo, hi, theta):
        """Exact (inf, sup) of phi_full over s in [ta,tb], u in [lo,hi]."""
        raise NotImplementedError

    def phi_part_range(self, lo, hi, theta):
        """Exact (inf, sup) of (alpha^2+alpha')/2 over u in [lo,hi]."""
        raise NotImplementedError

    def phi_diff_range(self, ta, tb, lo, hi, theta_a, theta_b):
        """Valid (inf, sup) of phi_full(.,theta_a) - phi_full(.,theta_b)."""
        ia, sa = self.phi_range(ta, tb, lo, hi, theta_a)
        ib, sb = self.phi_range(ta, tb, lo, hi, theta_b)
        return ia - sb, sa - ib

    def m_r(self, ta, tb, theta):
        """Global (m_i, r_i): infimum of phi_full and rate bound sup-inf.

        r_i is None when phi_full is unbounded above (layer bounds required).
        """
        lo, hi = self.state_space_x(theta)
        inf_, sup_ = self.phi_range(ta, tb, lo, hi, theta)
        return inf_, (None if math.isinf(sup_) else sup_ - inf_)

    def ell(self, theta):
        """Global infimum of (alpha^2+alpha')/2 (EA refresh lower bound)."""
        lo, hi = self.state_space_x(theta)
        return self.phi_part_range(lo, hi, theta)[0]

    def state_space_x(self, theta):
        return -math.inf, math.inf

    # --- proposal jump process ---
    def proposal_rate(self, s, theta):
        raise NotImplementedError

    def proposal_rate_bound(self, theta):
        raise NotImplementedError

    def f0_logpdf(self, w, theta):
        raise NotImplementedError

    def f0_sample(self, rng, theta):
        raise NotImplementedError

    def c0(self, theta):
        """Lipschitz constant of A (sup |alpha|); None when unbounded."""
        raise NotImplementedError

    def f0_log_zeta(self, theta):
        c = self.c0(theta)
        if not c:
            return 0.0
        return self._f0_dist(theta).log_zeta(c)

    def f0_sample_tilted(self, rng, theta):
        c = self.c0(theta)
        if not c:
            return self.f0_sample(rng, theta)
        return self._f0_dist(theta).sample_tilted(rng, c)

    def _f0_dist(self, theta):
        raise NotImplementedError


class ModelSpec:
    """V-space description used by the oracle and for data simulation."""

    preset_id = "custom"

    def drift_b(self, v, s, theta):
        raise NotImplementedError

    def diffusion_sigma(self, v, theta):
        raise NotImplementedError

    def diffusion_sigma_prime(self, v, theta):
        raise NotImplementedError

    def jump_rate_lambda1(self, s, v, theta):
        raise NotImplementedError

    def jump_rate_bound(self, theta):
        raise NotImplementedError

    def sample_jump_z(self, rng, s, theta):
        raise NotImplementedError

    def jump_g1(self, z, v, theta):
        raise NotImplementedError

    def in_state_space(self, v) -> bool:
        return True

    def transform(self) -> TransformedModel:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# generic Lamperti transform (custom models, quadrature fallback)
# ---------------------------------------------------------------------------

def lamperti_transform(model: ModelSpec, v: float, theta: Theta,
                       v_star: float = 0.0) -> float:
    """eta(v) = int_{v*}^{v} du / sigma(u); quadrature fallback at 1e-10."""
    if not model.in_state_space(v):
        raise DomainError(f"v={v} outside the state space")

    def integrand(u):
        s = model.diffusion_sigma(u, theta)
        if s <= 0.0:
            raise DomainError(f"non-positive diffusion coefficient at u={u}")
        return 1.0 / s

    val, err = integrate.quad(integrand, v_star, v, epsabs=1e-10, limit=200)
    if err > 1e-8:
        raise RuntimeError(
            f"Lamperti quadrature did not converge on [{v_star}, {v}] (err={err:.2e})")
    return val


# ---------------------------------------------------------------------------
# preset: additive tanh drift with state-damped jump rate
# ---------------------------------------------------------------------------

def _sech2(w):
    c = np.cosh(w)
    return 1.0 / (c * c)


class TanhModel(ModelSpec, TransformedModel):
    """dV = -tanh(V - delta) ds + sigma dW + dJ, Gaussian jumps.

    Jump rate lam * (1 - tanh^2(v - delta)); theta = (delta, sigma2, lam, mu, tau2).
    """

    preset_id = "tanh-jump"
    theta_names = ("delta", "sigma2", "lam", "mu", "tau2")
    jumps_only = False
    lambda_state_dependent = True

    def default_theta(self, values=(0.0, 1.0, 0.1, 2.0, 0.1225)) -> Theta:
        return Theta(
            names=self.theta_names,
            values=np.asarray(values, dtype=float),
            support=((-20.0, 20.0), (1e-4, 1e4), (1e-6, 1e3),
                     (-50.0, 50.0), (1e-6, 1e4)),
            blocks={"theta1": ("delta", "sigma2"), "theta2": ("lam", "mu", "tau2")},
        )

    # V-space
    def drift_b(self, v, s, theta):
        return -math.tanh(v - theta.get("delta"))

    def diffusion_sigma(self, v, theta):
        return math.sqrt(theta.get("sigma2"))

    def diffusion_sigma_prime(self, v, theta):
        return 0.0

    def jump_rate_lambda1(self, s, v, theta):
        return theta.get("lam") * _sech2(v - theta.get("delta"))

    def jump_rate_bound(self, theta):
        return theta.get("lam")

    def sample_jump_z(self, rng, s, theta):
        return rng.normal(theta.get("mu"), math.sqrt(theta.get("tau2")))

    def jump_g1(self, z, v, theta):
        return z

    def transform(self):
        return self

    # X-space
    def _sig(self, theta):
        return math.sqrt(theta.get("sigma2"))

    def eta(self, v, theta):
        return v / self._sig(theta)

    def eta_inv(self, x, theta):
        return x * self._sig(theta)

    def eta_prime(self, v, theta):
        return 1.0 / self._sig(theta)

    def alpha(self, u, theta):
        s = self._sig(theta)
        return -math.tanh(s * u - theta.get("delta")) / s

    def alpha_vec(self, u, theta):
        s = self._sig(theta)
        return -np.tanh(s * np.asarray(u) - theta.get("delta")) / s

    def alpha_prime(self, u, theta):
        s = self._sig(theta)
        return -_sech2(s * u - theta.get("delta"))

    def A(self, u, theta):
        s2 = theta.get("sigma2")
        s = math.sqrt(s2)
        d = theta.get("delta")
        # log cosh with overflow guard
        w = s * u - d
        lc = abs(w) + math.log1p(math.exp(-2.0 * abs(w))) - math.log(2.0)
        lc0 = abs(d) + math.log1p(math.exp(-2.0 * abs(d))) - math.log(2.0)
        return -(lc - lc0) / s2

    def lam(self, s, u, theta):
        return theta.get("lam") * _sech2(self._sig(theta) * u - theta.get("delta"))

    def lambda_bound(self, theta):
        return theta.get("lam")

    def _fg_dist(self, theta):
        s = self._sig(theta)
        return NormalJumps(theta.get("mu") / s, math.sqrt(theta.get("tau2")) / s)

    def log_fg(self, w, s, u_left, theta):
        return self._fg_dist(theta).logpdf(w)

    def sample_jump(self, rng, s, u_left, theta):
        return self._fg_dist(theta).sample(rng)

    # phi_full = c1 + c2 * sech^2(sigma*u - delta)
    def _phi_coeffs(self, theta):
        s2 = theta.get("sigma2")
        c1 = 0.5 / s2
        c2 = theta.get("lam") - 0.5 * (1.0 + s2) / s2
        return c1, c2

    def _sech2_range(self, lo, hi, theta):
        s = self._sig(theta)
        d = theta.get("delta")
        w1, w2 = s * lo - d, s * hi - d
        if w1 <= 0.0 <= w2:
            qmax = 1.0
        else:
            qmax = _sech2(min(abs(w1), abs(w2)))
        if math.isinf(w1) or math.isinf(w2):
            qmin = 0.0
        else:
            qmin = _sech2(max(abs(w1), abs(w2)))
        return qmin, qmax

    def phi_range(self, ta, tb, lo, hi, theta):
        c1, c2 = self._phi_coeffs(theta)
        qmin, qmax = self._sech2_range(lo, hi, theta)
        vals = (c1 + c2 * qmin, c1 + c2 * qmax)
        return min(vals), max(vals)

    def phi_part_range(self, lo, hi, theta):
        s2 = theta.get("sigma2")
        c1 = 0.5 / s2
        c2 = -0.5 * (1.0 + s2) / s2
        qmin, qmax = self._sech2_range(lo, hi, theta)
        vals = (c1 + c2 * qmin, c1 + c2 * qmax)
        return min(vals), max(vals)

    # proposal: rate bound with the same Gaussian size density
    def proposal_rate(self, s, theta):
        return theta.get("lam")

    def proposal_rate_bound(self, theta):
        return theta.get("lam")

    def _f0_dist(self, theta):
        return self._fg_dist(theta)

    def f0_logpdf(self, w, theta):
        return self._f0_dist(theta).logpdf(w)

    def f0_sample(self, rng, theta):
        return self._f0_dist(theta).sample(rng)

    def c0(self, theta):
        return 1.0 / self._sig(theta)


# ---------------------------------------------------------------------------
# preset: Ornstein-Uhlenbeck drift with exponential jumps
# ---------------------------------------------------------------------------

class OUExpModel(ModelSpec, TransformedModel):
    """dV = -rho (V - mu) ds + dW + dJ, constant jump rate, Exp(theta_z) jumps."""

    preset_id = "ou-exp-jump"
    theta_names = ("rho", "mu", "lam", "theta_z")
    jumps_only = False
    lambda_state_dependent = False

    def default_theta(self, values=(1.0, 0.0, 0.07, 1.0)) -> Theta:
        return Theta(
            names=self.theta_names,
            values=np.asarray(values, dtype=float),
            support=((1e-4, 1e3), (-100.0, 100.0), (1e-8, 1e3), (1e-4, 1e4)),
            blocks={"theta1": ("rho", "mu"), "theta2": ("lam", "theta_z")},
        )

    # V-space
    def drift_b(self, v, s, theta):
        return -theta.get("rho") * (v - theta.get("mu"))

    def diffusion_sigma(self, v, theta):
        return 1.0

    def diffusion_sigma_prime(self, v, theta):
        return 0.0

    def jump_rate_lambda1(self, s, v, theta):
        return theta.get("lam")

    def jump_rate_bound(self, theta):
        return theta.get("lam")

    def sample_jump_z(self, rng, s, theta):
        return rng.exponential(1.0 / theta.get("theta_z"))

    def jump_g1(self, z, v, theta):
        return z

    def transform(self):
        return self

    # X-space (identity transform)
    def eta(self, v, theta):
        return v

    def eta_inv(self, x, theta):
        return x

    def eta_prime(self, v, theta):
        return 1.0

    def alpha(self, u, theta):
        return -theta.get("rho") * (u - theta.get("mu"))

    def alpha_vec(self, u, theta):
        return -theta.get("rho") * (np.asarray(u) - theta.get("mu"))

    def alpha_prime(self, u, theta):
        return -theta.get("rho")

    def A(self, u, theta):
        r, m = theta.get("rho"), theta.get("mu")
        return -0.5 * r * u * u + r * m * u

    def lam(self, s, u, theta):
        return theta.get("lam")

    def lambda_bound(self, theta):
        return theta.get("lam")

    def _fg_dist(self, theta):
        return ExponentialJumps(theta.get("theta_z"))

    def log_fg(self, w, s, u_left, theta):
        return self._fg_dist(theta).logpdf(w)

    def sample_jump(self, rng, s, u_left, theta):
        return self._fg_dist(theta).sample(rng)

    def phi_part_range(self, lo, hi, theta):
        r, m = theta.get("rho"), theta.get("mu")
        dmax = max(abs(lo - m), abs(hi - m))
        dmin = 0.0 if lo <= m <= hi else min(abs(lo - m), abs(hi - m))
        low = 0.5 * (r * r * dmin * dmin - r)
        high = math.inf if math.isinf(dmax) else 0.5 * (r * r * dmax * dmax - r)
        return low, high

    def phi_range(self, ta, tb, lo, hi, theta):
        plo, phi_ = self.phi_part_range(lo, hi, theta)
        lam = theta.get("lam")
        return plo + lam, phi_ + lam

    def phi_diff_range(self, ta, tb, lo, hi, theta_a, theta_b):
        # difference of two quadratics: exact range via vertex and endpoints
        ra, ma = theta_a.get("rho"), theta_a.get("mu")
        rb, mb = theta_b.get("rho"), theta_b.get("mu")
        a2 = 0.5 * (ra * ra - rb * rb)
        a1 = -(ra * ra * ma - rb * rb * mb)
        a0 = 0.5 * (ra * ra * ma * ma - rb * rb * mb * mb) \
            + 0.5 * (rb - ra) + theta_a.get("lam") - theta_b.get("lam")

        def q(u):
            return (a2 * u + a1) * u + a0

        cands = [q(lo), q(hi)]
        if a2 != 0.0:
            v = -a1 / (2.0 * a2)
            if lo < v < hi:
                cands.append(q(v))
        return min(cands), max(cands)

    def proposal_rate(self, s, theta):
        return theta.get("lam")

    def proposal_rate_bound(self, theta):
        return theta.get("lam")

    def _f0_dist(self, theta):
        return self._fg_dist(theta)

    def f0_logpdf(self, w, theta):
        return self._f0_dist(theta).logpdf(w)

    def f0_sample(self, rng, theta):
        return self._f0_dist(theta).sample(rng)

    def c0(self, theta):
        return None  # alpha unbounded: no Lipschitz proposal


# ---------------------------------------------------------------------------
# preset: scaled Brownian motion with piecewise-constant jump rate
# ---------------------------------------------------------------------------

class PiecewiseBMModel(ModelSpec, TransformedModel):
    """dV = b dW + dJ with piecewise-in-time jump rate and signed-gamma sizes.

    theta = (b2, lam_1..lam_K, p); the change-point partition is fixed at
    construction.  Jump sizes z ~ p G(shape,rate) + (1-p)(-G(shape,rate)).
    """

    preset_id = "piecewise-bm"
    jumps_only = True
    lambda_state_dependent = False

    def __init__(self, breakpoints, gamma_shape: float = 8.0,
                 gamma_rate: float = 1000.0, sign_matched: bool = True):
        self.breakpoints = tuple(float(b) for b in breakpoints)  # piece edges incl. 0, T
        if len(self.breakpoints) < 2:
            raise ValueError("need at least one piece")
        self.n_pieces = len(self.breakpoints) - 1
        self.gamma_shape = gamma_shape
        self.gamma_rate = gamma_rate
        self.sign_matched = sign_matched
        self.theta_names = ("b2",) + tuple(
            f"lam_{k+1}" for k in range(self.n_pieces)) + ("p",)

    def default_theta(self, values=None) -> Theta:
        if values is None:
            values = [0.002 ** 2] + [0.3] * self.n_pieces + [0.5]
        support = ((1e-12, 1.0),) + ((1e-8, 1e3),) * self.n_pieces + ((1e-6, 1.0 - 1e-6),)
        return Theta(names=self.theta_names,
                     values=np.asarray(values, dtype=float),
                     support=support,
                     blocks={"theta1": (), "theta2": self.theta_names})

    def piece_index(self, s):
        k = int(np.searchsorted(self.breakpoints, s, side="right")) - 1
        return min(max(k, 0), self.n_pieces - 1)

    # V-space
    def drift_b(self, v, s, theta):
        return 0.0

    def diffusion_sigma(self, v, theta):
        return math.sqrt(theta.get("b2"))

    def diffusion_sigma_prime(self, v, theta):
        return 0.0

    def jump_rate_lambda1(self, s, v, theta):
        return theta.get(f"lam_{self.piece_index(s) + 1}")

    def jump_rate_bound(self, theta):
        return max(theta.get(f"lam_{k+1}") for k in range(self.n_pieces))

    def sample_jump_z(self, rng, s, theta):
        z = rng.gamma(self.gamma_shape, 1.0 / self.gamma_rate)
        return z if rng.random() < theta.get("p") else -z

    def jump_g1(self, z, v, theta):
        return z

    def transform(self):
        return self

    # X-space
    def _b(self, theta):
        return math.sqrt(theta.get("b2"))

    def eta(self, v, theta):
        return v / self._b(theta)

    def eta_inv(self, x, theta):
        return x * self._b(theta)

    def eta_prime(self, v, theta):
        return 1.0 / self._b(theta)

    def alpha(self, u, theta):
        return 0.0

    def alpha_vec(self, u, theta):
        return np.zeros(np.asarray(u).shape)

    def alpha_prime(self, u, theta):
        return 0.0

    def A(self, u, theta):
        return 0.0

    def lam(self, s, u, theta):
        return self.jump_rate_lambda1(s, None, theta)

    def lambda_bound(self, theta):
        return self.jump_rate_bound(theta)

    def _fg_dist(self, theta):
        return SignedGammaJumps(theta.get("p"), self.gamma_shape,
                                self.gamma_rate, scale=self._b(theta))

    def log_fg(self, w, s, u_left, theta):
        return self._fg_dist(theta).logpdf(w)

    def sample_jump(self, rng, s, u_left, theta):
        return self._fg_dist(theta).sample(rng)

    def phi_part_range(self, lo, hi, theta):
        return 0.0, 0.0

    def phi_range(self, ta, tb, lo, hi, theta):
        ka, kb = self.piece_index(ta), self.piece_index(min(tb, self.breakpoints[-1]) - 1e-12)
        lams = [theta.get(f"lam_{k+1}") for k in range(ka, kb + 1)]
        return min(lams), max(lams)

    def proposal_rate(self, s, theta):
        # proposal copies the target's time dependence
        return self.lam(s, None, theta)

    def proposal_rate_bound(self, theta):
        return self.lambda_bound(theta)

    def _f0_dist(self, theta):
        return self._fg_dist(theta)

    def f0_logpdf(self, w, theta):
        return self._f0_dist(theta).logpdf(w)

    def f0_sample(self, rng, theta):
        return self._f0_dist(theta).sample(rng)

    def c0(self, theta):
        return 0.0


# ---------------------------------------------------------------------------
# preset: Pareto-Beta jump-diffusion (geometric diffusion, mu = 0)
# ---------------------------------------------------------------------------

class PBJDModel(ModelSpec, TransformedModel):
    """dV = sigma V dW + dJ with jump (Z-1)V, Z ~ p Pareto(eta_u) + (1-p) Beta(eta_d,1).

    Drift is fixed at zero.  In X-space the jump sizes are a two-sided
    exponential mixture and the drift is the constant -sigma/2.
    theta = (sigma, lam, p, eta_u, eta_d) or, with rates_param=True,
    (sigma, lam_u, lam_d, eta_u, eta_d).
    """

    preset_id = "pbjd"
    jumps_only = True
    lambda_state_dependent = False

    def __init__(self, rates_param: bool = False):
        self.rates_param = rates_param
        if rates_param:
            self.theta_names = ("sigma", "lam_u", "lam_d", "eta_u", "eta_d")
        else:
            self.theta_names = ("sigma", "lam", "p", "eta_u", "eta_d")

    def default_theta(self, values=None) -> Theta:
        if values is None:
            values = ((0.00577, 0.447, 0.394, 144.5, 125.2) if self.rates_param
                      else (0.00577, 0.841, 0.532, 144.5, 125.2))
        if self.rates_param:
            support = ((1e-8, 10.0), (1e-8, 1e3), (1e-8, 1e3), (1.0, 1e5), (1e-4, 1e5))
        else:
            support = ((1e-8, 10.0), (1e-8, 1e3), (1e-6, 1.0 - 1e-6), (1.0, 1e5), (1e-4, 1e5))
        return Theta(names=self.theta_names,
                     values=np.asarray(values, dtype=float),
                     support=support,
                     blocks={"theta1": ("sigma",),
                             "theta2": tuple(n for n in self.theta_names if n != "sigma")})

    def _lam_p(self, theta):
        if self.rates_param:
            lu, ld = theta.get("lam_u"), theta.get("lam_d")
            return lu + ld, lu / (lu + ld)
        return theta.get("lam"), theta.get("p")

    # V-space
    def drift_b(self, v, s, theta):
        return 0.0

    def diffusion_sigma(self, v, theta):
        if v <= 0.0:
            raise DomainError("pbjd requires v > 0")
        return theta.get("sigma") * v

    def diffusion_sigma_prime(self, v, theta):
        return theta.get("sigma")

    def jump_rate_lambda1(self, s, v, theta):
        return self._lam_p(theta)[0]

    def jump_rate_bound(self, theta):
        return self._lam_p(theta)[0]

    def sample_jump_z(self, rng, s, theta):
        lam, p = self._lam_p(theta)
        if rng.random() < p:
            return (1.0 - rng.random()) ** (-1.0 / theta.get("eta_u"))  # Pareto on (1,inf)
        return rng.random() ** (1.0 / theta.get("eta_d"))  # Beta(eta_d, 1)

    def jump_g1(self, z, v, theta):
        return (z - 1.0) * v

    def in_state_space(self, v) -> bool:
        return v > 0.0

    def transform(self):
        return self

    # X-space
    def eta(self, v, theta):
        if v <= 0.0:
            raise DomainError("pbjd requires v > 0")
        return math.log(v) / theta.get("sigma")

    def eta_inv(self, x, theta):
        return math.exp(x * theta.get("sigma"))

    def eta_prime(self, v, theta):
        return 1.0 / (theta.get("sigma") * v)

    def alpha(self, u, theta):
        return -0.5 * theta.get("sigma")

    def alpha_vec(self, u, theta):
        return np.full(np.asarray(u).shape, -0.5 * theta.get("sigma"))

    def alpha_prime(self, u, theta):
        return 0.0

    def A(self, u, theta):
        return -0.5 * theta.get("sigma") * u

    def lam(self, s, u, theta):
        return self._lam_p(theta)[0]

    def lambda_bound(self, theta):
        return self._lam_p(theta)[0]

    def _fg_dist(self, theta):
        lam, p = self._lam_p(theta)
        sig = theta.get("sigma")
        return TwoSidedExpJumps(p, sig * theta.get("eta_u"), sig * theta.get("eta_d"))

    def log_fg(self, w, s, u_left, theta):
        return self._fg_dist(theta).logpdf(w)

    def sample_jump(self, rng, s, u_left, theta):
        return self._fg_dist(theta).sample(rng)

    def phi_part_range(self, lo, hi, theta):
        c = theta.get("sigma") ** 2 / 8.0
        return c, c

    def phi_range(self, ta, tb, lo, hi, theta):
        c = theta.get("sigma") ** 2 / 8.0 + self._lam_p(theta)[0]
        return c, c

    def proposal_rate(self, s, theta):
        return self._lam_p(theta)[0]

    def proposal_rate_bound(self, theta):
        return self._lam_p(theta)[0]

    def _f0_dist(self, theta):
        return self._fg_dist(theta)

    def f0_logpdf(self, w, theta):
        return self._f0_dist(theta).logpdf(w)

    def f0_sample(self, rng, theta):
        return self._f0_dist(theta).sample(rng)

    def c0(self, theta):
        return 0.5 * theta.get("sigma")


# ---------------------------------------------------------------------------
# assumption validation
# ---------------------------------------------------------------------------

JBEA_LETTERS = tuple("abcdefghi")
GENERAL_LETTERS = ("a", "c", "e", "i")


@dataclass
class AssumptionReport:
    verdicts: dict
    notes: dict

    def jbea_ok(self) -> bool:
        return all(self.verdicts[k] == "holds" for k in JBEA_LETTERS)

    def general_ok(self) -> bool:
        return all(self.verdicts[k] == "holds" for k in GENERAL_LETTERS)

    def violated(self) -> list[str]:
        return [k for k, v in self.verdicts.items() if v == "violated"]


def validate_assumptions(tm: TransformedModel, theta: Theta) -> AssumptionReport:
    """Per-assumption verdict for the exact-sampler requirements (a)-(i)."""
    v = {k: "undecidable-for-custom" for k in JBEA_LETTERS}
    notes = {}
    pid = getattr(tm, "preset_id", "custom")
    if pid == "custom":
        decl = getattr(tm, "declared_assumptions", None)
        if decl:
            v.update(decl)
        return AssumptionReport(v, notes)

    lo, hi = tm.state_space_x(theta)
    v["a"] = "holds"  # presets ship continuously differentiable alpha
    part_lo, part_hi = tm.phi_part_range(lo, hi, theta)
    v["b"] = "holds" if part_lo > -math.inf else "violated"
    v["d"] = "holds" if math.isfinite(tm.lambda_bound(theta)) else "violated"
    v["e"] = "holds"  # f0 matches the f_g family on every preset
    v["f"] = "holds"
    # (g): proposal rate dominates lambda * fg / f0
    v["g"] = "holds" if tm.proposal_rate_bound(theta) >= tm.lambda_bound(theta) - 1e-12 \
        else "violated"
    c0 = tm.c0(theta)
    if c0 is None:
        v["h"] = "violated"
        notes["h"] = "alpha is unbounded"
    else:
        v["h"] = "holds"
    try:
        tm.f0_log_zeta(theta)
        v["i"] = "holds"
    except DomainError as exc:
        v["i"] = "violated"
        notes["i"] = str(exc)
    # (c) requires the proposal construction to dominate the bridge law
    v["c"] = "holds" if v["e"] == "holds" and v["d"] == "holds" else "violated"
    return AssumptionReport(v, notes)


def eval_alpha_A_phi(tm: TransformedModel, s: float, u: float, theta: Theta,
                     m_i: float | None = None):
    """(alpha, alpha', A, phi) at one point; phi needs the interval infimum m_i."""
    if m_i is None:
        raise ContractError("m_i (interval infimum of phi_full) is required")
    a = tm.alpha(u, theta)
    ap = tm.alpha_prime(u, theta)
    phi = tm.phi_full(s, u, theta) - m_i
    if phi < -1e-9:
        raise RuntimeError(f"phi negative ({phi}) - m_i is not an infimum")
    return a, ap, tm.A(u, theta), max(phi, 0.0)


# ---------------------------------------------------------------------------
# preset registry
# ---------------------------------------------------------------------------

PRESETS = {
    "tanh-jump": TanhModel,
    "ou-exp-jump": OUExpModel,
    "piecewise-bm": PiecewiseBMModel,
    "pbjd": PBJDModel,
}


def get_preset(preset_id: str, **kwargs):
    if preset_id not in PRESETS:
        raise KeyError(f"unknown preset '{preset_id}' (have {sorted(PRESETS)})")
    return PRESETS[preset_id](**kwargs)
