"""Weighted particle beliefs, the particle-filter update and belief operators."""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AllUnsafe, DegenerateBelief
from .models import (
    NAVIGATION,
    Obstacle,
    in_safe_space,
    observation_loglik_matrix,
    penetration_depth,
    safe_mask,
    transition_sample,
)

ENTROPY_FLOOR = 1e-300
_NORM_TOL = 1e-12


class ParticleBelief:
    """Immutable weighted particle set. Weights are normalized on construction."""

    __slots__ = ("particles", "weights", "uniform")

    def __init__(self, particles, weights=None, uniform=None):
        x = np.array(particles, dtype=np.float64, ndmin=2)
        n = x.shape[0]
        if n < 1:
            raise ValueError("a belief needs at least one particle")
        if weights is None:
            w = np.full(n, 1.0 / n)
            uniform = True
        else:
            w = np.array(weights, dtype=np.float64).reshape(n)
            if np.any(np.isnan(w)) or np.any(w < 0):
                raise ValueError("weights must be non-negative numbers")
            s = w.sum()
            if not s > 0:
                raise DegenerateBelief("total weight is zero")
            if abs(s - 1.0) > _NORM_TOL:
                w = w / s
        x.setflags(write=False)
        w.setflags(write=False)
        self.particles = x
        self.weights = w
        # every weight equal (lets callers skip weighted sums)
        self.uniform = bool(uniform) if uniform is not None else bool(np.all(w == w[0]))

    @classmethod
    def from_gaussian(cls, mean, cov, m, rng):
        x = rng.multivariate_normal(np.asarray(mean, float), np.asarray(cov, float), size=m)
        return cls(x)

    @property
    def m(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    def mean(self):
        return self.weights @ self.particles

    def cov(self):
        d = self.particles - self.mean()
        return (d * self.weights[:, None]).T @ d

    def ess(self):
        return 1.0 / float(self.weights @ self.weights)

    def to_csv(self, path):
        """Write (x1, x2[, x3, x4], weight) rows."""
        cols = [f"x{i + 1}" for i in range(self.dim)] + ["weight"]
        data = np.column_stack([self.particles, self.weights])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")

    def __repr__(self):
        return f"ParticleBelief(m={self.m}, dim={self.dim}, mean={np.round(self.mean(), 4)})"


@dataclass(frozen=True)
class SafeProjectionResult:
    belief: ParticleBelief
    survival_mass: float


def _obstacles(spec):
    """Accept an Obstacle, a sequence of them, or anything with ``.obstacles``."""
    if isinstance(spec, Obstacle):
        return (spec,)
    if hasattr(spec, "obstacles"):
        return tuple(spec.obstacles)
    return tuple(spec)


def _safe(particles, spec):
    ok = np.ones(particles.shape[0], dtype=bool)
    for ob in _obstacles(spec):
        ok &= in_safe_space(particles, ob)
    return ok


def systematic_resample(b, rng):
    """Equal-weight systematic resample of b to the same particle count."""
    with np.errstate(divide="ignore"):
        logw = np.log(b.weights)[None, :]
    idx = kernels.systematic_indices(logw, np.array([rng.random()]))[0]
    return ParticleBelief(b.particles[idx])


def propagate(b, a, scenario, rng):
    """Push every particle through the transition model, weights untouched."""
    x = transition_sample(b.particles, a, scenario, rng)
    return ParticleBelief(x, b.weights, uniform=b.uniform)


def reweight(b, loglik):
    """Multiply weights by exp(loglik) and normalize."""
    logw = np.log(b.weights) + loglik
    try:
        w = kernels.normalize_rows(logw[None, :])[0]
    except FloatingPointError:
        raise DegenerateBelief("all observation likelihoods underflowed") from None
    return ParticleBelief(b.particles, w, uniform=False)


def pf_update(b, a, z, scenario, rng, resample=True):
    """Particle-filter update: propagate, weight by p(z|x'), resample."""
    prop = propagate(b, a, scenario, rng)
    ll = observation_loglik_matrix(z, prop.particles, scenario)[0]
    post = reweight(prop, ll)
    return systematic_resample(post, rng) if resample else post


def safe_projection(b, obstacles, rng=None):
    """Zero the unsafe mass, renormalize and (given rng) resample.

    Identity when every particle is safe; no random numbers are consumed then.
    """
    ok = _safe(b.particles, obstacles)
    mass = float(b.weights[ok].sum())
    if mass <= 0.0:
        raise AllUnsafe("the belief cannot be made safe")
    if ok.all():
        return SafeProjectionResult(b, 1.0)
    w = np.where(ok, b.weights, 0.0)
    out = ParticleBelief(b.particles, w / mass, uniform=False)
    if rng is not None:
        out = systematic_resample(out, rng)
    return SafeProjectionResult(out, mass)


def prob_safe(b, obstacles):
    """Weighted mass of particles outside every obstacle."""
    return float(b.weights[_safe(b.particles, obstacles)].sum())


def _var_cvar(zeta, w, alpha):
    order = np.argsort(zeta, kind="stable")
    zs, ws = zeta[order], w[order]
    cum = np.cumsum(ws)
    k = int(np.searchsorted(cum, (1.0 - alpha) - 1e-12, side="left"))
    var = zs[min(k, zs.size - 1)]
    tail = zs >= var
    return var, float(ws[tail] @ zs[tail] / ws[tail].sum())


def value_at_risk(b, obstacle, alpha):
    zeta = penetration_depth(b.particles, obstacle)
    return float(_var_cvar(zeta, b.weights, alpha)[0])


def cvar_deviation(b, obstacle, alpha):
    """CVaR at level alpha of the penetration depth into the obstacle."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    zeta = penetration_depth(b.particles, obstacle)
    if not np.any(zeta > 0):
        return 0.0
    return _var_cvar(zeta, b.weights, alpha)[1]


def entropy_estimate(b, scenario=None):
    """Differential entropy by weighted Gaussian-KDE resubstitution.

    Bandwidth follows Scott's rule on the effective sample size. Kernel
    densities below ``ENTROPY_FLOOR`` are clamped with a warning.
    """
    x, w = b.particles, b.weights
    n, d = x.shape
    n_eff = b.ess()
    h2 = n_eff ** (-2.0 / (d + 4))
    cov = b.cov()
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals, 1e-12 * max(1.0, evals.max()))
    H = h2 * evals
    # whiten so the kernel becomes isotropic
    y = (x @ evecs) / np.sqrt(H)
    log_norm = -0.5 * d * np.log(2 * np.pi) - 0.5 * np.log(H).sum()
    logw = np.log(np.maximum(w, ENTROPY_FLOOR))
    sq = (y * y).sum(axis=1)
    dens_log = np.empty(n)
    step = max(1, 2_000_000 // n)
    for s in range(0, n, step):
        blk = y[s:s + step]
        d2 = sq[s:s + step, None] + sq[None, :] - 2.0 * blk @ y.T
        np.maximum(d2, 0.0, out=d2)
        dens_log[s:s + step] = kernels.logsumexp_rows(-0.5 * d2, logw)
    dens_log += log_norm
    floor = np.log(ENTROPY_FLOOR)
    if np.any(dens_log < floor):
        warnings.warn("kernel density below floor; clamped", RuntimeWarning, stacklevel=2)
        dens_log = np.maximum(dens_log, floor)
    return float(-(w @ dens_log))


def info_gain(b, a, z, b_post, scenario=None):
    """H(b) - H(b') with the same entropy estimator on both beliefs."""
    return entropy_estimate(b, scenario) - entropy_estimate(b_post, scenario)


def mean_sq_goal_distance(b, goal):
    d = b.particles[:, :2] - np.asarray(goal, dtype=np.float64)
    return float(b.weights @ (d * d).sum(axis=1))


def state_reward_values(particles, scenario):
    """Per-particle r^x: -|x - goal|^2 or -|x_agent - x_target|^2."""
    if scenario.kind == NAVIGATION:
        d = particles[:, :2] - np.asarray(scenario.goal)
    else:
        d = particles[:, :2] - particles[:, 2:4]
    return -(d * d).sum(axis=1)


def state_reward(b, scenario):
    """Weighted mean of r^x over the belief."""
    return float(b.weights @ state_reward_values(b.particles, scenario))


__all__ = [
    "ParticleBelief",
    "SafeProjectionResult",
    "systematic_resample",
    "propagate",
    "reweight",
    "pf_update",
    "safe_projection",
    "prob_safe",
    "value_at_risk",
    "cvar_deviation",
    "entropy_estimate",
    "info_gain",
    "mean_sq_goal_distance",
    "state_reward",
    "state_reward_values",
    "safe_mask",
]
