"""Constraint specifications, adaptive lace bounds, pruning predicates,
importance weights and execution risk."""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .belief import cvar_deviation, info_gain, prob_safe
from .errors import AllUnsafe, ConfigError, DegenerateBelief, IncompleteExpansion

CUMULATIVE = "cumulative"
MULTIPLICATIVE = "multiplicative"

PROB_SAFE = "prob_safe"
NEG_CVAR = "neg_cvar"
INFO_GAIN = "info_gain"
REACH_GOAL = "reach_goal"
OPERATORS = (PROB_SAFE, NEG_CVAR, INFO_GAIN, REACH_GOAL)

_TOL = 1e-9


@dataclass(frozen=True)
class ConstraintSpec:
    delta: float = 0.8
    epsilon: float = 0.0
    form: str = MULTIPLICATIVE
    operator: str = PROB_SAFE
    sc: bool = False
    alpha: float = 0.95  # CVaR level
    goal_radius: float = 0.5  # for reach_goal

    def __post_init__(self):
        if self.form not in (CUMULATIVE, MULTIPLICATIVE):
            raise ConfigError(f"unknown constraint form {self.form!r}")
        if self.operator not in OPERATORS:
            raise ConfigError(f"unknown operator {self.operator!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if not math.isfinite(self.delta):
            raise ConfigError("delta must be finite")
        if self.form == MULTIPLICATIVE and self.operator == PROB_SAFE and not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta must lie in [0, 1] for a safety-probability constraint")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must lie in (0, 1]")
        if not self.goal_radius > 0:
            raise ConfigError("goal_radius must be positive")

    @property
    def exact_pruning(self):
        """Per-belief pruning decides the outer constraint exactly."""
        return self.form == MULTIPLICATIVE and self.epsilon == 0.0

    def phi(self, belief, scenario, parent=None):
        """Belief-dependent operator value at ``belief`` (``parent`` for info gain)."""
        if self.operator == PROB_SAFE:
            return prob_safe(belief, scenario.obstacles)
        if self.operator == NEG_CVAR:
            if not scenario.obstacles:
                return 0.0
            return -max(cvar_deviation(belief, ob, self.alpha) for ob in scenario.obstacles)
        if self.operator == INFO_GAIN:
            if parent is None:
                raise ValueError("information gain needs the parent belief")
            return info_gain(parent, None, None, belief, scenario)
        x = belief.particles
        ref = np.asarray(scenario.goal) if scenario.kind == "navigation" else x[:, 2:4]
        d = np.sqrt(((x[:, :2] - ref) ** 2).sum(axis=1))
        return float(belief.weights[d <= self.goal_radius].sum())


def inner_constraint(phi_values, spec):
    """Lace indicator c: cumulative sum above delta, or every value at least delta."""
    phi = np.asarray(phi_values, dtype=np.float64)
    if spec.form == CUMULATIVE:
        total = float(phi.sum())
        ok = total >= spec.delta if spec.operator == REACH_GOAL else total > spec.delta
        return int(ok)
    return int(np.all(phi >= spec.delta))


class Decision(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    CONTINUE = "continue"


def accept_reject_counters(m, epsilon):
    """(n_accept, n_reject) = (ceil(m(1-eps)), floor(m eps))."""
    if m < 1:
        raise ValueError("m must be positive")
    return math.ceil(m * (1.0 - epsilon) - _TOL), math.floor(m * epsilon + _TOL)


@dataclass
class AdaptiveCounter:
    m: int
    n: int = 0
    successes: int = 0

    def __post_init__(self):
        if self.m < 1 or not 0 <= self.successes <= self.n <= self.m:
            raise ValueError("need 0 <= successes <= n <= m and m >= 1")

    def add(self, c):
        if self.n >= self.m:
            raise ValueError("all laces already counted")
        self.n += 1
        self.successes += int(bool(c))

    @property
    def failures(self):
        return self.n - self.successes

    @property
    def lower(self):
        return self.successes / self.m

    @property
    def upper(self):
        # one division, so a fully successful remainder gives exactly successes/m
        return (self.m - self.n + self.successes) / self.m


def outer_estimate(counter):
    if counter.n < counter.m:
        raise IncompleteExpansion(f"only {counter.n} of {counter.m} laces expanded")
    return counter.successes / counter.m


def adaptive_decision(counter, epsilon):
    """Accept iff LB >= 1-eps, Reject iff UB < 1-eps, otherwise Continue.

    Evaluated on integer counts so float rounding cannot flip a boundary case.
    """
    n_acc, n_rej = accept_reject_counters(counter.m, epsilon)
    if counter.successes >= n_acc:
        return Decision.ACCEPT
    if counter.failures > n_rej:
        return Decision.REJECT
    return Decision.CONTINUE


def pc_prune_check(phi_child, delta):
    """Prune the parent action iff the child belief violates phi >= delta."""
    return phi_child < delta


def importance_weights_from_loglik(loglik, parent_weights, parent_safe):
    """Self-normalized safe-prior / full-belief observation likelihood ratios.

    loglik: (m_d, m_x) log p(z_j | x'_i) for propagated particles x'_i whose
    parents carry weights ``parent_weights`` and safety flags ``parent_safe``.
    """
    w = np.asarray(parent_weights, dtype=np.float64)
    s = np.asarray(parent_safe, dtype=bool)
    ws = np.where(s, w, 0.0)
    safe_mass = ws.sum()
    if safe_mass <= 0.0:
        raise AllUnsafe("every parent particle is unsafe")
    if s.all():
        return np.full(loglik.shape[0], 1.0 / loglik.shape[0])
    with np.errstate(divide="ignore"):
        log_num = kernels.logsumexp_rows(loglik, np.log(ws / safe_mass))
        log_den = kernels.logsumexp_rows(loglik, np.log(w / w.sum()))
    return importance_weights_from_logdens(log_num, log_den)


def importance_weights_from_logdens(log_num, log_den):
    """Self-normalized weights proportional to exp(log_num - log_den).

    Samples impossible under the target (log_num = -inf) get weight zero.
    """
    log_num = np.asarray(log_num, dtype=np.float64)
    log_den = np.asarray(log_den, dtype=np.float64)
    ratio = np.where(np.isfinite(log_num), log_num - np.where(np.isfinite(log_den), log_den, 0.0), -np.inf)
    if not np.any(np.isfinite(ratio)):
        raise DegenerateBelief("no sampled observation is possible under the target law")
    return kernels.normalize_rows(ratio[None, :])[0]


def importance_weights(z_samples, b, propagated, obstacles, scenario):
    """Importance weights of observations drawn from the full-belief law.

    ``propagated`` must hold the particles of ``b`` pushed through the motion
    model in the same order, so parent safety flags line up.
    """
    from .belief import _safe
    from .models import observation_loglik_matrix

    ll = observation_loglik_matrix(z_samples, propagated.particles, scenario)
    return importance_weights_from_loglik(ll, b.weights, _safe(b.particles, obstacles))


def execution_risk(r_b, weights=None, child_er=None):
    """er(b) = r_b + (1 - r_b) * sum_j w_j er(b_j); a leaf has er = r_b."""
    if r_b >= 1.0:
        return 1.0
    if weights is None or len(weights) == 0:
        return float(r_b)
    return float(r_b + (1.0 - r_b) * np.dot(weights, child_er))


def cc_prune_bound(i, weights, child_risks, parent_risk, Delta):
    """Upper bound on child i's risk implied by er(parent) <= Delta.

    Returns -inf when the parent risk is 1 (always prune). A zero-weight child
    is unconstrained (+inf) unless the other children already break the bound.
    """
    if parent_risk >= 1.0:
        return -math.inf
    w = np.asarray(weights, dtype=np.float64)
    r = np.asarray(child_risks, dtype=np.float64)
    rest = float(w @ r - w[i] * r[i])
    slack = (Delta - parent_risk) / (1.0 - parent_risk) - rest
    if w[i] <= 0.0:
        return math.inf if slack >= 0.0 else -math.inf
    return slack / w[i]


def cc_prune_check(weights, child_risks, parent_risk, Delta):
    """True (prune) when some child's risk exceeds its necessary-condition bound.

    For positive weights the per-child bounds all reduce to the single test
    sum_j w_j r_j > (Delta - r) / (1 - r), which is what is evaluated here.
    """
    if parent_risk >= 1.0:
        return True
    r = np.asarray(child_risks, dtype=np.float64)
    if np.any(r >= 1.0):
        return True
    target = (Delta - parent_risk) / (1.0 - parent_risk)
    return float(np.dot(weights, r)) > target


def scaled_delta(delta, depth_remaining, L, sc):
    """Per-depth threshold: delta, or delta**(depth_remaining / L) when scaling."""
    if not 1 <= depth_remaining <= L:
        raise ValueError("depth_remaining must lie in [1, L]")
    if not sc:
        return delta
    return float(delta ** (depth_remaining / L))
