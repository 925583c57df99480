"""Transition and observation models for beacon navigation and target tracking.

States are stored as rows: shape (D,) for one state or (n, D) for a particle
set. D is 2 for navigation and 4 (agent then target) for tracking. All
sampling functions take an explicit ``numpy.random.Generator``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError

NAVIGATION = "navigation"
TRACKING = "tracking"
DISK = "disk"
SQUARE = "square"

ACTION_NAMES = ("E", "NE", "N", "NW", "W", "SW", "S", "SE", "NULL")
_D = 1.0 / np.sqrt(2.0)
ACTIONS = np.array(
    [[1, 0], [_D, _D], [0, 1], [-_D, _D], [-1, 0], [-_D, -_D], [0, -1], [_D, -_D], [0, 0]],
    dtype=np.float64,
)
ACTIONS.setflags(write=False)
NULL_ACTION = ACTION_NAMES.index("NULL")


def action_index(name):
    try:
        return ACTION_NAMES.index(name.upper())
    except ValueError:
        raise ConfigError(f"unknown action {name!r}; expected one of {ACTION_NAMES}") from None


@dataclass(frozen=True)
class NoiseParams:
    sigma_w_sq: float = 0.1
    sigma_v_sq: float = 0.01
    r_min: float = 0.01
    gamma: float = 0.99

    def __post_init__(self):
        for name in ("sigma_w_sq", "sigma_v_sq", "r_min"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float
    shape: str = DISK

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise ConfigError("obstacle center must be 2-D")
        if not self.radius > 0:
            raise ConfigError("obstacle radius must be positive")
        if self.shape not in (DISK, SQUARE):
            raise ConfigError(f"unknown obstacle shape {self.shape!r}")

    def distance(self, pos):
        """Distance from obstacle center in the obstacle's norm. pos: (..., 2)."""
        d = np.asarray(pos, dtype=np.float64) - np.asarray(self.center)
        if self.shape == DISK:
            return np.sqrt((d * d).sum(axis=-1))
        return np.abs(d).max(axis=-1)


def _vec(x):
    return tuple(float(v) for v in np.asarray(x, dtype=np.float64).ravel())


@dataclass(frozen=True)
class Scenario:
    kind: str
    beacons: tuple
    obstacles: tuple
    prior_mean: tuple
    prior_cov: tuple
    ground_truth_init: tuple
    goal: tuple = None
    target_script: tuple = ()
    noise: NoiseParams = field(default_factory=NoiseParams)
    name: str = ""

    def __post_init__(self):
        if self.kind not in (NAVIGATION, TRACKING):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        dim = 2 if self.kind == NAVIGATION else 4
        beacons = tuple(_vec(b) for b in self.beacons)
        if not beacons or any(len(b) != 2 for b in beacons):
            raise ConfigError("need at least one 2-D beacon")
        obstacles = tuple(o if isinstance(o, Obstacle) else Obstacle(**o) for o in self.obstacles)
        mean = _vec(self.prior_mean)
        gt = _vec(self.ground_truth_init)
        if len(mean) != dim or len(gt) != dim:
            raise ConfigError(f"{self.kind} states have dimension {dim}")
        cov = np.asarray(self.prior_cov, dtype=np.float64)
        if cov.shape != (dim, dim) or not np.allclose(cov, cov.T):
            raise ConfigError("prior_cov must be a symmetric matrix of the state dimension")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ConfigError("prior_cov must be positive definite") from None
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(gt)):
            raise ConfigError("non-finite state")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("beacons", beacons)
        set_("obstacles", obstacles)
        set_("prior_mean", mean)
        set_("ground_truth_init", gt)
        set_("prior_cov", tuple(tuple(float(v) for v in row) for row in cov))
        if self.kind == NAVIGATION:
            if self.goal is None or len(_vec(self.goal)) != 2:
                raise ConfigError("navigation needs a 2-D goal")
            set_("goal", _vec(self.goal))
        else:
            if not self.target_script:
                raise ConfigError("tracking needs a non-empty target script")
            set_("target_script", tuple(ACTION_NAMES[action_index(a)] for a in self.target_script))
            set_("goal", None if self.goal is None else _vec(self.goal))

    @property
    def dim(self):
        return 2 if self.kind == NAVIGATION else 4

    @property
    def beacon_array(self):
        return np.asarray(self.beacons, dtype=np.float64)

    def full_action(self, a_idx, t=0):
        """Displacement applied to the whole state for agent action ``a_idx`` at step t."""
        a = ACTIONS[a_idx]
        if self.kind == NAVIGATION:
            return a.copy()
        tgt = ACTIONS[action_index(self.target_script[t % len(self.target_script)])]
        return np.concatenate([a, tgt])

    def without_obstacles(self):
        from dataclasses import replace

        return replace(self, obstacles=())


def _check_dim(x, scenario):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != scenario.dim:
        raise ConfigError(f"state dimension {x.shape[-1]} does not match {scenario.kind}")
    return x


def transition_sample(x, a, scenario, rng):
    """x + a + N(0, sigma_w^2 I), batched over leading axes."""
    x = _check_dim(x, scenario)
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != scenario.dim:
        raise ConfigError("action dimension does not match the state")
    eta = rng.standard_normal(x.shape)
    return x + a + np.sqrt(scenario.noise.sigma_w_sq) * eta


def _scaled_var(pos, refs, noise):
    return kernels.scaled_variance(pos, refs, noise.sigma_w_sq, noise.sigma_v_sq, noise.r_min)


def beacon_variance(pos, scenario):
    """Per-axis variance of the beacon reading at agent positions pos (n, 2)."""
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    return _scaled_var(pos, scenario.beacon_array, scenario.noise)


def observation_params(x, scenario):
    """Mean blocks (n, K, 2) and per-block variance (n, K) of the observation law."""
    x = np.atleast_2d(_check_dim(x, scenario))
    agent = x[:, :2]
    if scenario.kind == NAVIGATION:
        return agent[:, None, :], beacon_variance(agent, scenario)[:, None]
    rel = agent - x[:, 2:4]
    means = np.stack([agent, rel], axis=1)
    rel_var = _scaled_var(rel, _ORIGIN, scenario.noise)
    var = np.stack([beacon_variance(agent, scenario), rel_var], axis=1)
    return means, var


_ORIGIN = np.zeros((1, 2))


def observation_sample(x, scenario, rng, params=None):
    """Draw z from the observation law at x, batched over rows."""
    x = np.asarray(x, dtype=np.float64)
    means, var = observation_params(x, scenario) if params is None else params
    eps = rng.standard_normal(means.shape)
    z = (means + np.sqrt(var)[..., None] * eps).reshape(means.shape[0], -1)
    return z[0] if x.ndim == 1 else z


def observation_loglik_matrix(z, x, scenario, params=None):
    """(n_z, n_x) matrix of log p(z_j | x_i)."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    means, var = observation_params(x, scenario) if params is None else params
    if z.shape[1] != 2 * means.shape[1]:
        raise ConfigError("observation dimension does not match the scenario")
    return kernels.block_gauss_loglik(z, means, var)


def observation_logdensity(z, x, scenario):
    """Exact log density of observation z at state x (single state)."""
    return float(observation_loglik_matrix(z, np.atleast_2d(x), scenario)[0, 0])


def in_safe_space(x, obstacle):
    """True where the agent position is strictly outside the obstacle."""
    x = np.asarray(x, dtype=np.float64)
    return obstacle.distance(x[..., :2]) > obstacle.radius


def safe_mask(x, scenario):
    """Safe w.r.t. every obstacle of the scenario; only the agent block is checked."""
    x = np.asarray(x, dtype=np.float64)
    ok = np.ones(x.shape[:-1], dtype=bool)
    for ob in scenario.obstacles:
        ok &= in_safe_space(x, ob)
    return ok


def penetration_depth(x, obstacle):
    """max(0, r - dist): zero on the safe set, positive inside the obstacle."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(0.0, obstacle.radius - obstacle.distance(x[..., :2]))
