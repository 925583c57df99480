"""Sparse-sampling belief-tree planners: unconstrained, PCSS, CCSS-IS, FastCCSS.

Each action node propagates its belief once and draws ``m_d`` observations;
all children of the node are then reweighted together as one (m_d, m_x)
likelihood matrix. Child rewards and operator values are read off the
weighted children directly. Children that get expanded further are
resampled first.

Every action node owns a random stream derived from its position in the
tree, so two planners (or two thresholds) that reach the same node build
the same children there.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .belief import ParticleBelief
from .constraints import (
    PROB_SAFE,
    ConstraintSpec,
    AdaptiveCounter,
    Decision,
    adaptive_decision,
    cc_prune_check,
    execution_risk,
    importance_weights_from_logdens,
    inner_constraint,
    MULTIPLICATIVE,
    scaled_delta,
)
from .errors import ConfigError
from .models import ACTION_NAMES, NAVIGATION, SQUARE, observation_loglik_matrix, observation_params, observation_sample, safe_mask
from .belief import state_reward_values

UNCONSTRAINED = "unconstrained"
PCSS = "pcss"
CCSS_IS = "ccss_is"
FASTCCSS = "fastccss"
KINDS = (UNCONSTRAINED, PCSS, CCSS_IS, FASTCCSS)


@dataclass(frozen=True)
class PlannerConfig:
    kind: str = PCSS
    depth: int = 1
    m_d: int = 100
    constraint: ConstraintSpec = field(default_factory=ConstraintSpec)
    gamma: float = None  # None: take the scenario's discount
    keep_tree: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown planner kind {self.kind!r}; expected one of {KINDS}")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigError("depth must be an integer >= 1")
        if int(self.m_d) != self.m_d or self.m_d < 1:
            raise ConfigError("m_d must be an integer >= 1")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")

    @property
    def laces(self):
        return self.m_d ** self.depth


@dataclass
class PlanStats:
    visited_actions: int = 0
    expanded_actions: int = 0
    pruned_actions: int = 0
    upsweep_rejections: int = 0
    laces: int = 0
    wall_time: float = 0.0


@dataclass
class ActionRecord:
    """One action node of a kept tree."""

    action: int
    depth: int
    phi: np.ndarray = None
    rho: np.ndarray = None
    risk: np.ndarray = None
    weights: np.ndarray = None
    er: float = float("nan")
    q: float = float("nan")
    feasible: bool = False
    pruned: bool = False
    children: list = None  # NodeRecord per child when not a leaf


@dataclass
class NodeRecord:
    depth: int
    risk: float = float("nan")
    best: int = None
    value: float = float("nan")
    er: float = float("nan")
    actions: list = field(default_factory=list)


@dataclass
class PlanResult:
    action: int  # None when infeasible
    q: np.ndarray
    feasible: np.ndarray
    stats: PlanStats
    tree: NodeRecord = None

    @property
    def infeasible(self):
        return self.action is None

    @property
    def action_name(self):
        return "INFEASIBLE" if self.action is None else ACTION_NAMES[self.action]


class Batch:
    """All children of one action node on one belief chain.

    x, w: propagated particles and weights; z: (m_d, dz) observations;
    ll: (m_d, m_x) log-likelihoods; W: (m_d, m_x) child weights;
    safe: per-particle safety indicator; rew: per-particle state reward.
    """

    __slots__ = ("x", "w", "_logw", "z", "ll", "W", "safe", "rew", "noise")

    @property
    def logw(self):
        try:
            return self._logw
        except AttributeError:
            self._logw = _log(self.w)
            return self._logw

    @logw.setter
    def logw(self, v):
        self._logw = v


class BeliefModel:
    """Generative interface the planners expand trees with.

    Subclasses provide noise/propagate/obs_params/sample_observations/loglik/
    safe/reward; ``expand`` composes them and may be overridden by a fused
    implementation.
    """

    resample = True
    stochastic = True  # False: expand ignores its rng
    n_actions = len(ACTION_NAMES)

    def expand(self, x, w, a, depth, rng, m_d, noise=None, z=None):
        b = Batch()
        b.noise = self.noise(len(x), rng) if noise is None else noise
        b.x, b.w = self.propagate(x, w, a, depth, b.noise)
        b.logw = _log(b.w)
        params = self.obs_params(b.x)
        b.z = self.sample_observations(b.x, b.w, m_d, rng, params) if z is None else z
        b.ll = self.loglik(b.z, b.x, params)
        b.W = kernels.normalize_rows(b.logw[None, :] + b.ll)
        b.safe = self.safe(b.x)
        b.rew = self.reward(b.x)
        return b


class ScenarioModel(BeliefModel):
    """Planner-side view of a continuous scenario starting at time step t0."""

    def __init__(self, scenario, t0=0):
        self.scenario = scenario
        self.t0 = t0
        self._sd = np.sqrt(scenario.noise.sigma_w_sq)
        self._dz = 2 if scenario.kind == NAVIGATION else 4
        obs = scenario.obstacles
        self._obs_c = np.array([o.center for o in obs], dtype=np.float64).reshape(-1, 2)
        self._obs_r = np.array([o.radius for o in obs], dtype=np.float64)
        self._obs_sq = np.array([o.shape == SQUARE for o in obs], dtype=np.int64)
        self._beacons = scenario.beacon_array
        self._goal = np.asarray(scenario.goal if scenario.goal is not None else (0.0, 0.0), dtype=np.float64)
        self._no_z = np.empty((0, self._dz))
        self._actions = {}

    def action(self, a, depth):
        key = (a, depth if self.scenario.kind != NAVIGATION else 0)
        v = self._actions.get(key)
        if v is None:
            v = self._actions[key] = self.scenario.full_action(a, self.t0 + depth)
        return v

    def noise(self, n, rng):
        return rng.standard_normal((n, self.scenario.dim))

    def propagate(self, x, w, a, depth, noise):
        return x + self.action(a, depth) + self._sd * noise, w

    def obs_params(self, x):
        return observation_params(x, self.scenario)

    def sample_observations(self, x, w, k, rng, params):
        cdf = np.cumsum(w)
        idx = np.minimum(np.searchsorted(cdf, rng.random(k) * cdf[-1], side="right"), len(w) - 1)
        means, var = params
        return observation_sample(x[idx], self.scenario, rng, (means[idx], var[idx]))

    def loglik(self, z, x, params):
        return observation_loglik_matrix(z, x, self.scenario, params)

    def safe(self, x):
        return safe_mask(x, self.scenario).astype(np.float64)

    def reward(self, x):
        return state_reward_values(x, self.scenario)

    def expand(self, x, w, a, depth, rng, m_d, noise=None, z=None):
        sc = self.scenario
        b = Batch()
        b.noise = rng.standard_normal(x.shape) if noise is None else noise
        if z is None:
            u = rng.random(m_d)
            eps = rng.standard_normal((m_d, self._dz))
            zin = self._no_z
        else:
            u, eps, zin = self._no_z[:, 0], self._no_z, z
        nz = sc.noise
        b.x, b.z, b.ll, b.W, b.safe, b.rew = kernels.expand_batch(
            x, w, self.action(a, depth), b.noise, self._sd, zin, u, eps, self._beacons,
            nz.sigma_w_sq, nz.sigma_v_sq, nz.r_min, sc.kind != NAVIGATION, self._goal,
            self._obs_c, self._obs_r, self._obs_sq,
        )
        b.w = w
        return b


def _node_rng(key, path, model=None):
    if model is not None and not model.stochastic:
        return None
    return np.random.default_rng(np.random.SeedSequence(entropy=key, spawn_key=(len(path),) + path))


def _base_key(rng):
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        return 0
    return int(rng)


def _log(w):
    return np.log(w, out=np.full(w.shape, -np.inf), where=w > 0)


class _Planner:
    def __init__(self, cfg, model, key):
        self.cfg = cfg
        self.model = model
        self.key = key
        self.L = cfg.depth
        self.m_d = cfg.m_d
        self.spec = cfg.constraint
        self.gamma = 1.0
        self.stats = PlanStats(laces=cfg.laces)
        self.keep = cfg.keep_tree

    # ------------------------------------------------------------ batches

    def _batch(self, x, w, a, depth, rng, noise=None, z=None):
        return self.model.expand(x, w, a, depth, rng, self.m_d, noise, z)

    def _resampled(self, batch, rng, u=None):
        """Child particle sets for expansion: (x_j, w_j) per child."""
        if not self.model.resample:
            return [(batch.x, batch.W[j]) for j in range(self.m_d)]
        if u is None:
            u = rng.random(self.m_d)
        idx = kernels.systematic_indices(batch.logw[None, :] + batch.ll, u)
        u = np.full(batch.x.shape[0], 1.0 / batch.x.shape[0])
        return [(batch.x[idx[j]], u) for j in range(self.m_d)]

    def _phi(self, batch, parent_x, parent_w):
        if self.spec.operator == PROB_SAFE:
            return batch.W @ batch.safe
        scen = self.model.scenario
        parent = ParticleBelief(parent_x, parent_w)
        return np.array([
            self.spec.phi(ParticleBelief(batch.x, batch.W[j]), scen, parent=parent)
            for j in range(self.m_d)
        ])

    def _best(self, q, feasible):
        best, val = None, -np.inf
        for a in range(len(q)):
            if feasible[a] and (best is None or q[a] > val):
                best, val = a, q[a]
        return best

    # ------------------------------------------- unconstrained and PCSS

    def ss_node(self, x, w, depth, path, prune):
        n_a = self.model.n_actions
        q = np.full(n_a, np.nan)
        feas = np.zeros(n_a, dtype=bool)
        rec = NodeRecord(depth) if self.keep else None
        for a in range(n_a):
            ok, qa, arec = self.ss_action(x, w, a, depth, path + (a,), prune)
            feas[a], q[a] = ok, qa
            if rec is not None:
                rec.actions.append(arec)
        best = self._best(q, feas)
        if rec is not None:
            rec.best = best
            rec.value = q[best] if best is not None else np.nan
        return q, feas, best, rec

    def ss_action(self, x, w, a, depth, path, prune):
        st = self.stats
        st.visited_actions += 1
        rng = _node_rng(self.key, path, self.model)
        b = self._batch(x, w, a, depth, rng)
        rho = b.W @ b.rew
        rec = ActionRecord(a, depth, rho=rho) if self.keep else None
        if prune:
            phi = self._phi(b, x, w)
            if rec is not None:
                rec.phi = phi
            if (phi < self.spec.delta).any():
                st.pruned_actions += 1
                if rec is not None:
                    rec.pruned = True
                return False, np.nan, rec
        if depth + 1 == self.L:
            v = rho
        else:
            v = np.empty(self.m_d)
            kids = []
            for j, (cx, cw) in enumerate(self._resampled(b, rng)):
                q, feas, best, crec = self.ss_node(cx, cw, depth + 1, path + (j,), prune)
                kids.append(crec)
                if best is None:
                    st.pruned_actions += 1
                    if rec is not None:
                        rec.pruned, rec.children = True, kids
                    return False, np.nan, rec
                v[j] = rho[j] + self.gamma * q[best]
            if rec is not None:
                rec.children = kids
        st.expanded_actions += 1
        qa = float(v.sum()) / v.size
        if rec is not None:
            rec.q, rec.feasible = qa, True
        return True, qa, rec

    # --------------------------------------------------- lace enumeration

    def lace_tree(self, x, w, depth, path):
        """Full unconstrained tree with phi and rho at every child."""
        n_a = self.model.n_actions
        node = NodeRecord(depth)
        for a in range(n_a):
            self.stats.visited_actions += 1
            rng = _node_rng(self.key, path + (a,), self.model)
            b = self._batch(x, w, a, depth, rng)
            rec = ActionRecord(a, depth, rho=b.W @ b.rew, phi=self._phi(b, x, w))
            if depth + 1 == self.L:
                v = rec.rho
            else:
                rec.children = [
                    self.lace_tree(cx, cw, depth + 1, path + (a, j))
                    for j, (cx, cw) in enumerate(self._resampled(b, rng))
                ]
                v = rec.rho + self.gamma * np.array([c.value for c in rec.children])
            rec.q = float(v.mean())
            node.actions.append(rec)
        node.best = int(np.argmax([r.q for r in node.actions]))
        node.value = node.actions[node.best].q
        return node

    def _laces(self, arec, prefix):
        """Yield phi sequences of every lace below an action under the tree policy."""
        for j in range(self.m_d):
            seq = prefix + (float(arec.phi[j]),)
            if arec.children is None:
                yield seq
            else:
                child = arec.children[j]
                yield from self._laces(child.actions[child.best], seq)

    def lace_decide(self, arec, root_phi):
        counter = AdaptiveCounter(self.cfg.laces)
        prefix = (root_phi,) if self.spec.form == MULTIPLICATIVE else ()
        for seq in self._laces(arec, prefix):
            counter.add(inner_constraint(seq, self.spec))
            d = adaptive_decision(counter, self.spec.epsilon)
            if d is not Decision.CONTINUE:
                return d is Decision.ACCEPT, counter
        return adaptive_decision(counter, self.spec.epsilon) is Decision.ACCEPT, counter

    # ------------------------------------------------ chance constraints

    def cc_node(self, b, bbar, r_node, depth, path):
        """Returns (q, feasible, er per action, best, record)."""
        n_a = self.model.n_actions
        q = np.full(n_a, np.nan)
        er = np.full(n_a, np.nan)
        feas = np.zeros(n_a, dtype=bool)
        rec = NodeRecord(depth, risk=r_node) if self.keep else None
        xs, ws = bbar
        safe = self.model.safe(xs)
        mass = float(ws @ safe)
        if r_node >= 1.0 or mass <= 0.0:
            self.stats.pruned_actions += n_a
            return q, feas, er, None, rec
        ws_safe = ws if np.all(safe > 0) else ws * safe / mass
        for a in range(n_a):
            ok, qa, era, arec = self.cc_action(b, (xs, ws_safe), r_node, a, depth, path + (a,))
            feas[a], q[a], er[a] = ok, qa, era
            if rec is not None:
                rec.actions.append(arec)
        best = self._best(q, feas)
        if rec is not None:
            rec.best = best
            if best is not None:
                rec.value, rec.er = q[best], er[best]
        return q, feas, er, best, rec

    def cc_action(self, b, bbar_safe, r_node, a, depth, path):
        st = self.stats
        st.visited_actions += 1
        rng = _node_rng(self.key, path, self.model)
        fast = self.cfg.kind == FASTCCSS
        xs, ws = bbar_safe
        if fast:
            cb = self._batch(xs, ws, a, depth, rng)
            rb = cb
            isw = np.full(self.m_d, 1.0 / self.m_d)
        else:
            # both chains every time, even when the safe projection changed nothing
            rb = self._batch(b[0], b[1], a, depth, rng)
            cb = self._batch(xs, ws, a, depth, rng, noise=rb.noise, z=rb.z)
            isw = importance_weights_from_logdens(
                kernels.logsumexp_rows(cb.ll, cb.logw), kernels.logsumexp_rows(rb.ll, rb.logw)
            )
        rho = rb.W @ rb.rew
        risk = 1.0 - cb.W @ cb.safe
        np.maximum(risk, 0.0, out=risk)
        rec = ActionRecord(a, depth, rho=rho, risk=risk, weights=isw) if self.keep else None
        rem = self.L - depth
        Delta = 1.0 - scaled_delta(self.spec.delta, rem, self.L, self.spec.sc)
        if cc_prune_check(isw, risk, r_node, Delta):
            st.pruned_actions += 1
            if rec is not None:
                rec.pruned = True
            return False, np.nan, np.nan, rec
        st.expanded_actions += 1
        if depth + 1 == self.L:
            v, er_kids = rho, risk
        else:
            v = np.empty(self.m_d)
            er_kids = np.empty(self.m_d)
            u = rng.random(self.m_d) if self.model.resample else None
            cbar = self._resampled(cb, rng, u)
            crew = cbar if cb is rb else self._resampled(rb, rng, u)  # common uniforms for both chains
            kids = []
            for j in range(self.m_d):
                q, feas, er, best, crec = self.cc_node(crew[j], cbar[j], float(risk[j]), depth + 1, path + (j,))
                kids.append(crec)
                if best is None:
                    if rec is not None:
                        rec.children = kids
                    st.expanded_actions -= 1
                    st.pruned_actions += 1
                    if rec is not None:
                        rec.pruned = True
                    return False, np.nan, np.nan, rec
                v[j] = rho[j] + self.gamma * q[best]
                er_kids[j] = er[best]
            if rec is not None:
                rec.children = kids
        er_a = execution_risk(r_node, isw, er_kids)
        qa = float(v.mean())
        if rec is not None:
            rec.er, rec.q = er_a, qa
        if er_a > Delta:
            st.upsweep_rejections += 1
            return False, qa, er_a, rec
        if rec is not None:
            rec.feasible = True
        return True, qa, er_a, rec


def _gamma(cfg, model):
    if cfg.gamma is not None:
        return cfg.gamma
    scen = getattr(model, "scenario", None)
    return scen.noise.gamma if scen is not None else getattr(model, "gamma", 1.0)


def plan(b, cfg, scenario=None, rng=None, model=None, t0=0):
    """Plan from root belief ``b``; dispatches on ``cfg.kind``."""
    if model is None:
        if scenario is None:
            raise ConfigError("need a scenario or a model")
        model = ScenarioModel(scenario, t0)
    key = _base_key(rng)
    p = _Planner(cfg, model, key)
    p.gamma = _gamma(cfg, model)
    t_start = time.perf_counter()
    x, w = b.particles, b.weights
    n_a = model.n_actions
    tree = None
    spec = cfg.constraint
    if cfg.kind in (UNCONSTRAINED, PCSS):
        prune = cfg.kind == PCSS
        if prune and spec.operator != "info_gain":
            root_phi = spec.phi(b, model.scenario) if spec.operator != PROB_SAFE else float(w @ model.safe(x))
        else:
            root_phi = None
        if prune and spec.exact_pruning:
            if root_phi is not None and root_phi < spec.delta:
                raise ValueError(f"root belief violates the constraint (phi={root_phi:.4g} < delta)")
            q, feas, best, tree = p.ss_node(x, w, 0, (), True)
        elif prune:
            tree = p.lace_tree(x, w, 0, ())
            q = np.array([r.q for r in tree.actions])
            feas = np.zeros(n_a, dtype=bool)
            for a, arec in enumerate(tree.actions):
                feas[a], _ = p.lace_decide(arec, root_phi if root_phi is not None else np.inf)
                arec.feasible = bool(feas[a])
            p.stats.pruned_actions = int((~feas).sum())
            p.stats.expanded_actions = p.stats.visited_actions - p.stats.pruned_actions
            best = p._best(q, feas)
            tree.best = best
            if not cfg.keep_tree:
                tree = None
        else:
            q, feas, best, tree = p.ss_node(x, w, 0, (), False)
    else:
        r_root = 1.0 - float(w @ model.safe(x))
        q, feas, er, best, tree = p.cc_node((x, w), (x, w), r_root, 0, ())
    p.stats.wall_time = time.perf_counter() - t_start
    return PlanResult(best, q, feas, p.stats, tree)


def plan_unconstrained(b, cfg, scenario, rng, **kw):
    return plan(b, _with_kind(cfg, UNCONSTRAINED), scenario, rng, **kw)


def plan_pcss(b, cfg, scenario, rng, **kw):
    return plan(b, _with_kind(cfg, PCSS), scenario, rng, **kw)


def plan_ccss_is(b, cfg, scenario, rng, **kw):
    return plan(b, _with_kind(cfg, CCSS_IS), scenario, rng, **kw)


def plan_fastccss(b, cfg, scenario, rng, **kw):
    return plan(b, _with_kind(cfg, FASTCCSS), scenario, rng, **kw)


def _with_kind(cfg, kind):
    from dataclasses import replace

    return cfg if cfg.kind == kind else replace(cfg, kind=kind)
