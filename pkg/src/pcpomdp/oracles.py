"""Independent reference computations used by the test suite and ``selftest``.

Nothing here is on the planning hot path. Each oracle recomputes a quantity
by brute force (enumeration, closed forms) so the planners can be checked
against it.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .belief import ParticleBelief, state_reward
from .constraints import (
    AdaptiveCounter,
    ConstraintSpec,
    accept_reject_counters,
    adaptive_decision,
    execution_risk,
    importance_weights_from_logdens,
    outer_estimate,
    scaled_delta,
)
from .models import observation_loglik_matrix, safe_mask
from .planners import PCSS, Batch, BeliefModel, PlannerConfig, plan


# --------------------------------------------------------------- discrete rig


@dataclass
class DiscreteRig:
    """Finite POMDP.

    T: (A, S, S) transitions; O: (S, Z) observation probabilities given the
    arrival state; safe: (S,) indicator; r: (S,) state rewards; b0: (S,).
    """

    T: np.ndarray
    O: np.ndarray
    safe: np.ndarray
    r: np.ndarray
    b0: np.ndarray
    gamma: float = 1.0

    @property
    def n_states(self):
        return self.O.shape[0]

    @property
    def n_obs(self):
        return self.O.shape[1]

    @property
    def n_actions(self):
        return self.T.shape[0]

    @classmethod
    def random(cls, rng, n_actions=2, lo=0.02):
        """Two states (0 safe, 1 unsafe), two observations, dense probabilities."""
        def row(a=lo, b=1 - lo):
            p = rng.uniform(a, b)
            return [p, 1 - p]
        T = np.array([[row(0.85, 0.999), row()] for _ in range(n_actions)])
        O = np.array([row(), row()])
        b0 = np.array(row(0.9, 1.0))
        return cls(T, O, np.array([1.0, 0.0]), rng.uniform(-1, 1, size=2), b0)


class DiscreteModel(BeliefModel):
    """Exact-propagation planner model for a DiscreteRig.

    A belief holds every state as a particle; propagation pushes the weights
    through T exactly, so only the observations are sampled.
    """

    resample = False

    def __init__(self, rig):
        self.rig = rig
        self.n_actions = rig.n_actions
        self.gamma = rig.gamma
        self.states = np.arange(rig.n_states, dtype=np.float64)[:, None]
        with np.errstate(divide="ignore"):
            self._logO = np.log(rig.O)

    def noise(self, n, rng):
        return None

    def propagate(self, x, w, a, depth, noise):
        return self.states, w @ self.rig.T[a]

    def obs_params(self, x):
        return None

    def sample_observations(self, x, w, k, rng, params):
        cdf = np.cumsum(w)
        s = np.minimum(np.searchsorted(cdf, rng.random(k) * cdf[-1], side="right"), len(w) - 1)
        ocdf = np.cumsum(self.rig.O[s], axis=1)
        z = (rng.random(k)[:, None] * ocdf[:, -1:] >= ocdf).sum(axis=1)
        return np.minimum(z, self.rig.n_obs - 1).astype(np.float64)[:, None]

    def loglik(self, z, x, params):
        zi = z[:, 0].astype(np.int64)
        si = x[:, 0].astype(np.int64)
        return np.ascontiguousarray(self._logO[si][:, zi].T)

    def safe(self, x):
        return self.rig.safe[x[:, 0].astype(np.int64)]

    def reward(self, x):
        return self.rig.r[x[:, 0].astype(np.int64)]


def discrete_belief(rig):
    return ParticleBelief(np.arange(rig.n_states, dtype=np.float64)[:, None], rig.b0)


def plan_discrete(rig, kind, L, m_d, delta, seed, sc=False, keep_tree=False):
    cfg = PlannerConfig(kind, L, m_d, ConstraintSpec(delta, sc=sc), gamma=rig.gamma, keep_tree=keep_tree)
    return plan(discrete_belief(rig), cfg, rng=seed, model=DiscreteModel(rig))


@dataclass
class ExactNode:
    risk: float
    q: np.ndarray
    er: np.ndarray
    feasible: np.ndarray
    best: int = None
    children: dict = None  # (a, z) -> ExactNode


def exact_chance_tree(rig, L, delta, sc=False, depth=0, b=None, bbar=None):
    """Chance-constrained tree with every observation branch enumerated.

    Same semantics as the sampled planner (reward on the full belief, risk on
    the safe-prior chain, child risk 1 or an infeasible child prunes, verify
    er <= Delta) with exact probabilities in place of samples.
    """
    b = rig.b0 if b is None else b
    bbar = rig.b0 if bbar is None else bbar
    A = rig.n_actions
    risk = 1.0 - float(bbar @ rig.safe)
    node = ExactNode(risk, np.full(A, np.nan), np.full(A, np.nan), np.zeros(A, dtype=bool), children={})
    if risk >= 1.0:
        return node
    bs = bbar * rig.safe / (1.0 - risk)
    Delta = 1.0 - scaled_delta(delta, L - depth, L, sc)
    for a in range(A):
        pb, pbs = b @ rig.T[a], bs @ rig.T[a]
        pz, pzs = pb @ rig.O, pbs @ rig.O
        q, w, er_kids, ok = 0.0, [], [], True
        for z in range(rig.n_obs):
            cb = pb * rig.O[:, z] / pz[z]
            cbar = pbs * rig.O[:, z] / pzs[z]
            r_child = 1.0 - float(cbar @ rig.safe)
            if r_child >= 1.0:
                ok = False
                break
            v = float(cb @ rig.r)
            if depth + 1 == L:
                er_c = execution_risk(r_child)
            else:
                child = exact_chance_tree(rig, L, delta, sc, depth + 1, cb, cbar)
                node.children[(a, z)] = child
                if child.best is None:
                    ok = False
                    break
                v += rig.gamma * child.q[child.best]
                er_c = child.er[child.best]
            q += pz[z] * v
            w.append(pzs[z])
            er_kids.append(er_c)
        if not ok:
            continue
        node.q[a] = q
        node.er[a] = execution_risk(risk, np.array(w), np.array(er_kids))
        node.feasible[a] = node.er[a] <= Delta
    feas = np.flatnonzero(node.feasible)
    if feas.size:
        node.best = int(feas[np.argmax(node.q[feas])])
    return node


def tree_policy(root, a0):
    """Observation-history policy of an exact tree below root action a0."""
    def pol(hist):
        node, a = root, a0
        for z in hist:
            node = node.children[(a, z)]
            a = node.best
        return a
    return pol


def trajectory_safe_probability(rig, a0, policy, L):
    """P(x_0, ..., x_L all safe) by enumerating state and observation sequences.

    ``policy(hist)`` maps observations (z_1, ..., z_d) to the action at depth d.
    """
    S, Z = rig.n_states, rig.n_obs
    total = 0.0

    def rec(d, x, p, hist):
        nonlocal total
        if not rig.safe[x]:
            return
        if d == L:
            total += p
            return
        a = a0 if d == 0 else policy(hist)
        for x2, z in itertools.product(range(S), range(Z)):
            q = rig.T[a][x, x2] * rig.O[x2, z]
            if q > 0:
                rec(d + 1, x2, p * q, hist + (z,))

    for x0 in range(S):
        if rig.b0[x0] > 0:
            rec(0, x0, rig.b0[x0], ())
    return total


def policy_execution_risk(rig, a0, policy, L):
    """er of the root under a fixed observation-history policy, by recursion."""
    def rec(d, bbar, hist):
        r = 1.0 - float(bbar @ rig.safe)
        if d == L or r >= 1.0:
            return execution_risk(r)
        a = a0 if d == 0 else policy(hist)
        pbs = (bbar * rig.safe / (1.0 - r)) @ rig.T[a]
        pzs = pbs @ rig.O
        kids = [rec(d + 1, pbs * rig.O[:, z] / pzs[z], hist + (z,)) for z in range(rig.n_obs)]
        return execution_risk(r, pzs, np.array(kids))
    return rec(0, rig.b0, ())


def witness_rig():
    """Three-state chain where every pruning bound passes but er > Delta at the root.

    State 0 is safe and stable, 1 is safe but leaks into the absorbing unsafe
    state 2. With delta = 0.8 (Delta = 0.2) and uninformative observations:
    root risk 0.1, child risks 0.1, leaf risks 0.05, so each depth-1 node has
    er 0.145 (feasible) while the root action has er 0.2305.
    """
    row = [[0.0, 0.9, 0.1], [0.0, 0.95, 0.05], [0.0, 0.0, 1.0]]
    T = np.array([row, row], dtype=np.float64)
    O = np.full((3, 2), 0.5)
    return DiscreteRig(T, O, np.array([1.0, 1.0, 0.0]), np.zeros(3), np.array([0.9, 0.0, 0.1]))


def necessity_witness():
    """(w, r_parent, r_child, er_child, Delta): bounds hold, er exceeds Delta."""
    return np.array([0.5, 0.5]), 0.1, np.array([0.1, 0.1]), np.array([0.15, 0.15]), 0.2


# ----------------------------------------------------- synthetic phi trees


class SyntheticTree:
    """Belief tree with prescribed operator values.

    Node 0 is the root; ``kids[(node, a)]`` lists the children of action a;
    ``phi[node]`` is the operator value of each belief.
    """

    def __init__(self, n_actions=3, fanout=2, depth=2):
        self.n_actions, self.fanout, self.depth = n_actions, fanout, depth
        self.kids, self.level = {}, [0]
        frontier = [0]
        for d in range(depth):
            new = []
            for node in frontier:
                for a in range(n_actions):
                    ids = list(range(len(self.level), len(self.level) + fanout))
                    self.level.extend([d + 1] * fanout)
                    self.kids[(node, a)] = ids
                    new.extend(ids)
            frontier = new
        self.n_nodes = len(self.level)
        self.phi = np.ones(self.n_nodes)
        self.reward = np.zeros(self.n_nodes)

    def inner_nodes(self, a):
        """Non-root, non-leaf beliefs below root action a, in a fixed order."""
        out, queue = [], list(self.kids[(0, a)])
        while queue:
            c = queue.pop(0)
            if self.level[c] < self.depth:
                out.append(c)
                for a2 in range(self.n_actions):
                    queue.extend(self.kids[(c, a2)])
        return out

    def laces(self, node, a, pol):
        for c in self.kids[(node, a)]:
            if self.level[c] == self.depth:
                yield (c,)
            else:
                for rest in self.laces(c, pol[c], pol):
                    yield (c,) + rest

    def outer_estimate(self, a, pol, delta):
        counter = AdaptiveCounter(self.fanout ** self.depth)
        for lace in self.laces(0, a, pol):
            counter.add(self.phi[0] >= delta and all(self.phi[c] >= delta for c in lace))
        return outer_estimate(counter)

    def brute_force_feasible(self, delta):
        """Root actions for which some deterministic policy reaches outer estimate 1."""
        out = np.zeros(self.n_actions, dtype=bool)
        for a in range(self.n_actions):
            inner = self.inner_nodes(a)
            for choice in itertools.product(range(self.n_actions), repeat=len(inner)):
                if self.outer_estimate(a, dict(zip(inner, choice)), delta) == 1.0:
                    out[a] = True
                    break
        return out


class SyntheticModel(BeliefModel):
    """Planner model that walks a SyntheticTree.

    Each child of an action node is carried by its own particle and a belief
    is a one-hot weight vector over them, so the planner's weighted operator
    value of child j is exactly ``phi`` of that child.
    """

    resample = False
    stochastic = False

    def __init__(self, tree):
        self.tree = tree
        self.n_actions = tree.n_actions
        self.gamma = 1.0
        m = tree.fanout
        self._eye = np.eye(m)
        self._ll = np.where(self._eye > 0, 0.0, -np.inf)
        self._w = np.full(m, 1.0 / m)

    def safe(self, x):
        return self.tree.phi[x[:, 0].astype(np.int64)]

    def expand(self, x, w, a, depth, rng, m_d, noise=None, z=None):
        node = int(x[w.argmax(), 0])
        ids = self.tree.kids[(node, a)]
        if len(ids) != m_d:
            raise ValueError("m_d must equal the tree fanout")
        b = Batch()
        b.x = np.array(ids, dtype=np.float64)[:, None]
        b.w = self._w
        b.z = b.x
        b.ll = self._ll
        b.W = self._eye
        b.safe = self.tree.phi[ids]
        b.rew = self.tree.reward[ids]
        b.noise = None
        return b


def pcss_on_tree(tree, delta):
    cfg = PlannerConfig(PCSS, tree.depth, tree.fanout, ConstraintSpec(delta))
    return plan(ParticleBelief(np.zeros((1, 1))), cfg, rng=0, model=SyntheticModel(tree))


def designated_tree(bits, lo=0.5, hi=0.95):
    """Depth-2, fanout-2, 3-action tree whose feasibility at delta=0.8 hinges on 9 bits.

    Bits 0-2 set the first child of each root action. Bits 3-8 set the first
    leaf of actions 0 and 1 below the second child of each root action; action
    2 there always fails, so that child survives only through actions 0 or 1.
    """
    tree = SyntheticTree(3, 2, 2)
    tree.phi[:] = hi
    tree.phi[0] = 1.0
    for a in range(3):
        c0, c1 = tree.kids[(0, a)]
        tree.phi[c0] = hi if bits[a] else lo
        for a2 in range(2):
            tree.phi[tree.kids[(c1, a2)][0]] = hi if bits[3 + 2 * a + a2] else lo
        tree.phi[tree.kids[(c1, 2)][1]] = lo
    return tree


def random_tree(rng):
    """Random depth-2/fanout-2/3-action tree and threshold, with boundary ties."""
    tree = SyntheticTree(3, 2, 2)
    delta = float(rng.uniform(0.1, 0.9))
    n = tree.n_nodes
    bad = rng.random(n) < rng.uniform(0.0, 0.4)
    tree.phi = np.where(bad, rng.uniform(0.0, delta, n), rng.uniform(delta, 1.0, n))
    tree.phi[rng.random(n) < 0.05] = delta
    tree.phi[0] = 1.0
    tree.reward = rng.normal(size=n)
    return tree, delta


# -------------------------------------------------------- adaptive bounds


def counter_trigger(seq, m, epsilon):
    """(index, verdict) of the first trigger from the accept/reject counters alone."""
    n_acc, n_rej = accept_reject_counters(m, epsilon)
    s = f = 0
    for i, c in enumerate(seq):
        s += c
        f += 1 - c
        if s >= n_acc:
            return i, "accept"
        if f > n_rej:
            return i, "reject"
    return None, None


def bound_trigger(seq, m, epsilon):
    """(index, verdict) of the first adaptive_decision that is not Continue."""
    counter = AdaptiveCounter(m)
    for i, c in enumerate(seq):
        counter.add(c)
        d = adaptive_decision(counter, epsilon).value
        if d != "continue":
            return i, d
    return None, None


# ---------------------------------------------------- importance sampling rig


_erfc = np.vectorize(math.erfc, otypes=[np.float64])


def _log_ndtr(x):
    return np.log(0.5 * _erfc(-np.asarray(x, dtype=np.float64) / math.sqrt(2.0)))


@dataclass(frozen=True)
class GaussianISRig:
    """x ~ N(0, 1) safe iff x > c; x' = x + N(0, s_t^2); z = x' + N(0, s_o^2).

    The full-belief observation law is N(0, 1 + s^2) with s^2 = s_t^2 + s_o^2;
    the safe-prior law tilts it by P(x > c | z) / P(x > c).
    """

    c: float = 0.3
    s_t: float = 0.3
    s_o: float = 0.4

    @property
    def s2(self):
        return self.s_t ** 2 + self.s_o ** 2

    def log_full(self, z):
        v = 1.0 + self.s2
        return -0.5 * z * z / v - 0.5 * math.log(2 * math.pi * v)

    def log_safe(self, z):
        v = 1.0 + self.s2
        mu, sd = z / v, math.sqrt(self.s2 / v)  # x | z
        return self.log_full(z) + _log_ndtr((mu - self.c) / sd) - float(_log_ndtr(-self.c))

    def safe_mean(self):
        """E[z] under the safe prior, which is E[x | x > c]."""
        pdf = math.exp(-0.5 * self.c ** 2) / math.sqrt(2 * math.pi)
        return pdf / (0.5 * math.erfc(self.c / math.sqrt(2.0)))

    def sample_full(self, n, rng):
        return rng.normal(0.0, math.sqrt(1 + self.s2), size=n)

    def sample_safe(self, n, rng):
        chunks, got = [], 0
        while got < n:
            x = rng.normal(size=2 * n)
            x = x[x > self.c]
            chunks.append(x)
            got += x.size
        x = np.concatenate(chunks)[:n]
        return x + rng.normal(0.0, math.sqrt(self.s2), size=n)

    def is_estimate(self, n, rng):
        z = self.sample_full(n, rng)
        w = importance_weights_from_logdens(self.log_safe(z), self.log_full(z))
        return float(w @ z)

    def direct_estimate(self, n, rng):
        return float(self.sample_safe(n, rng).mean())


# ----------------------------------------------------- objectives mixture


def objectives_decomposition(prop, lik, safe, scenario):
    """Both sides of the safe/unsafe mixture identity for the posterior reward.

    prop: propagated belief whose particle i descends from a parent with
    safety flag safe[i]; lik: p(z | x'_i). Returns (lhs, rhs) with
    lhs = E[r | psi(b, a, z)] and
    rhs = sum over e in {safe, unsafe} of P(z|b,a,e) P(e) / P(z|b,a) * E[r | psi(b_e, a, z)].
    """
    w = prop.weights
    lhs = state_reward(ParticleBelief(prop.particles, w * lik / (w @ lik)), scenario)
    p_z = float(w @ lik)
    rhs = 0.0
    for mask in (safe, ~safe):
        p_e = float(w[mask].sum())
        if p_e == 0.0:
            continue
        we = np.where(mask, w, 0.0) / p_e
        p_ze = float(we @ lik)
        if p_ze == 0.0:
            continue  # a class that cannot produce z contributes nothing
        post_e = ParticleBelief(prop.particles, we * lik / p_ze)
        rhs += p_ze * p_e / p_z * state_reward(post_e, scenario)
    return lhs, rhs


def two_particle_rig(rng, scenario):
    """One safe and one unsafe parent particle, propagated, with a sampled observation.

    Returns (propagated belief, likelihoods, parent safety flags).
    """
    ob = scenario.obstacles[0]
    c = np.asarray(ob.center)
    inside = c + rng.uniform(-0.25, 0.25, size=2) * ob.radius
    outside = c + np.array([ob.radius + rng.uniform(0.5, 2.0), rng.uniform(-1, 1)])
    x = np.zeros((2, scenario.dim))
    x[0, :2], x[1, :2] = outside, inside
    if scenario.dim == 4:
        x[:, 2:] = c + rng.normal(size=(2, 2))
    w = rng.dirichlet([1.0, 1.0])
    safe = safe_mask(x, scenario)
    xp = x + rng.normal(scale=0.3, size=x.shape)
    k = int(rng.integers(2))
    z = xp[k, :2] + rng.normal(scale=0.3, size=2)
    if scenario.dim == 4:
        z = np.concatenate([z, xp[k, :2] - xp[k, 2:] + rng.normal(scale=0.3, size=2)])
    ll = observation_loglik_matrix(z[None, :], xp, scenario)[0]
    lik = np.exp(ll - ll.max())  # both sides are invariant to the scale of the likelihood
    return ParticleBelief(xp, w), lik, safe
