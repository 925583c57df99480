import itertools

import numpy as np
import pytest

from pcpomdp import kernels, oracles
from pcpomdp.belief import ParticleBelief, safe_projection
from pcpomdp.constraints import CUMULATIVE, ConstraintSpec
from pcpomdp.errors import ConfigError
from pcpomdp.planners import (
    CCSS_IS,
    FASTCCSS,
    PCSS,
    UNCONSTRAINED,
    PlannerConfig,
    plan,
    plan_ccss_is,
    plan_fastccss,
    plan_pcss,
    plan_unconstrained,
)


@pytest.fixture(scope="module")
def near_obstacle(map1):
    """Safe prior just west of the map1 obstacle, so some actions must be pruned."""
    ob = map1.obstacles[0]
    mean = (ob.center[0] - ob.radius - 0.7, ob.center[1])
    b = ParticleBelief.from_gaussian(mean, 0.1 * np.eye(2), 150, np.random.default_rng(2))
    return safe_projection(b, map1, np.random.default_rng(3)).belief


def cfg(kind, L=1, m_d=20, delta=0.8, **kw):
    return PlannerConfig(kind, L, m_d, ConstraintSpec(delta, **kw))


def test_config_validation():
    with pytest.raises(ConfigError):
        PlannerConfig("mcts")
    with pytest.raises(ConfigError):
        PlannerConfig(depth=0)
    with pytest.raises(ConfigError):
        PlannerConfig(m_d=2.5)
    assert PlannerConfig(depth=2, m_d=7).laces == 49


@pytest.mark.parametrize("kind", [UNCONSTRAINED, PCSS, CCSS_IS, FASTCCSS])
def test_same_seed_same_plan(map1, near_obstacle, kind):
    a = plan(near_obstacle, cfg(kind, L=2, m_d=4), map1, 99)
    b = plan(near_obstacle, cfg(kind, L=2, m_d=4), map1, 99)
    assert a.action == b.action
    np.testing.assert_array_equal(a.q, b.q)
    np.testing.assert_array_equal(a.feasible, b.feasible)


def test_vacuous_pcss_equals_unconstrained(map1, near_obstacle):
    for L, m_d in ((1, 30), (2, 5)):
        a = plan(near_obstacle, cfg(PCSS, L, m_d, delta=0.0), map1, 5)
        b = plan(near_obstacle, cfg(UNCONSTRAINED, L, m_d), map1, 5)
        assert a.action == b.action
        np.testing.assert_array_equal(a.q, b.q)
        assert a.feasible.all()


def test_pcss_prunes_near_obstacle(map1, near_obstacle):
    res = plan(near_obstacle, cfg(PCSS, m_d=50), map1, 1)
    assert not res.feasible.all() and res.feasible.any()
    assert res.stats.pruned_actions == (~res.feasible).sum()
    assert res.stats.expanded_actions + res.stats.pruned_actions == res.stats.visited_actions


def test_pcss_root_violation_raises(map1):
    ob = map1.obstacles[0]
    b = ParticleBelief([ob.center, (ob.center[0] + 5, 0.0)])
    with pytest.raises(ValueError):
        plan(b, cfg(PCSS), map1, 0)


def test_kept_tree_is_sound(map1, near_obstacle):
    """Every action reported feasible has children that all satisfy phi >= delta."""
    res = plan(near_obstacle, PlannerConfig(PCSS, 2, 4, ConstraintSpec(0.8), keep_tree=True), map1, 3)

    def walk(node):
        for arec in node.actions:
            if arec.feasible:
                assert np.all(arec.phi >= 0.8)
                for child in arec.children or []:
                    assert child.best is not None
                    assert child.actions[child.best].feasible
                    walk(child)
            elif arec.phi is not None and np.all(arec.phi >= 0.8):
                # pruned only because some child has every action pruned
                assert arec.children is not None and any(c.best is None for c in arec.children)

    walk(res.tree)
    assert [a.feasible for a in res.tree.actions] == res.feasible.tolist()


@pytest.mark.parametrize("kind", [PCSS, FASTCCSS, CCSS_IS])
def test_feasible_sets_shrink_with_delta(map1, near_obstacle, kind):
    prev = None
    for d in (0.5, 0.7, 0.8, 0.9, 0.97):
        f = plan(near_obstacle, cfg(kind, L=2, m_d=4, delta=d), map1, 11).feasible
        if prev is not None:
            assert not np.any(f & ~prev)
        prev = f


def test_myopic_ccss_is_matches_fastccss_on_safe_root(map1, near_obstacle):
    a = plan(near_obstacle, cfg(CCSS_IS, m_d=40), map1, 8)
    b = plan(near_obstacle, cfg(FASTCCSS, m_d=40), map1, 8)
    assert a.action == b.action
    np.testing.assert_array_equal(a.feasible, b.feasible)
    np.testing.assert_allclose(a.q, b.q)


def test_ccss_is_uses_importance_weights_on_unsafe_root(map1):
    ob = map1.obstacles[0]
    r = np.random.default_rng(4)
    b = ParticleBelief.from_gaussian((ob.center[0] - ob.radius - 0.3, ob.center[1]), 0.1 * np.eye(2), 150, r)
    res = plan(b, PlannerConfig(CCSS_IS, 1, 10, ConstraintSpec(0.5), keep_tree=True), map1, 0)
    w = [a.weights for a in res.tree.actions if a.weights is not None]
    assert w and all(abs(x.sum() - 1.0) < 1e-12 for x in w)
    assert any(np.ptp(x) > 0 for x in w)


def test_wrappers_set_kind(map1, near_obstacle):
    base = cfg(PCSS, m_d=10)
    assert plan_unconstrained(near_obstacle, base, map1, 2).feasible.all()
    for fn, kind in ((plan_pcss, PCSS), (plan_ccss_is, CCSS_IS), (plan_fastccss, FASTCCSS)):
        np.testing.assert_array_equal(fn(near_obstacle, base, map1, 2).q, plan(near_obstacle, cfg(kind, m_d=10), map1, 2).q)


def test_generator_seed_is_drawn_once(map1, near_obstacle):
    g1, g2 = np.random.default_rng(7), np.random.default_rng(7)
    a = plan(near_obstacle, cfg(PCSS), map1, g1)
    b = plan(near_obstacle, cfg(PCSS), map1, g2)
    assert a.action == b.action and g1.random() == g2.random()


@pytest.mark.skipif(not kernels.compiled_available(), reason="extension not built")
@pytest.mark.parametrize("kind", [PCSS, CCSS_IS, FASTCCSS])
def test_backends_plan_identically(map2, kind):
    b = ParticleBelief.from_gaussian(map2.prior_mean, map2.prior_cov, 100, np.random.default_rng(0))
    out = []
    for name in ("compiled", "python"):
        old = kernels.use_backend(name)
        try:
            out.append(plan(b, cfg(kind, L=2, m_d=3), map2, 4))
        finally:
            kernels.use_backend(old)
    assert out[0].action == out[1].action
    np.testing.assert_allclose(out[0].q, out[1].q, rtol=1e-10)


def test_tracking_scenario_plans(map2):
    b = ParticleBelief.from_gaussian(map2.prior_mean, map2.prior_cov, 80, np.random.default_rng(1))
    res = plan(b, cfg(UNCONSTRAINED, m_d=20), map2, 0, t0=3)
    # the target is far east, so an eastward move should win
    assert res.action_name in ("E", "NE", "SE")
    # straight east from the origin enters the obstacle, which PCSS must avoid
    assert not plan(b, cfg(PCSS, m_d=20), map2, 0, t0=3).feasible[0]


# ------------------------------------------------------- synthetic and discrete rigs


def test_pcss_matches_brute_force_on_designated_trees():
    for bits in itertools.product((0, 1), repeat=9):
        tree = oracles.designated_tree(bits)
        assert np.array_equal(oracles.pcss_on_tree(tree, 0.8).feasible, tree.brute_force_feasible(0.8))


def test_pcss_nested_pruning_on_designated_tree():
    bits = (1, 1, 1, 0, 0, 1, 0, 0, 1)
    tree = oracles.designated_tree(bits)
    res = oracles.pcss_on_tree(tree, 0.8)
    # root action 0 loses its second child's only rescue actions
    assert res.feasible.tolist() == [False, True, True]


def _argmax_policy_estimate(tree, a, delta, eps):
    """Lace fraction below root action a under the unconstrained best-Q policy."""
    def q(node, act):
        vals = []
        for c in tree.kids[(node, act)]:
            v = tree.reward[c]
            if tree.level[c] < tree.depth:
                v += max(q(c, a2) for a2 in range(tree.n_actions))
            vals.append(v)
        return float(np.mean(vals))

    inner = tree.inner_nodes(a)
    pol = {c: int(np.argmax([q(c, a2) for a2 in range(tree.n_actions)])) for c in inner}
    return tree.outer_estimate(a, pol, delta)


def test_lace_mode_matches_argmax_policy_oracle():
    r = np.random.default_rng(21)
    for _ in range(200):
        tree, delta = oracles.random_tree(r)
        eps = float(r.choice([0.25, 0.5, 0.75]))
        cfg_ = PlannerConfig(PCSS, 2, 2, ConstraintSpec(delta, epsilon=eps))
        res = plan(ParticleBelief(np.zeros((1, 1))), cfg_, rng=0, model=oracles.SyntheticModel(tree))
        expect = [_argmax_policy_estimate(tree, a, delta, eps) >= 1 - eps - 1e-9 for a in range(3)]
        assert res.feasible.tolist() == expect


def test_cumulative_form_uses_lace_mode():
    tree = oracles.SyntheticTree(3, 2, 2)
    tree.phi[:] = 0.3
    spec = ConstraintSpec(0.5, form=CUMULATIVE)  # two steps of 0.3 sum to 0.6 > 0.5
    res = plan(ParticleBelief(np.zeros((1, 1))), PlannerConfig(PCSS, 2, 2, spec), rng=0,
               model=oracles.SyntheticModel(tree))
    assert res.feasible.all()
    spec = ConstraintSpec(0.6, form=CUMULATIVE)
    res = plan(ParticleBelief(np.zeros((1, 1))), PlannerConfig(PCSS, 2, 2, spec), rng=0,
               model=oracles.SyntheticModel(tree))
    assert not res.feasible.any()


def test_discrete_er_converges_to_exact():
    rig = oracles.DiscreteRig.random(np.random.default_rng(5))
    exact = oracles.exact_chance_tree(rig, 1, 0.0)
    res = oracles.plan_discrete(rig, CCSS_IS, 1, 4000, 0.0, 3, keep_tree=True)
    er = np.array([a.er for a in res.tree.actions])
    np.testing.assert_allclose(er, exact.er, atol=0.01)
    np.testing.assert_allclose(res.q, exact.q, atol=0.05)


def test_witness_rejected_by_upsweep():
    res = oracles.plan_discrete(oracles.witness_rig(), CCSS_IS, 2, 6, 0.8, 0, keep_tree=True)
    assert res.infeasible
    assert res.stats.upsweep_rejections == 2 and res.stats.pruned_actions == 0
    for arec in res.tree.actions:
        assert arec.er == pytest.approx(0.2305)
        assert all(c.best is not None for c in arec.children)
