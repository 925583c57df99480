import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pcpomdp.belief import (
    ParticleBelief,
    cvar_deviation,
    entropy_estimate,
    info_gain,
    mean_sq_goal_distance,
    pf_update,
    prob_safe,
    reweight,
    safe_projection,
    state_reward,
    systematic_resample,
    value_at_risk,
)
from pcpomdp.errors import AllUnsafe, DegenerateBelief
from pcpomdp.models import ACTIONS, Obstacle


def test_weights_normalized_and_frozen():
    b = ParticleBelief([[0.0, 0.0], [1.0, 1.0]], [1.0, 3.0])
    np.testing.assert_allclose(b.weights, [0.25, 0.75])
    with pytest.raises(ValueError):
        b.weights[0] = 1.0
    with pytest.raises(DegenerateBelief):
        ParticleBelief([[0.0, 0.0]], [0.0])
    with pytest.raises(ValueError):
        ParticleBelief([[0.0, 0.0]], [-1.0])


@given(st.integers(0, 2**32 - 1), st.integers(1, 80))
def test_systematic_resample_counts(seed, m):
    r = np.random.default_rng(seed)
    w = r.dirichlet(np.ones(m) * 0.5)
    b = ParticleBelief(np.arange(m, dtype=float)[:, None], w)
    out = systematic_resample(b, r)
    counts = np.bincount(out.particles[:, 0].astype(int), minlength=m)
    # systematic resampling keeps each count within one of m * w
    assert counts.sum() == m
    assert np.all(np.abs(counts - m * b.weights) < 1.0 + 1e-9)


def test_safe_projection(map1, rng):
    ob = map1.obstacles[0]
    inside = np.asarray(ob.center)
    b = ParticleBelief([inside, inside + 5.0, inside - 5.0], [0.5, 0.25, 0.25])
    res = safe_projection(b, map1)
    assert res.survival_mass == pytest.approx(0.5)
    assert prob_safe(res.belief, map1) == 1.0
    np.testing.assert_allclose(res.belief.weights, [0.0, 0.5, 0.5])
    with pytest.raises(AllUnsafe):
        safe_projection(ParticleBelief([inside]), map1)


def test_safe_projection_identity_consumes_no_randomness(map1):
    b = ParticleBelief([[-3.0, -3.0], [-4.0, -3.0]])
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    out = safe_projection(b, map1, r1)
    assert out.belief is b and out.survival_mass == 1.0
    assert r1.random() == r2.random()


def test_pf_update_concentrates_on_truth(map1, rng):
    b = ParticleBelief.from_gaussian((0.0, 0.0), 0.5 * np.eye(2), 2000, rng)
    z = np.array([1.0, 0.0])  # beacon reading near (1, 0) after moving east from the origin
    post = pf_update(b, ACTIONS[0], z, map1, rng)
    assert post.uniform and post.m == 2000
    # the posterior is closer to the reading than the propagated prior
    assert np.linalg.norm(post.mean() - z) < np.linalg.norm(b.mean() + ACTIONS[0] - z)
    assert np.trace(post.cov()) < np.trace(b.cov()) + 0.2


def test_reweight_degenerate():
    b = ParticleBelief([[0.0], [1.0]])
    with pytest.raises(DegenerateBelief):
        reweight(b, np.array([-np.inf, -np.inf]))


def test_cvar_of_four_point_belief():
    ob = Obstacle((0.0, 0.0), 1.0)
    # depths 0, 0, 0, 1
    b = ParticleBelief([[5.0, 0.0], [6.0, 0.0], [7.0, 0.0], [0.0, 0.0]])
    assert cvar_deviation(b, ob, 0.25) == pytest.approx(0.25)
    assert value_at_risk(b, ob, 0.25) == 0.0
    assert cvar_deviation(b, ob, 0.75) == pytest.approx(0.25)
    # only below alpha = 0.25 does the quantile reach the deep particle
    assert value_at_risk(b, ob, 0.1) == 1.0
    assert cvar_deviation(b, ob, 0.1) == pytest.approx(1.0)
    assert cvar_deviation(b, ob, 1.0) == pytest.approx(0.25)
    assert cvar_deviation(ParticleBelief([[5.0, 0.0]]), ob, 0.5) == 0.0


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
def test_cvar_dominates_var_and_mean(seed, alpha):
    r = np.random.default_rng(seed)
    ob = Obstacle((0.0, 0.0), 1.0)
    b = ParticleBelief(r.normal(scale=0.8, size=(30, 2)), r.dirichlet(np.ones(30)))
    c = cvar_deviation(b, ob, alpha)
    if c > 0:
        assert c >= value_at_risk(b, ob, alpha) - 1e-12
    depth = np.maximum(0, 1.0 - np.linalg.norm(b.particles, axis=1))
    assert c >= b.weights @ depth - 1e-12


def test_entropy_of_gaussian(rng):
    b = ParticleBelief(rng.standard_normal((10000, 2)))
    closed = 1.0 + math.log(2 * math.pi)
    assert entropy_estimate(b) == pytest.approx(closed, abs=0.05)
    small = ParticleBelief(b.particles[:500])
    narrow = ParticleBelief(0.5 * small.particles)
    # scaling by 1/2 lowers the entropy of a 2-D density by 2 log 2
    assert entropy_estimate(small) - entropy_estimate(narrow) == pytest.approx(2 * math.log(2), abs=1e-9)


def test_info_gain_of_halved_covariance(rng):
    x = rng.standard_normal((10000, 2))
    b, post = ParticleBelief(x), ParticleBelief(x / np.sqrt(2.0))
    assert info_gain(b, None, None, post) == pytest.approx(math.log(2.0), rel=0.1)


def test_info_gain_of_a_belief_with_itself_is_zero(rng):
    b = ParticleBelief(rng.standard_normal((300, 2)))
    assert info_gain(b, None, None, b) == 0.0


def test_state_reward(map1, map2):
    b = ParticleBelief([[5.0, 0.0], [5.0, 2.0]])
    assert state_reward(b, map1) == pytest.approx(-2.0)
    assert mean_sq_goal_distance(b, map1.goal) == pytest.approx(2.0)
    t = ParticleBelief([[0.0, 0.0, 3.0, 4.0]])
    assert state_reward(t, map2) == pytest.approx(-25.0)


def test_to_csv(tmp_path):
    b = ParticleBelief([[0.0, 1.0], [2.0, 3.0]], [1, 3])
    p = tmp_path / "b.csv"
    b.to_csv(p)
    rows = p.read_text().splitlines()
    assert rows[0] == "x1,x2,weight" and len(rows) == 3
