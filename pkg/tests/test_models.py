import numpy as np
import pytest
from hypothesis import given, strategies as st

from pcpomdp.errors import ConfigError
from pcpomdp.models import (
    ACTION_NAMES,
    ACTIONS,
    NULL_ACTION,
    SQUARE,
    NoiseParams,
    Obstacle,
    Scenario,
    action_index,
    beacon_variance,
    in_safe_space,
    observation_logdensity,
    observation_params,
    observation_sample,
    penetration_depth,
    safe_mask,
    transition_sample,
)
from pcpomdp.scenario_file import dumps, loads, read_scenario, write_scenario


def test_action_table():
    assert len(ACTION_NAMES) == 9 and ACTION_NAMES[NULL_ACTION] == "NULL"
    norms = np.linalg.norm(ACTIONS, axis=1)
    np.testing.assert_allclose(norms[:8], 1.0)
    assert norms[8] == 0.0
    assert action_index("ne") == 1
    with pytest.raises(ConfigError):
        action_index("UP")


def test_builtin_noise(map1, map2):
    assert (map1.noise.sigma_w_sq, map1.noise.sigma_v_sq, map1.noise.r_min, map1.noise.gamma) == (0.1, 0.01, 0.01, 0.99)
    assert map2.prior_mean == (0.0, 0.0, 10.0, 0.0)
    assert map2.ground_truth_init == (-0.5, -0.2, 10.0, 0.0)
    assert map1.ground_truth_init == (-0.5, -0.2)
    np.testing.assert_allclose(map1.prior_cov, 0.1 * np.eye(2))
    np.testing.assert_allclose(map2.prior_cov, 0.01 * np.eye(4))


def test_obstacle_boundary_is_unsafe():
    disk = Obstacle((0.0, 0.0), 1.0)
    sq = Obstacle((0.0, 0.0), 1.0, SQUARE)
    assert not in_safe_space(np.array([1.0, 0.0]), disk)
    assert in_safe_space(np.array([1.0 + 1e-9, 0.0]), disk)
    # corner of the square is at sup-norm 1, inside; the disk would miss it
    assert not in_safe_space(np.array([0.95, 0.95]), sq)
    assert in_safe_space(np.array([0.95, 0.95]), disk)


def test_penetration_depth():
    ob = Obstacle((1.0, 1.0), 0.5)
    x = np.array([[1.0, 1.0], [1.25, 1.0], [3.0, 3.0]])
    np.testing.assert_allclose(penetration_depth(x, ob), [0.5, 0.25, 0.0])


def test_target_block_ignored_by_safety(map2):
    ob = map2.obstacles[0]
    x = np.array([[-5.0, -5.0, *ob.center]])
    assert safe_mask(x, map2).tolist() == [True]


def test_invalid_scenarios(map1):
    kw = dict(kind="navigation", beacons=[(0, 0)], obstacles=(), prior_mean=(0, 0),
              prior_cov=np.eye(2), ground_truth_init=(0, 0), goal=(1, 1))
    Scenario(**kw)
    with pytest.raises(ConfigError):
        Scenario(**{**kw, "prior_cov": [[1, 2], [2, 1]]})
    with pytest.raises(ConfigError):
        Scenario(**{**kw, "goal": None})
    with pytest.raises(ConfigError):
        Scenario(**{**kw, "kind": "tracking", "prior_mean": (0, 0, 0, 0)})
    with pytest.raises(ConfigError):
        Obstacle((0, 0), -1.0)
    with pytest.raises(ConfigError):
        NoiseParams(gamma=1.5)


def test_tracking_action_follows_script(map2):
    a0 = map2.full_action(NULL_ACTION, 0)
    a1 = map2.full_action(NULL_ACTION, 1)
    np.testing.assert_allclose(a0, [0, 0, -1, 0])
    np.testing.assert_allclose(a1, [0, 0, 0, 1])
    np.testing.assert_allclose(map2.full_action(0, 2), [1, 0, -1, 0])


def test_transition_moments(map1, rng):
    x = np.zeros((20000, 2))
    xp = transition_sample(x, ACTIONS[0], map1, rng)
    np.testing.assert_allclose(xp.mean(axis=0), [1.0, 0.0], atol=0.01)
    np.testing.assert_allclose(xp.var(axis=0), [0.1, 0.1], rtol=0.05)


def test_beacon_variance_scales_with_distance(map1):
    pos = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 0.005]])
    v = beacon_variance(pos, map1)
    np.testing.assert_allclose(v, [0.01, 0.1 * np.sqrt(2.0), 0.01])


def test_observation_density_matches_samples(map2, rng):
    x = np.array([0.5, 0.5, 3.0, 1.0])
    means, var = observation_params(x[None, :], map2)
    zs = observation_sample(np.repeat(x[None, :], 40000, axis=0), map2, rng)
    np.testing.assert_allclose(zs.mean(axis=0), means[0].ravel(), atol=0.02)
    np.testing.assert_allclose(zs.var(axis=0), np.repeat(var[0], 2), rtol=0.05)
    z = zs[0]
    expect = sum(
        -np.log(2 * np.pi * var[0, k]) - ((z[2 * k:2 * k + 2] - means[0, k]) ** 2).sum() / (2 * var[0, k])
        for k in range(2)
    )
    assert observation_logdensity(z, x, map2) == pytest.approx(expect, rel=1e-12)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_safe_mask_agrees_with_obstacles(map1, px, py):
    x = np.array([px, py])
    ob = map1.obstacles[0]
    assert bool(safe_mask(x, map1)) == (np.hypot(px - ob.center[0], py - ob.center[1]) > ob.radius)


def test_scenario_file_round_trip(tmp_path, maps):
    for s in maps:
        p = tmp_path / f"{s.name}.json"
        write_scenario(s, p)
        text = p.read_text()
        back = read_scenario(p)
        assert back == s
        assert dumps(back) == text


def test_scenario_file_errors():
    with pytest.raises(ConfigError):
        loads("{not json")
    with pytest.raises(ConfigError):
        loads("[]")
    with pytest.raises(ConfigError):
        loads('{"kind": "navigation"}')
    with pytest.raises(ConfigError):
        loads('{"kind": "navigation", "beacons": [[0, 0]], "prior_mean": [0, 0], "prior_cov": [[1, 0], [0, 1]],'
              ' "ground_truth_init": [0, 0], "goal": [1, 1], "colour": "red"}')
