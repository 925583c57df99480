import numpy as np
import pytest
from hypothesis import given, strategies as st

from pcpomdp import _kernels_py as ref
from pcpomdp import kernels

compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="extension not built")


def _seeded(seed):
    return np.random.default_rng(seed)


@pytest.fixture
def both():
    """Run a kernel on both backends and return (compiled, python) outputs."""
    def run(fn, *args):
        outs = []
        for name in ("compiled", "python"):
            old = kernels.use_backend(name)
            try:
                outs.append(getattr(kernels, fn)(*args))
            finally:
                kernels.use_backend(old)
        return outs
    return run


def test_backend_switch_round_trip():
    old = kernels.use_backend("python")
    assert kernels.BACKEND == "python"
    kernels.use_backend(old)
    assert kernels.BACKEND == old
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_normalize_rows_rejects_dead_row():
    logw = np.array([[0.0, 1.0], [-np.inf, -np.inf]])
    with pytest.raises(FloatingPointError):
        ref.normalize_rows(logw)


def test_loglik_matches_gaussian_density():
    z = np.array([[0.3, -0.2]])
    means = np.array([[[0.0, 0.0]]])
    var = np.array([[0.5]])
    expect = -np.log(2 * np.pi * 0.5) - (0.3 ** 2 + 0.2 ** 2) / (2 * 0.5)
    assert ref.block_gauss_loglik(z, means, var)[0, 0] == pytest.approx(expect, abs=1e-14)


def test_systematic_indices_uniform_weights_are_identity():
    logw = np.zeros((1, 7))
    idx = ref.systematic_indices(logw, np.array([0.3]))
    assert idx.tolist() == [list(range(7))]


def test_scaled_variance_switches_at_r_min():
    refs = np.zeros((1, 2))
    pos = np.array([[0.0, 0.005], [0.0, 2.0]])
    v = ref.scaled_variance(pos, refs, 0.1, 0.01, 0.01)
    assert v.tolist() == pytest.approx([0.01, 0.2])


@compiled
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 40), st.integers(1, 2))
def test_loglik_parity(seed, n, m, k):
    r = _seeded(seed)
    z = r.normal(size=(n, 2 * k))
    means = r.normal(size=(m, k, 2))
    var = r.uniform(0.01, 2.0, size=(m, k))
    a = kernels._compiled.block_gauss_loglik(z, means, var)
    b = ref.block_gauss_loglik(z, means, var)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@compiled
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 60))
def test_normalize_and_resample_parity(seed, n, m):
    r = _seeded(seed)
    logw = r.normal(scale=5.0, size=(n, m))
    logw[r.random((n, m)) < 0.3] = -np.inf
    logw[:, 0] = r.normal(size=n)  # keep every row alive
    u = r.random(n)
    np.testing.assert_allclose(kernels._compiled.normalize_rows(logw), ref.normalize_rows(logw), atol=1e-14)
    assert np.array_equal(kernels._compiled.systematic_indices(logw, u), ref.systematic_indices(logw, u))
    b = r.normal(size=m)
    np.testing.assert_allclose(kernels._compiled.logsumexp_rows(logw, b), ref.logsumexp_rows(logw, b), rtol=1e-13)


@compiled
@given(st.integers(0, 2**32 - 1), st.booleans(), st.booleans(), st.integers(1, 30), st.integers(1, 8))
def test_expand_batch_parity(seed, tracking, given_z, n, k):
    r = _seeded(seed)
    D = 4 if tracking else 2
    dz = 4 if tracking else 2
    x = r.normal(size=(n, D))
    w = r.dirichlet(np.ones(n))
    args = dict(
        avec=r.normal(size=D), noise=r.normal(size=(n, D)), sd=0.3,
        zin=r.normal(size=(k, dz)) if given_z else np.empty((0, dz)),
        u=np.empty(0) if given_z else r.random(k),
        eps=np.empty((0, dz)) if given_z else r.normal(size=(k, dz)),
        beacons=r.normal(size=(4, 2)), sigma_w_sq=0.1, sigma_v_sq=0.01, r_min=0.01,
        tracking=tracking, goal=np.array([1.0, 0.0]),
        obs_c=r.normal(size=(2, 2)), obs_r=np.array([0.5, 0.8]), obs_sq=np.array([0, 1]),
    )
    a = kernels._compiled.expand_batch(x, w, *args.values())
    b = ref.expand_batch(x, w, *args.values())
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-12)


@compiled
def test_compiled_rejects_dead_row():
    with pytest.raises(FloatingPointError):
        kernels._compiled.normalize_rows(np.full((1, 3), -np.inf))


def test_dispatch_wrappers_accept_non_contiguous(both):
    r = _seeded(3)
    logw = r.normal(size=(8, 5)).T  # Fortran-ordered view
    if kernels.compiled_available():
        a, b = both("normalize_rows", logw)
        np.testing.assert_allclose(a, b, atol=1e-14)
    else:
        assert kernels.normalize_rows(logw).shape == (5, 8)
