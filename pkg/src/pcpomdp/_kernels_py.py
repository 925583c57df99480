"""Pure-numpy reference implementation of the hot kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature
and semantics. The compiled module is preferred at import time; this one is
the fallback and the oracle the compiled kernels are tested against.
"""

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def block_gauss_loglik(z, means, var):
    """Log-likelihood matrix for isotropic 2-D Gaussian observation blocks.

    z: (n, 2K) observations; means: (m, K, 2); var: (m, K).
    Returns (n, m) with entry [j, i] = log p(z_j | particle i).
    """
    n = z.shape[0]
    m, k, _ = means.shape
    zb = z.reshape(n, 1, k, 2)
    sq = ((zb - means[None, :, :, :]) ** 2).sum(axis=-1)  # (n, m, K)
    ll = -sq / (2.0 * var[None, :, :]) - (LOG_2PI + np.log(var))[None, :, :]
    return ll.sum(axis=-1)


def normalize_rows(logw):
    """Row-wise softmax of log-weights. Rows that are all -inf raise."""
    mx = logw.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(mx)):
        raise FloatingPointError("row with no finite log-weight")
    w = np.exp(logw - mx)
    w /= w.sum(axis=1, keepdims=True)
    return w


def logsumexp_rows(a, logb):
    """log sum_i exp(a[j, i] + logb[i]) for every row j."""
    s = a + logb[None, :]
    mx = s.max(axis=1)
    out = np.full(a.shape[0], -np.inf)
    ok = np.isfinite(mx)
    out[ok] = mx[ok] + np.log(np.exp(s[ok] - mx[ok, None]).sum(axis=1))
    return out


def systematic_indices(logw, u):
    """Systematic resampling of each row of ``logw`` with offsets ``u`` in [0, 1).

    Returns (n, m) int64 ancestor indices.
    """
    w = normalize_rows(logw)
    n, m = w.shape
    cdf = np.cumsum(w, axis=1)
    cdf[:, -1] = 1.0
    pos = (np.arange(m)[None, :] + u[:, None]) / m
    idx = np.empty((n, m), dtype=np.int64)
    for j in range(n):
        idx[j] = np.searchsorted(cdf[j], pos[j], side="right")
    np.minimum(idx, m - 1, out=idx)
    return idx


def scaled_variance(pos, refs, sigma_w_sq, sigma_v_sq, r_min):
    """Distance-scaled isotropic variance to the nearest reference point."""
    diff = pos[:, None, :] - refs[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1)).min(axis=1)
    return np.where(d >= r_min, sigma_w_sq * d, sigma_v_sq)


def expand_batch(x, w, avec, noise, sd, zin, u, eps, beacons, sigma_w_sq, sigma_v_sq,
                 r_min, tracking, goal, obs_c, obs_r, obs_sq):
    """Propagate, sample observations, and weight all children of an action node.

    Returns (xp, z, ll, W, safe, rew). ``zin`` with zero rows means observations
    are drawn here from ``u`` (particle choice) and ``eps`` (standard normals).
    """
    xp = x + avec[None, :] + sd * noise
    agent = xp[:, :2]
    var0 = scaled_variance(agent, beacons, sigma_w_sq, sigma_v_sq, r_min)
    if tracking:
        rel = agent - xp[:, 2:4]
        var1 = scaled_variance(rel, np.zeros((1, 2)), sigma_w_sq, sigma_v_sq, r_min)
        means = np.stack([agent, rel], axis=1)
        var = np.stack([var0, var1], axis=1)
    else:
        means = agent[:, None, :]
        var = var0[:, None]
    if zin.shape[0] == 0:
        cdf = np.cumsum(w)
        idx = np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), w.shape[0] - 1)
        k = means.shape[1]
        z = (means[idx] + np.sqrt(var[idx])[:, :, None] * eps.reshape(-1, k, 2)).reshape(len(u), -1)
    else:
        z = zin
    ll = block_gauss_loglik(z, means, var)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    W = normalize_rows(logw[None, :] + ll)
    safe = np.ones(xp.shape[0])
    for c, r, sq in zip(obs_c, obs_r, obs_sq):
        d = agent - c
        dist = np.abs(d).max(axis=1) if sq else np.sqrt((d * d).sum(axis=1))
        safe[dist <= r] = 0.0
    ref = xp[:, 2:4] if tracking else goal[None, :]
    dr = agent - ref
    rew = -(dr * dr).sum(axis=1)
    return xp, z, ll, W, safe, rew
