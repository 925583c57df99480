"""Backend selection for the hot numerical kernels.

The compiled extension is used when it imports; otherwise the numpy version
takes over. Set ``PCPOMDP_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("PCPOMDP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "compiled" if _compiled is not None else "python"


def compiled_available():
    return _compiled is not None


def use_backend(name):
    """Switch the active backend ("compiled" or "python"). Returns the old name."""
    global _impl, BACKEND
    old = BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _impl, BACKEND = _compiled, "compiled"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return old


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def block_gauss_loglik(z, means, var):
    return _impl.block_gauss_loglik(_c(z), _c(means), _c(var))


def normalize_rows(logw):
    return _impl.normalize_rows(_c(logw))


def logsumexp_rows(a, logb):
    return _impl.logsumexp_rows(_c(a), _c(logb))


def systematic_indices(logw, u):
    return _impl.systematic_indices(_c(logw), _c(u))


def scaled_variance(pos, refs, sigma_w_sq, sigma_v_sq, r_min):
    return _impl.scaled_variance(_c(pos), _c(refs), float(sigma_w_sq), float(sigma_v_sq), float(r_min))


def expand_batch(x, w, avec, noise, sd, zin, u, eps, beacons, sigma_w_sq, sigma_v_sq,
                 r_min, tracking, goal, obs_c, obs_r, obs_sq):
    return _impl.expand_batch(
        _c(x), _c(w), _c(avec), _c(noise), float(sd), _c(zin), _c(u), _c(eps), _c(beacons),
        float(sigma_w_sq), float(sigma_v_sq), float(r_min), bool(tracking), _c(goal),
        _c(obs_c), _c(obs_r), np.ascontiguousarray(obs_sq, dtype=np.int64),
    )
