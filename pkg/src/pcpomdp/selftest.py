"""Fast oracle checks runnable from an installed package (``pcpomdp selftest``)."""

import itertools
import sys

import numpy as np

from . import kernels, oracles
from .constraints import AdaptiveCounter, cc_prune_check, execution_risk


def check_pcss_exact(n_random):
    rng = np.random.default_rng(11)
    for bits in itertools.product((0, 1), repeat=9):
        tree = oracles.designated_tree(bits)
        if not np.array_equal(oracles.pcss_on_tree(tree, 0.8).feasible, tree.brute_force_feasible(0.8)):
            return False
    for _ in range(n_random):
        tree, delta = oracles.random_tree(rng)
        if not np.array_equal(oracles.pcss_on_tree(tree, delta).feasible, tree.brute_force_feasible(delta)):
            return False
    return True


def check_adaptive_bounds(n):
    rng = np.random.default_rng(12)
    for _ in range(n):
        m = int(rng.integers(1, 51))
        eps = float(rng.uniform(0, 1))
        seq = (rng.random(m) < rng.uniform()).astype(int)
        final = seq.mean()
        c = AdaptiveCounter(m)
        for s in seq:
            c.add(s)
            if not c.lower <= final <= c.upper:
                return False
        if oracles.bound_trigger(seq, m, eps) != oracles.counter_trigger(seq, m, eps):
            return False
    return True


def check_execution_risk(n):
    rng = np.random.default_rng(13)
    for _ in range(n):
        rig = oracles.DiscreteRig.random(rng)
        table = {}

        def pol(h):
            return table.setdefault(h, int(rng.integers(rig.n_actions)))
        for a in range(rig.n_actions):
            er = oracles.policy_execution_risk(rig, a, pol, 2)
            if abs(er - (1.0 - oracles.trajectory_safe_probability(rig, a, pol, 2))) > 1e-12:
                return False
    return True


def check_witness():
    w, r, rc, erc, Delta = oracles.necessity_witness()
    if cc_prune_check(w, rc, r, Delta) or execution_risk(r, w, erc) <= Delta:
        return False
    res = oracles.plan_discrete(oracles.witness_rig(), "ccss_is", 2, 8, 0.8, 0)
    return res.infeasible and res.stats.upsweep_rejections > 0


def check_is():
    rig = oracles.GaussianISRig()
    rng = np.random.default_rng(14)
    est = rig.is_estimate(100_000, rng)
    return abs(est - rig.safe_mean()) / rig.safe_mean() < 0.02


def check_kernel_parity():
    if not kernels.compiled_available():
        return True
    rng = np.random.default_rng(15)
    logw = rng.normal(size=(6, 40))
    u = rng.random(6)
    out = []
    for name in ("compiled", "python"):
        old = kernels.use_backend(name)
        try:
            out.append((kernels.normalize_rows(logw), kernels.systematic_indices(logw, u)))
        finally:
            kernels.use_backend(old)
    return np.allclose(out[0][0], out[1][0], rtol=0, atol=1e-12) and np.array_equal(out[0][1], out[1][1])


def run_all(quick=False, out=sys.stdout):
    n = 200 if quick else 2000
    checks = [
        ("pcss pruning equals brute-force outer estimate", lambda: check_pcss_exact(n)),
        ("adaptive bounds bracket the estimate", lambda: check_adaptive_bounds(n)),
        ("execution risk equals trajectory enumeration", lambda: check_execution_risk(n // 10)),
        ("up-sweep rejects a bound-passing witness", check_witness),
        ("importance sampling recovers the safe-prior mean", check_is),
        ("compiled and python kernels agree", check_kernel_parity),
    ]
    ok = True
    for name, fn in checks:
        passed = bool(fn())
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}", file=out)
    return ok
