"""Receding-horizon execution loop, built-in scenarios and comparison metrics."""

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .belief import ParticleBelief, pf_update, safe_projection, state_reward
from .errors import AllUnsafe, ConfigError, DegenerateBelief
from .models import (
    ACTION_NAMES,
    NAVIGATION,
    NULL_ACTION,
    SQUARE,
    TRACKING,
    NoiseParams,
    Obstacle,
    Scenario,
    observation_params,
    safe_mask,
)
from .planners import PlannerConfig, plan

CSV_COLUMNS = (
    "trial", "step", "planner", "delta", "epsilon", "L", "m_d", "m_x", "sc", "action",
    "reward", "collision", "plan_time_ms", "expanded_actions", "feasible", "declared_infeasible",
)

BEACON_GRID = tuple((float(x), float(y)) for x in (-2.0, 0.0, 2.0) for y in (-2.0, 0.0, 2.0))


def builtin_scenarios():
    """(map1, map2): beacon navigation with a disk, target tracking with a square."""
    noise = NoiseParams(sigma_w_sq=0.1, sigma_v_sq=0.01, r_min=0.01, gamma=0.99)
    map1 = Scenario(
        kind=NAVIGATION,
        name="map1",
        beacons=BEACON_GRID,
        obstacles=(Obstacle((2.0, 0.2), 1.2),),
        goal=(5.0, 0.0),
        noise=noise,
        prior_mean=(0.0, 0.0),
        prior_cov=0.1 * np.eye(2),
        ground_truth_init=(-0.5, -0.2),
    )
    map2 = Scenario(
        kind=TRACKING,
        name="map2",
        beacons=BEACON_GRID,
        obstacles=(Obstacle((2.0, 0.2), 1.2, SQUARE),),
        target_script=("W", "N"),
        noise=noise,
        prior_mean=(0.0, 0.0, 10.0, 0.0),
        prior_cov=0.01 * np.eye(4),
        ground_truth_init=(-0.5, -0.2, 10.0, 0.0),
    )
    return map1, map2


def scenario_by_name(name):
    for s in builtin_scenarios():
        if s.name == name:
            return s
    raise ConfigError(f"no built-in scenario named {name!r}")


@dataclass(frozen=True)
class TrialConfig:
    scenario: Scenario
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    steps: int = 21
    trials: int = 50
    seed: int = 0
    m_x: int = 150
    make_belief_safe: bool = True
    label: str = ""

    def __post_init__(self):
        if self.steps < 1 or self.trials < 1:
            raise ConfigError("steps and trials must be >= 1")
        if self.m_x < 1:
            raise ConfigError("m_x must be >= 1")
        if not self.label:
            object.__setattr__(self, "label", self.planner.kind)


@dataclass
class StepRecord:
    trial: int
    step: int
    action: str
    reward: float
    collision: bool
    plan_time: float
    expanded_actions: int
    feasible: bool
    declared_infeasible: bool
    aborted: bool = False


def trial_streams(seed, trial):
    """Independent (environment, inference, planner) generators for one trial."""
    env, inf, pln = np.random.SeedSequence(seed, spawn_key=(trial,)).spawn(3)
    return np.random.default_rng(env), np.random.default_rng(inf), np.random.default_rng(pln)


def _abort(trial, step):
    return StepRecord(trial, step, "ABORT", float("nan"), False, 0.0, 0, False, True, True)


def run_trial(cfg, trial=0):
    """One receding-horizon episode. Errors end the trial with an ABORT record."""
    scen = cfg.scenario
    env, inf, pln = trial_streams(cfg.seed, trial)
    x_gt = np.array(scen.ground_truth_init)
    sd = np.sqrt(scen.noise.sigma_w_sq)
    n_obs = 2 if scen.kind == NAVIGATION else 4
    b = ParticleBelief.from_gaussian(scen.prior_mean, scen.prior_cov, cfg.m_x, inf)
    out = []
    for t in range(cfg.steps):
        if cfg.make_belief_safe and scen.obstacles:
            try:
                b = safe_projection(b, scen, inf).belief
            except AllUnsafe:
                out.append(_abort(trial, t))
                break
        key = int(pln.integers(0, 2**63 - 1))
        try:
            res = plan(b, cfg.planner, scen, key, t0=t)
            a, infeasible = res.action, res.infeasible
            plan_time, expanded = res.stats.wall_time, res.stats.expanded_actions
        except ValueError:  # root belief already violates the constraint
            a, infeasible, plan_time, expanded = None, True, 0.0, 0
        a_exec = NULL_ACTION if a is None else a
        # fixed draw count per step keeps the environment stream planner-independent
        eta = env.standard_normal(scen.dim)
        eps = env.standard_normal(n_obs)
        u = scen.full_action(a_exec, t)
        x_gt = x_gt + u + sd * eta
        collision = not bool(safe_mask(x_gt, scen))
        means, var = observation_params(x_gt, scen)
        z = (means[0] + np.sqrt(var[0])[:, None] * eps.reshape(-1, 2)).ravel()
        try:
            b = pf_update(b, u, z, scen, inf)
        except DegenerateBelief:
            out.append(_abort(trial, t))
            break
        out.append(StepRecord(
            trial, t, ACTION_NAMES[a_exec], state_reward(b, scen), collision, plan_time,
            expanded, not infeasible, infeasible,
        ))
    return out


def _run_one(args):
    cfg, trial = args
    return run_trial(cfg, trial)


def run_trials(cfg, workers=1):
    """All trials of one config, merged in (trial, step) order."""
    jobs = [(cfg, k) for k in range(cfg.trials)]
    if workers <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_one, jobs))
    return [r for trial in results for r in trial]


@dataclass
class PlannerSummary:
    label: str
    kind: str
    delta: float
    trials: int
    collisions: int
    mean_return: float
    mean_discounted_return: float
    mean_plan_time: float  # total planning seconds per trial
    mean_expanded: float  # expanded actions per trial
    declared_infeasible: int
    aborted: int


def summarize(cfg, records):
    by_trial = {}
    for r in records:
        by_trial.setdefault(r.trial, []).append(r)
    gamma = cfg.scenario.noise.gamma
    rets, drets, times, exps = [], [], [], []
    coll = infeas = abort = 0
    for recs in by_trial.values():
        rew = [r.reward for r in recs if not r.aborted]
        rets.append(float(np.sum(rew)))
        drets.append(float(sum(gamma ** r.step * r.reward for r in recs if not r.aborted)))
        times.append(sum(r.plan_time for r in recs))
        exps.append(sum(r.expanded_actions for r in recs))
        coll += any(r.collision for r in recs)
        infeas += sum(r.declared_infeasible and not r.aborted for r in recs)
        abort += any(r.aborted for r in recs)
    return PlannerSummary(
        cfg.label, cfg.planner.kind, cfg.planner.constraint.delta, len(by_trial), coll,
        float(np.mean(rets)), float(np.mean(drets)), float(np.mean(times)), float(np.mean(exps)),
        infeas, abort,
    )


def speedup(t_base, t_alg):
    return (t_base - t_alg) / t_base


def action_fraction(n_base, n_alg):
    return (n_base - n_alg) / n_base


@dataclass
class ComparisonReport:
    summaries: dict  # label -> PlannerSummary
    baseline: str
    records: dict = field(default_factory=dict)  # label -> list of StepRecord

    def speedup(self, label, base=None):
        b = self.summaries[base or self.baseline]
        return speedup(b.mean_plan_time, self.summaries[label].mean_plan_time)

    def action_fraction(self, label, base=None):
        b = self.summaries[base or self.baseline]
        return action_fraction(b.mean_expanded, self.summaries[label].mean_expanded)

    def to_text(self):
        head = (f"{'planner':<18}{'delta':>7}{'collide':>9}{'return':>12}{'disc.ret':>12}"
                f"{'time[s]':>10}{'expanded':>11}{'speedup':>9}{'act.frac':>10}{'infeas':>8}")
        lines = [f"baseline: {self.baseline}", head, "-" * len(head)]
        for lbl, s in self.summaries.items():
            lines.append(
                f"{lbl:<18}{s.delta:>7.3g}{s.collisions:>5}/{s.trials:<3}{s.mean_return:>12.2f}"
                f"{s.mean_discounted_return:>12.2f}{s.mean_plan_time:>10.3f}{s.mean_expanded:>11.1f}"
                f"{self.speedup(lbl):>9.3f}{self.action_fraction(lbl):>10.3f}{s.declared_infeasible:>8}"
            )
        return "\n".join(lines) + "\n"


def run_comparison(cfgs, baseline=None, workers=1):
    """Run each config and compare against ``baseline`` (a label; default the first)."""
    labels = [c.label for c in cfgs]
    if len(set(labels)) != len(labels):
        raise ConfigError("comparison labels must be unique")
    summaries, records = {}, {}
    for c in cfgs:
        recs = run_trials(c, workers)
        records[c.label] = recs
        summaries[c.label] = summarize(c, recs)
    base = baseline or labels[0]
    if base not in summaries:
        raise ConfigError(f"baseline {base!r} not among the configs")
    return ComparisonReport(summaries, base, records)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_rows(cfg, records, timing=False):
    p = cfg.planner
    for r in records:
        yield [
            r.trial, r.step, cfg.label, _fmt(float(p.constraint.delta)), _fmt(float(p.constraint.epsilon)),
            p.depth, p.m_d, cfg.m_x, _fmt(bool(p.constraint.sc)), r.action, _fmt(float(r.reward)),
            _fmt(r.collision), f"{1000.0 * r.plan_time:.3f}" if timing else "", r.expanded_actions,
            _fmt(r.feasible), _fmt(r.declared_infeasible),
        ]


def write_csv(path_or_file, runs, timing=False):
    """runs: iterable of (TrialConfig, records). Timing is left blank unless asked."""
    own = isinstance(path_or_file, (str, os.PathLike))
    f = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for cfg, recs in runs:
            w.writerows(csv_rows(cfg, recs, timing))
    finally:
        if own:
            f.close()


def csv_text(runs, timing=False):
    buf = io.StringIO()
    write_csv(buf, runs, timing)
    return buf.getvalue()


def with_planner(cfg, **kw):
    """Copy of a TrialConfig with planner fields replaced."""
    label = kw.pop("label", None)
    pl = replace(cfg.planner, **kw)
    return replace(cfg, planner=pl, label=label or pl.kind)
