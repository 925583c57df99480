"""Command-line front end: ``run``, ``compare``, ``scenarios`` and ``selftest``.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime failure.
"""

import argparse
import os
import sys

from .constraints import CUMULATIVE, MULTIPLICATIVE, OPERATORS, ConstraintSpec
from .errors import ConfigError
from .planners import CCSS_IS, KINDS, UNCONSTRAINED, PlannerConfig
from .scenario_file import read_scenario, write_scenario
from .simulation import (
    TrialConfig,
    builtin_scenarios,
    run_comparison,
    run_trials,
    scenario_by_name,
    write_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _experiment_flags(p):
    p.add_argument("--scenario", default="map1", help="built-in name (map1, map2) or a scenario JSON file")
    p.add_argument("--epsilon", type=float, default=0.0, help="outer-constraint tolerance")
    p.add_argument("--form", choices=(MULTIPLICATIVE, CUMULATIVE), default=MULTIPLICATIVE)
    p.add_argument("--operator", choices=OPERATORS, default=OPERATORS[0])
    p.add_argument("--depth", "-L", type=int, default=1, help="planning horizon L")
    p.add_argument("--md", type=int, default=100, help="observations sampled per action node")
    p.add_argument("--mx", type=int, default=150, help="particles per belief")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sc", action="store_true", help="scale the threshold with the remaining depth")
    p.add_argument("--out", help="CSV output path (default: stdout for run, none for compare)")
    p.add_argument("--timing", action="store_true", help="fill the plan_time_ms column")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-safe-belief", dest="make_belief_safe", action="store_false",
                   help="plan from the raw posterior instead of its safe projection")


def build_parser():
    p = _Parser(prog="pcpomdp", description="Belief-space planning under probabilistic constraints.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one planner over several trials, CSV out")
    _experiment_flags(r)
    r.add_argument("--planner", choices=KINDS, default="pcss")
    r.add_argument("--delta", type=float, default=0.8)

    c = sub.add_parser("compare", help="planner matrix with a comparison report")
    _experiment_flags(c)
    c.add_argument("--planners", nargs="+", choices=KINDS, default=list(KINDS))
    c.add_argument("--delta", type=float, nargs="+", default=[0.8])
    c.add_argument("--baseline", help="label to compare against (default: first ccss_is run)")
    c.add_argument("--report", help="also write the text report here")

    s = sub.add_parser("scenarios", help="write the built-in scenarios as JSON files")
    s.add_argument("--out", default=".", help="target directory")

    t = sub.add_parser("selftest", help="run the built-in oracle checks")
    t.add_argument("--quick", action="store_true", help="smaller random sweeps")
    return p


def _scenario(arg):
    if os.path.exists(arg):
        return read_scenario(arg)
    try:
        return scenario_by_name(arg)
    except ConfigError:
        raise ConfigError(f"{arg!r} is neither a scenario file nor a built-in scenario") from None


def _trial_config(a, scen, kind, delta, label=""):
    spec = ConstraintSpec(delta=delta, epsilon=a.epsilon, form=a.form, operator=a.operator, sc=a.sc)
    pl = PlannerConfig(kind=kind, depth=a.depth, m_d=a.md, constraint=spec)
    return TrialConfig(scen, pl, a.steps, a.trials, a.seed, a.mx, a.make_belief_safe, label)


def _aborted_at_start(records):
    return sorted({r.trial for r in records if r.aborted and r.step == 0})


def _write(out, runs, timing):
    if out:
        write_csv(out, runs, timing)
    else:
        write_csv(sys.stdout, runs, timing)


def _cmd_run(a):
    scen = _scenario(a.scenario)
    cfg = _trial_config(a, scen, a.planner, a.delta)
    if a.workers < 1:
        raise ConfigError("workers must be >= 1")
    recs = run_trials(cfg, a.workers)
    _write(a.out, [(cfg, recs)], a.timing)
    bad = _aborted_at_start(recs)
    if bad:
        print(f"error: trials {bad} aborted at the first step (no safe particle)", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_compare(a):
    scen = _scenario(a.scenario)
    if a.workers < 1:
        raise ConfigError("workers must be >= 1")
    cfgs = []
    for kind in a.planners:
        if kind == UNCONSTRAINED:
            cfgs.append(_trial_config(a, scen, kind, 0.0, label=kind))
            continue
        for d in a.delta:
            cfgs.append(_trial_config(a, scen, kind, d, label=f"{kind}@{d:g}"))
    base = a.baseline
    if base is None:
        base = next((c.label for c in cfgs if c.planner.kind == CCSS_IS), cfgs[0].label)
    labels = [c.label for c in cfgs]
    if base not in labels:
        raise ConfigError(f"baseline {base!r} not among {labels}")
    rep = run_comparison(cfgs, baseline=base, workers=a.workers)
    text = rep.to_text()
    sys.stdout.write(text)
    if a.report:
        with open(a.report, "w", encoding="utf-8") as f:
            f.write(text)
    if a.out:
        write_csv(a.out, [(c, rep.records[c.label]) for c in cfgs], a.timing)
    bad = sorted({t for recs in rep.records.values() for t in _aborted_at_start(recs)})
    if bad:
        print(f"error: trials {bad} aborted at the first step (no safe particle)", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_scenarios(a):
    os.makedirs(a.out, exist_ok=True)
    for s in builtin_scenarios():
        path = os.path.join(a.out, f"{s.name}.json")
        write_scenario(s, path)
        print(path)
    return EXIT_OK


def _cmd_selftest(a):
    from .selftest import run_all

    ok = run_all(quick=a.quick, out=sys.stdout)
    return EXIT_OK if ok else EXIT_RUNTIME


_COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "scenarios": _cmd_scenarios, "selftest": _cmd_selftest}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
