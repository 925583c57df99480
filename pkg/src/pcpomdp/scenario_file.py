"""Scenario files: JSON documents whose keys mirror the Scenario fields.

Schema (all coordinates in world units)::

    {
      "kind": "navigation" | "tracking",
      "name": str,
      "beacons": [[x, y], ...],
      "obstacles": [{"center": [x, y], "radius": r, "shape": "disk" | "square"}, ...],
      "goal": [x, y] | null,
      "target_script": ["W", "N", ...],
      "noise": {"sigma_w_sq": .., "sigma_v_sq": .., "r_min": .., "gamma": ..},
      "prior_mean": [...], "prior_cov": [[...], ...], "ground_truth_init": [...]
    }

Keys are written sorted with fixed indentation so that write -> read -> write
reproduces the file byte for byte.
"""

import json
from dataclasses import asdict

from .errors import ConfigError
from .models import NoiseParams, Obstacle, Scenario

FIELDS = (
    "beacons", "goal", "ground_truth_init", "kind", "name", "noise", "obstacles",
    "prior_cov", "prior_mean", "target_script",
)


def scenario_to_dict(s):
    return {
        "kind": s.kind,
        "name": s.name,
        "beacons": [list(b) for b in s.beacons],
        "obstacles": [{"center": list(o.center), "radius": float(o.radius), "shape": o.shape} for o in s.obstacles],
        "goal": None if s.goal is None else list(s.goal),
        "target_script": list(s.target_script),
        "noise": asdict(s.noise),
        "prior_mean": list(s.prior_mean),
        "prior_cov": [list(r) for r in s.prior_cov],
        "ground_truth_init": list(s.ground_truth_init),
    }


def scenario_from_dict(d):
    unknown = set(d) - set(FIELDS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    missing = {"kind", "beacons", "prior_mean", "prior_cov", "ground_truth_init"} - set(d)
    if missing:
        raise ConfigError(f"missing scenario keys: {sorted(missing)}")
    try:
        return Scenario(
            kind=d["kind"],
            name=d.get("name", ""),
            beacons=d["beacons"],
            obstacles=tuple(Obstacle(**o) for o in d.get("obstacles", [])),
            goal=d.get("goal"),
            target_script=tuple(d.get("target_script", ())),
            noise=NoiseParams(**d.get("noise", {})),
            prior_mean=d["prior_mean"],
            prior_cov=d["prior_cov"],
            ground_truth_init=d["ground_truth_init"],
        )
    except TypeError as e:
        raise ConfigError(f"malformed scenario: {e}") from None


def dumps(s):
    return json.dumps(scenario_to_dict(s), sort_keys=True, indent=2) + "\n"


def loads(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"scenario file is not valid JSON: {e}") from None
    if not isinstance(d, dict):
        raise ConfigError("scenario file must hold an object")
    return scenario_from_dict(d)


def write_scenario(s, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(s))


def read_scenario(path):
    with open(path, encoding="utf-8") as f:
        return loads(f.read())
