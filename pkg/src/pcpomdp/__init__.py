"""Belief-space planning with probabilistic and chance constraints.

Sparse-sampling belief-tree planners (unconstrained, PCSS, CCSS-IS, FastCCSS)
over particle beliefs, with a receding-horizon simulator for 2-D beacon
navigation and target tracking.
"""

from .belief import ParticleBelief, pf_update, prob_safe, safe_projection
from .constraints import ConstraintSpec
from .errors import AllUnsafe, ConfigError, DegenerateBelief, IncompleteExpansion
from .kernels import BACKEND
from .models import ACTION_NAMES, ACTIONS, NoiseParams, Obstacle, Scenario
from .planners import PlannerConfig, PlanResult, plan
from .simulation import TrialConfig, builtin_scenarios, run_comparison, run_trial, run_trials

__version__ = "0.1.0"

__all__ = [
    "ACTIONS", "ACTION_NAMES", "AllUnsafe", "BACKEND", "ConfigError", "ConstraintSpec",
    "DegenerateBelief", "IncompleteExpansion", "NoiseParams", "Obstacle", "ParticleBelief",
    "PlanResult", "PlannerConfig", "Scenario", "TrialConfig", "builtin_scenarios", "pf_update",
    "plan", "prob_safe", "run_comparison", "run_trial", "run_trials", "safe_projection",
]
