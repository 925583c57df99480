"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, planner or trial configuration."""


class DegenerateBelief(RuntimeError):
    """All particle likelihoods underflowed during a belief update."""


class AllUnsafe(RuntimeError):
    """Every particle lies inside an obstacle, so the belief cannot be made safe."""


class IncompleteExpansion(ValueError):
    """An outer estimate was requested before all laces were expanded."""
