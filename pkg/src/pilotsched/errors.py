"""Exception and warning types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all pilotsched errors."""


class NonErgodic(ToolkitError):
    """Transition matrix has no unique stationary distribution."""


class A2Violation(ToolkitError):
    """Passive reward table is not monotone under the active-reward cap."""


class SearchSpaceTooLarge(ToolkitError):
    """Envelope search box exceeds the configured budget."""


class NonThresholdPolicy(ToolkitError):
    """A solver returned a policy that is not of threshold type."""


class NoConvergence(ToolkitError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class BudgetExceeded(ToolkitError):
    """Joint model construction would exceed the state-action budget."""


class DegenerateBelief(ToolkitError):
    """Closed-form value denominator vanished."""


class DegenerateGain(ToolkitError):
    """Error bound undefined because the lower gain is non-positive."""


class RegionEmpty(ToolkitError):
    """Linear regime of the population dynamics degenerates to a point."""


class Infeasible(ToolkitError):
    """No subsidy/randomization pair meets the activation target."""


class OptimalUnavailable(ToolkitError):
    """Exact joint solution was requested but is out of budget."""


class ConfigError(ToolkitError):
    """Bad experiment configuration (unknown keys, missing fields)."""


class TieWarning(UserWarning):
    """Argmax tie during the index construction; broken by smallest label."""


class TruncationWarning(UserWarning):
    """Belief table tail is not close to the stationary vector."""
