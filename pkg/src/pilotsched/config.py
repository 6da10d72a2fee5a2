"""Module-level numeric tolerances.

Solvers read from DEFAULTS unless given explicit overrides, so experiment
scripts can tighten or relax everything in one place.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-12          # stochasticity of matrix rows
    stationary: float = 1e-10       # residual of the balance equations
    positive_entry: float = 1e-14   # threshold for "positive" in ergodicity graph
    tail_closeness: float = 1e-3    # warn when belief tail is farther from steady
    tie: float = 1e-12              # argmax tie detection in index construction
    vi_value: float = 1e-8          # discounted value-iteration accuracy target
    rvi_span: float = 1e-10         # span stopping rule for average-reward VI
    rvi_damping: float = 0.9        # aperiodicity damping factor in (0, 1)
    max_iter_single: int = 1_000_000
    max_sweeps_joint: int = 10_000
    joint_budget: int = 5_000_000   # max states x actions for joint models
    envelope_budget: int = 2_000_000  # max candidate thresholds per step


DEFAULTS = Tolerances()


def with_overrides(**kwargs) -> Tolerances:
    """Copy of DEFAULTS with selected fields replaced."""
    return replace(DEFAULTS, **kwargs)
