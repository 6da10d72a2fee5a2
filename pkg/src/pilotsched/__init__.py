"""Whittle-index pilot allocation over K-state Markov fading channels.

Library layout:

* channel  -- Markov channel models, belief propagation and tabulation
* reward   -- active/passive reward families and their monotonicity checks
* whittle  -- closed-form index construction, envelope oracle, indexability
* solvers  -- single-arm and joint value-iteration baselines
* bounds   -- approximation-error bounds for the steady-restart kernel
* fluid    -- two-class population dynamics, fixed point, spectrum
* sim      -- N-user Monte Carlo policy simulator
* cli      -- batch experiment runner (CSV + PNG emitter)
"""

__version__ = "0.1.0"

from .channel import (BeliefState, BeliefTable, ChannelModel, belief_propagate,
                      check_A1, generate_doubly_stochastic, steady_state)
from .config import DEFAULTS, Tolerances, with_overrides
from .errors import (A2Violation, BudgetExceeded, ConfigError, DegenerateBelief,
                     DegenerateGain, Infeasible, NoConvergence, NonErgodic,
                     NonThresholdPolicy, OptimalUnavailable, RegionEmpty,
                     SearchSpaceTooLarge, TieWarning, ToolkitError)
from .reward import (RewardModel, check_A2, constant_reward, max_belief_reward,
                     table_reward)
from .whittle import (OccupancyMeasure, ThresholdPolicy, WhittleIndexTable,
                      avg_reward_for_threshold, indexability_check, occupancy,
                      omega, whittle_closed_form, whittle_envelope_oracle)

__all__ = [name for name in dir() if not name.startswith("_")]
