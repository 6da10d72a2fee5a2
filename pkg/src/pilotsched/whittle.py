"""Whittle index computation for the steady-restart approximation.

Two independent routes produce the same index table:

* a closed-form greedy construction that grows per-channel thresholds one
  age at a time, always extending the channel whose next passive reward is
  largest, and prices each extension explicitly; and
* an envelope oracle that at each step minimizes the reward-difference
  ratio over the whole box of larger threshold vectors, which is the
  literal indifference-point definition.

The oracle is exponential in K and kept as the cross-check; the closed
form is linear in K * tau_bar and is what every consumer uses.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channel import BeliefTable, ChannelModel
from .config import DEFAULTS, Tolerances
from .errors import SearchSpaceTooLarge, TieWarning
from .reward import RewardModel, check_A2
from .errors import A2Violation
from . import solvers


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-channel activation thresholds: passive at (j, tau) iff tau <= gamma[j]."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.int64)
        if g.ndim != 1 or (g < 0).any():
            raise ValueError("thresholds must be a vector of nonnegative integers")
        object.__setattr__(self, "gamma", g)

    def dominates(self, other: "ThresholdPolicy") -> bool:
        return bool(np.all(self.gamma >= other.gamma) and np.any(self.gamma > other.gamma))


def _gamma_of(policy) -> np.ndarray:
    if isinstance(policy, ThresholdPolicy):
        return policy.gamma
    return np.asarray(policy, dtype=np.int64)


def omega(model: ChannelModel) -> np.ndarray:
    """Observed-channel weights of the restart chain: the stationary law.

    Under any threshold policy in the steady-restart kernel the channel
    observed at activation is distributed as the stationary vector, so the
    balance equations collapse to it.
    """
    return model.steady


@dataclass(frozen=True)
class OccupancyMeasure:
    """Stationary occupancy of belief states under a threshold policy."""

    gamma: np.ndarray
    omega: np.ndarray
    denom: float                 # expected cycle length sum_k (gamma_k + 1) w_k
    per_channel: np.ndarray      # alpha value shared by ages 1..gamma_j + 1

    def value(self, j: int, r: int) -> float:
        if 1 <= r <= self.gamma[j] + 1:
            return float(self.per_channel[j])
        return 0.0

    @property
    def total(self) -> float:
        return float(((self.gamma + 1) * self.per_channel).sum())

    @property
    def passive_mass(self) -> float:
        return float((self.gamma * self.per_channel).sum())


def occupancy(policy, w: np.ndarray) -> OccupancyMeasure:
    """alpha(j, r) = w_j / sum_k (gamma_k + 1) w_k for r <= gamma_j + 1."""
    gamma = _gamma_of(policy)
    w = np.asarray(w, dtype=float)
    denom = float((gamma + 1) @ w)
    return OccupancyMeasure(gamma=gamma, omega=w, denom=denom, per_channel=w / denom)


def _padded_rewards(rm: RewardModel, width: int) -> np.ndarray:
    """Passive table padded past tau_bar with the steady reward."""
    if width <= rm.tau_bar:
        return rm.table[:, :width]
    pad = np.full((rm.K, width - rm.tau_bar), rm.steady_reward)
    return np.hstack([rm.table, pad])


def avg_reward_for_threshold(policy, W: float, rm: RewardModel,
                             w: np.ndarray) -> float:
    """Average reward g(W) of a threshold policy in the restart chain.

    Passive slots collect reward + subsidy, the activation slot collects
    the active reward; the result is affine and increasing in W with slope
    equal to the passive occupancy mass.  Thresholds may exceed tau_bar,
    in which case tail ages earn the steady reward.
    """
    gamma = _gamma_of(policy)
    w = np.asarray(w, dtype=float)
    R0 = _padded_rewards(rm, int(gamma.max()) if gamma.size else 0)
    denom = float((gamma + 1) @ w)
    passive_total = sum(float(R0[j, :gamma[j]].sum()) * w[j] for j in range(len(gamma)))
    return (passive_total + rm.active * float(w.sum()) + W * float(gamma @ w)) / denom


@dataclass
class WhittleIndexTable:
    """Index values over the truncated belief space plus the steady entry.

    `construction` records each greedy step as (step, channel, age, value);
    `breakpoints` is the strictly increasing sequence of distinct step
    values (equal-value runs collapse when rewards tie).
    """

    values: np.ndarray            # (K, tau_bar)
    steady_value: float
    breakpoints: np.ndarray
    construction: list[tuple[int, int, int, float]]
    had_ties: bool
    omega: np.ndarray
    r1: float

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def tau_bar(self) -> int:
        return self.values.shape[1]

    def value(self, j: int, tau: int) -> float:
        if j < 0:
            return self.steady_value
        return float(self.values[j, tau - 1])

    @property
    def values_flat(self) -> np.ndarray:
        flat = np.empty(self.K * self.tau_bar + 1)
        flat[:-1] = self.values.reshape(-1)
        flat[-1] = self.steady_value
        return flat

    def thresholds_at(self, W: float) -> tuple[np.ndarray, bool]:
        """Optimal thresholds for subsidy W: passive where the index < W.

        Returns (gamma, active_at_steady).  At W equal to an index value
        the passive tie-break applies (<= counts as passive).
        """
        gamma = (self.values <= W).sum(axis=1).astype(np.int64)
        return gamma, bool(self.steady_value > W)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "tau", "windex"])
        for j in range(self.K):
            for t in range(self.tau_bar):
                w.writerow([j + 1, t + 1, f"{self.values[j, t]:.17g}"])
        w.writerow([0, 0, f"{self.steady_value:.17g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "K": self.K,
            "tau_bar": self.tau_bar,
            "r1": f"{self.r1:.17g}",
            "omega": [f"{x:.17g}" for x in self.omega],
            "steady_value": f"{self.steady_value:.17g}",
            "breakpoints": [f"{x:.17g}" for x in self.breakpoints],
            "had_ties": self.had_ties,
            "construction": [
                {"step": s, "j": j + 1, "tau": t, "value": f"{v:.17g}"}
                for (s, j, t, v) in self.construction
            ],
        }
        return json.dumps(doc, indent=2)


def _distinct_increasing(seq: np.ndarray, tol: float) -> np.ndarray:
    out = []
    for v in seq:
        if not out or v > out[-1] + tol:
            out.append(float(v))
    return np.array(out)


def whittle_closed_form(rm: RewardModel, w: np.ndarray,
                        tau_bar: int | None = None,
                        cfg: Tolerances = DEFAULTS) -> WhittleIndexTable:
    """Greedy one-age-at-a-time index construction.

    Step i extends the channel u with the largest next passive reward and
    prices the new state at

        W_i = R1 + sum_k sum_{r<=g_k} R0(k,r) w_k
                 - R0(u, g_u + 1) * sum_k (g_k + 1) w_k,

    where g is the threshold vector before the step.  The steady entry is
    priced by the same formula once every tabulated age is assigned.
    Argmax ties are broken toward the smallest channel label and flagged.
    """
    report = check_A2(rm, cfg)
    if not report.passed:
        raise A2Violation(f"reward table violates monotonicity at {report.violation}")
    w = np.asarray(w, dtype=float)
    if abs(w.sum() - 1.0) > 1e-9 or (w <= 0).any():
        raise ValueError("omega must be a strictly positive probability vector")
    K = rm.K
    tau_bar = rm.tau_bar if tau_bar is None else int(tau_bar)
    if tau_bar > rm.tau_bar:
        raise ValueError("tau_bar exceeds the reward table")
    R0 = rm.table

    gamma = np.zeros(K, dtype=np.int64)
    values = np.full((K, tau_bar), np.nan)
    construction: list[tuple[int, int, int, float]] = []
    seq = []
    cum = 0.0          # sum_k sum_{r<=gamma_k} R0(k, r) w_k
    denom = 1.0        # sum_k (gamma_k + 1) w_k
    had_ties = False

    for step in range(K * tau_bar):
        nxt = np.array([R0[j, gamma[j]] if gamma[j] < tau_bar else -np.inf
                        for j in range(K)])
        best = nxt.max()
        tied = np.nonzero(nxt >= best - cfg.tie)[0]
        if len(tied) > 1:
            had_ties = True
        u = int(tied[0])
        w_i = rm.active + cum - R0[u, gamma[u]] * denom
        values[u, gamma[u]] = w_i
        construction.append((step, u, int(gamma[u]) + 1, w_i))
        seq.append(w_i)
        cum += R0[u, gamma[u]] * w[u]
        denom += w[u]
        gamma[u] += 1

    if had_ties:
        warnings.warn("argmax ties during index construction; broken by "
                      "smallest channel label", TieWarning, stacklevel=2)
    steady_value = rm.active + cum - rm.steady_reward * denom
    seq.append(steady_value)
    return WhittleIndexTable(values=values, steady_value=steady_value,
                             breakpoints=_distinct_increasing(np.array(seq), cfg.tie),
                             construction=construction, had_ties=had_ties,
                             omega=w, r1=rm.active)


def whittle_envelope_oracle(rm: RewardModel, w: np.ndarray,
                            tau_bar: int | None = None,
                            gamma_max: int | None = None,
                            cfg: Tolerances = DEFAULTS) -> WhittleIndexTable:
    """Literal indifference-point construction over full threshold boxes.

    At each step the candidate set is every threshold vector strictly above
    the current one (componentwise, up to gamma_max); the step value is the
    minimum reward-difference ratio, the next iterate the largest
    minimizer.  gamma_max defaults to tau_bar + 1 so the steady entry is
    priced too (ages past tau_bar earn the steady reward).
    """
    w = np.asarray(w, dtype=float)
    K = rm.K
    tau_bar = rm.tau_bar if tau_bar is None else int(tau_bar)
    gamma_max = tau_bar + 1 if gamma_max is None else int(gamma_max)
    if gamma_max < tau_bar:
        raise ValueError("gamma_max must be at least tau_bar")
    if (gamma_max + 1) ** K > cfg.envelope_budget:
        raise SearchSpaceTooLarge(f"(gamma_max+1)^K = {(gamma_max + 1) ** K} "
                                  f"exceeds budget {cfg.envelope_budget}")
    R0 = _padded_rewards(rm, gamma_max)
    # rcum[j, g] = sum of the first g passive rewards of channel j
    rcum = np.zeros((K, gamma_max + 1))
    rcum[:, 1:] = np.cumsum(R0, axis=1)

    def stats(gams: np.ndarray):
        """Expected reward and passive mass for rows of threshold vectors."""
        denom = (gams + 1.0) @ w
        reward = (np.take_along_axis(rcum, gams.T, axis=1).T @ w + rm.active) / denom
        passive = (gams @ w) / denom
        return reward, passive

    gamma = np.zeros(K, dtype=np.int64)
    values = np.full((K, tau_bar), np.nan)
    steady_value = np.nan
    construction: list[tuple[int, int, int, float]] = []
    seq = []
    step = 0
    while (gamma < gamma_max).any():
        er_prev, pm_prev = stats(gamma.reshape(1, -1))
        ranges = [np.arange(gamma[j], gamma_max + 1) for j in range(K)]
        grid = np.meshgrid(*ranges, indexing="ij")
        cands = np.stack([g.reshape(-1) for g in grid], axis=1)
        cands = cands[(cands > gamma).any(axis=1)]
        er, pm = stats(cands)
        ratio = (er_prev[0] - er) / (pm - pm_prev[0])
        w_i = float(ratio.min())
        near = np.nonzero(ratio <= w_i + cfg.tie)[0]
        # Largest minimizer: maximize the total threshold, then lexicographic.
        sums = cands[near].sum(axis=1)
        near = near[sums == sums.max()]
        order = np.lexsort(cands[near].T[::-1])
        new_gamma = cands[near[order[-1]]]
        for j in range(K):
            for tau in range(gamma[j] + 1, new_gamma[j] + 1):
                if tau <= tau_bar:
                    values[j, tau - 1] = w_i
                else:
                    steady_value = w_i
        construction.append((step, -1, -1, w_i))
        seq.append(w_i)
        gamma = new_gamma
        step += 1
    return WhittleIndexTable(values=values, steady_value=float(steady_value),
                             breakpoints=_distinct_increasing(np.array(seq), cfg.tie),
                             construction=construction, had_ties=False,
                             omega=w, r1=rm.active)


@dataclass
class IndexabilityReport:
    passed: bool
    w_grid: np.ndarray
    gammas: np.ndarray            # (len(grid), K) thresholds
    steady_passive: np.ndarray    # boolean: passive at the steady entry
    passive_set_sizes: np.ndarray
    violation: tuple[float, float] | None = None


def indexability_check(table: BeliefTable, rm: RewardModel, w_grid,
                       tol: float | None = None,
                       cfg: Tolerances = DEFAULTS) -> IndexabilityReport:
    """Monotone growth of the passive set along an increasing subsidy grid.

    For each W the average-reward solver runs on the steady-restart kernel;
    the greedy policy must be of threshold type (anything else raises
    NonThresholdPolicy) and the thresholds must be componentwise
    non-decreasing in W.
    """
    w_grid = np.asarray(w_grid, dtype=float)
    if np.any(np.diff(w_grid) <= 0):
        raise ValueError("subsidy grid must be strictly increasing")
    K = table.model.K
    gammas = np.empty((len(w_grid), K), dtype=np.int64)
    steady_passive = np.empty(len(w_grid), dtype=bool)
    sizes = np.empty(len(w_grid), dtype=np.int64)
    for i, W in enumerate(w_grid):
        mdp = solvers.SingleArmMDP(table=table, rm=rm, W=float(W),
                                   kind=solvers.APPROXIMATED)
        sol = solvers.vi_average(mdp, tol=tol, cfg=cfg)
        summary = solvers.extract_thresholds(sol.policy, table)
        gammas[i] = summary.gamma
        steady_passive[i] = not summary.active_at_steady
        sizes[i] = summary.gamma.sum() + int(steady_passive[i])
    violation = None
    for i in range(len(w_grid) - 1):
        if (gammas[i + 1] < gammas[i]).any() or (steady_passive[i] and not steady_passive[i + 1]):
            violation = (float(w_grid[i]), float(w_grid[i + 1]))
            break
    return IndexabilityReport(passed=violation is None, w_grid=w_grid,
                              gammas=gammas, steady_passive=steady_passive,
                              passive_set_sizes=sizes, violation=violation)


def envelope_lines(windex: WhittleIndexTable, rm: RewardModel):
    """Affine pieces g(W) = a + b W traced by the construction sequence.

    Returns a list of (gamma, intercept, slope) starting from the all-zero
    threshold; consecutive pieces intersect at the construction values.
    """
    w = windex.omega
    lines = []
    gamma = np.zeros(windex.K, dtype=np.int64)
    seen = {tuple(gamma)}
    lines.append(_line_for(gamma, rm, w))
    for (_, j, tau, _) in windex.construction:
        gamma = gamma.copy()
        gamma[j] = tau
        if tuple(gamma) not in seen:
            seen.add(tuple(gamma))
            lines.append(_line_for(gamma, rm, w))
    return lines


def _line_for(gamma: np.ndarray, rm: RewardModel, w: np.ndarray):
    occ = occupancy(gamma, w)
    intercept = avg_reward_for_threshold(gamma, 0.0, rm, w)
    return gamma.copy(), intercept, occ.passive_mass
