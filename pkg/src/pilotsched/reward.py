"""Reward models for probed (active) and unprobed (passive) users.

The active reward is the average per-slot throughput when CSI is acquired;
passive rewards depend on the belief only.  Every model must satisfy the
monotonicity contract: active >= passive, and passive non-increasing in the
belief age for each observed channel.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .channel import BeliefTable
from .config import DEFAULTS, Tolerances
from .errors import A2Violation

MAX_BELIEF = "max-belief-scaled"
TABLE_DRIVEN = "table-driven"


@dataclass(frozen=True)
class RewardModel:
    """Active reward plus a precomputed passive table over (j, tau).

    table[j, t] is the passive reward at belief (j, tau = t + 1);
    steady_reward is the passive reward at the absorbing entry.  Solvers
    index the flat vector millions of times, so it is laid out to match
    BeliefTable's flat state order.
    """

    active: float               # R1
    table: np.ndarray           # (K, tau_bar)
    steady_reward: float
    kind: str

    @property
    def K(self) -> int:
        return self.table.shape[0]

    @property
    def tau_bar(self) -> int:
        return self.table.shape[1]

    def passive(self, j: int, tau: int) -> float:
        if j < 0:
            return self.steady_reward
        return float(self.table[j, tau - 1])

    @property
    def passive_flat(self) -> np.ndarray:
        flat = np.empty(self.K * self.tau_bar + 1)
        flat[:-1] = self.table.reshape(-1)
        flat[-1] = self.steady_reward
        return flat

    def scaled(self, c: float) -> "RewardModel":
        return RewardModel(active=c * self.active, table=c * self.table,
                           steady_reward=c * self.steady_reward, kind=self.kind)

    def to_csv(self) -> str:
        """Columns (j, tau, reward), 1-based channel labels; steady as j=0."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "tau", "reward"])
        for j in range(self.K):
            for t in range(self.tau_bar):
                w.writerow([j + 1, t + 1, f"{self.table[j, t]:.17g}"])
        w.writerow([0, 0, f"{self.steady_reward:.17g}"])
        return buf.getvalue()


@dataclass(frozen=True)
class A2Report:
    passed: bool
    violation: tuple[int, int] | None = None   # (j, tau) of first failure, 0-based j


def check_A2(rm: RewardModel, tol: Tolerances = DEFAULTS) -> A2Report:
    """Exhaustive monotonicity scan of the passive table.

    Requires active >= table[j, 1] >= table[j, 2] >= ... >= steady_reward
    for every j.  Reports the first (j, tau) where the next age pays more.
    """
    for j in range(rm.K):
        if rm.table[j, 0] > rm.active + tol.tie:
            return A2Report(passed=False, violation=(j, 0))
        for t in range(rm.tau_bar - 1):
            if rm.table[j, t + 1] > rm.table[j, t] + tol.tie:
                return A2Report(passed=False, violation=(j, t + 1))
        if rm.steady_reward > rm.table[j, rm.tau_bar - 1] + tol.tie:
            return A2Report(passed=False, violation=(j, rm.tau_bar))
    return A2Report(passed=True)


def max_belief_reward(table: BeliefTable, tol: Tolerances = DEFAULTS) -> RewardModel:
    """Reward family of the worked numerical examples.

    R1 is the stationary average rate; a passive user earns R1 scaled by
    the largest entry of its belief vector (the confidence of the most
    likely channel state).  Rejects models whose belief maxima are not
    monotone, since the passive table then violates the contract.
    """
    model = table.model
    r1 = float(model.steady @ model.rates)
    K, tau_bar = model.K, table.tau_bar
    tbl = np.empty((K, tau_bar))
    for j in range(K):
        for t in range(tau_bar):
            tbl[j, t] = table.vectors[j * tau_bar + t].max() * r1
    steady_r = float(model.steady.max() * r1)
    rm = RewardModel(active=r1, table=tbl, steady_reward=steady_r, kind=MAX_BELIEF)
    report = check_A2(rm, tol)
    if not report.passed:
        raise A2Violation(f"max-belief table violates monotonicity at {report.violation}")
    return rm


def table_reward(active: float, table, steady_reward: float,
                 tol: Tolerances = DEFAULTS) -> RewardModel:
    """Table-driven model from explicit values; monotonicity enforced at load."""
    tbl = np.array(table, dtype=float)
    if tbl.ndim != 2:
        raise ValueError("passive table must be 2-D (channels x ages)")
    if np.any(tbl < 0) or active < 0 or steady_reward < 0:
        raise ValueError("rewards must be nonnegative")
    rm = RewardModel(active=float(active), table=tbl,
                     steady_reward=float(steady_reward), kind=TABLE_DRIVEN)
    report = check_A2(rm, tol)
    if not report.passed:
        raise A2Violation(f"reward table violates monotonicity at {report.violation}")
    return rm


def constant_reward(active: float, passive: float, K: int, tau_bar: int) -> RewardModel:
    """Constant passive reward (degenerate but valid when passive <= active)."""
    return table_reward(active, np.full((K, tau_bar), float(passive)), float(passive))
