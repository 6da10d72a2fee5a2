"""Approximation-error bounds for the steady-restart kernel.

The single-arm chain is solved four ways: with the original belief-driven
restart, with the steady-state restart, and with two bounding kernels whose
active action lands in the best / worst fresh channel.  The bounding gains
sandwich the original gain and yield a computable relative-error bound

    D(W) = max(1 - g_app / g_max,  g_app / g_min - 1).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .channel import BeliefTable
from .config import DEFAULTS, Tolerances
from .errors import DegenerateGain
from .reward import RewardModel
from . import solvers
from .whittle import avg_reward_for_threshold


def g_app_closed_form(W: float, rm: RewardModel, w: np.ndarray, gamma,
                      active_at_steady: bool = True) -> float:
    """Average gain of a threshold policy in the steady-restart chain.

        g = [R1 + sum_k w_k sum_{i<=g_k} (R0(k,i) + W)] / sum_k (g_k+1) w_k

    When the steady entry is passive and reachable the chain absorbs there
    and the gain is the steady reward plus the subsidy.
    """
    gamma = np.asarray(gamma, dtype=np.int64)
    if not active_at_steady and (gamma >= rm.tau_bar).any():
        return rm.steady_reward + W
    return avg_reward_for_threshold(gamma, W, rm, np.asarray(w, dtype=float))


def best_cycle(rm: RewardModel, j: int, W: float) -> tuple[float, int]:
    """Best single-channel cycle average for channel j.

    Maximizes [R1 + sum_{i<=g}(R0(j,i) + W)] / (g + 1) over g in
    {0..tau_bar}; g = tau_bar + 1 encodes the absorbing all-passive option
    with gain steady_reward + W.
    """
    g_vals = np.arange(rm.tau_bar + 1)
    csum = np.concatenate([[0.0], np.cumsum(rm.table[j] + W)])
    gains = (rm.active + csum) / (g_vals + 1.0)
    best = int(np.argmax(gains))
    best_gain = float(gains[best])
    absorb = rm.steady_reward + W
    if absorb > best_gain:
        return absorb, rm.tau_bar + 1
    return best_gain, best


@dataclass(frozen=True)
class BoundGains:
    g_max: float
    g_min: float
    sigma_max: int
    sigma_min: int
    tau_max: int
    tau_min: int
    g_max_vi: float
    g_min_vi: float

    @property
    def closed_form_gap(self) -> float:
        return max(abs(self.g_max - self.g_max_vi), abs(self.g_min - self.g_min_vi))


def bound_mdps(table: BeliefTable, rm: RewardModel, W: float,
               tol: float | None = None, cfg: Tolerances = DEFAULTS) -> BoundGains:
    """Gains of the optimistic and pessimistic bounding chains.

    Each bounding model restarts every activation in a fixed channel (the
    arg-best / arg-worst of the bias at fresh states), so its gain reduces
    to the best cycle average of a single channel: the best channel's for
    the upper bound, the worst channel's for the lower bound.  Both are
    solved by relative VI with the decision-coupled backup and
    cross-checked against the closed forms.
    """
    per_channel = [best_cycle(rm, j, W) for j in range(rm.K)]
    gains = np.array([g for g, _ in per_channel])
    sigma_max = int(np.argmax(gains))
    sigma_min = int(np.argmin(gains))
    sol_max = solvers.vi_average(
        solvers.SingleArmMDP(table=table, rm=rm, W=W, kind=solvers.MAX_BOUND),
        tol=tol, cfg=cfg)
    sol_min = solvers.vi_average(
        solvers.SingleArmMDP(table=table, rm=rm, W=W, kind=solvers.MIN_BOUND),
        tol=tol, cfg=cfg)
    return BoundGains(g_max=float(gains[sigma_max]), g_min=float(gains[sigma_min]),
                      sigma_max=sigma_max, sigma_min=sigma_min,
                      tau_max=per_channel[sigma_max][1], tau_min=per_channel[sigma_min][1],
                      g_max_vi=sol_max.gain, g_min_vi=sol_min.gain)


@dataclass(frozen=True)
class BoundReport:
    W: float
    g_app: float
    g_orig: float
    g_max: float
    g_min: float
    D: float
    rel_err: float


def error_bound(table: BeliefTable, rm: RewardModel, W: float,
                tol: float | None = None, cfg: Tolerances = DEFAULTS) -> BoundReport:
    """Measured relative error of the steady-restart gain and its bound."""
    g_app = solvers.vi_average(
        solvers.SingleArmMDP(table=table, rm=rm, W=W, kind=solvers.APPROXIMATED),
        tol=tol, cfg=cfg).gain
    g_orig = solvers.vi_average(
        solvers.SingleArmMDP(table=table, rm=rm, W=W, kind=solvers.ORIGINAL),
        tol=tol, cfg=cfg).gain
    b = bound_mdps(table, rm, W, tol=tol, cfg=cfg)
    if b.g_min <= 0:
        raise DegenerateGain("lower bounding gain is non-positive")
    D = max(1.0 - g_app / b.g_max, g_app / b.g_min - 1.0)
    rel_err = abs(1.0 - g_app / g_orig)
    return BoundReport(W=float(W), g_app=g_app, g_orig=g_orig,
                       g_max=b.g_max, g_min=b.g_min, D=D, rel_err=rel_err)


def sweep(table: BeliefTable, rm: RewardModel, w_grid,
          tol: float | None = None, cfg: Tolerances = DEFAULTS) -> list[BoundReport]:
    return [error_bound(table, rm, float(W), tol=tol, cfg=cfg) for W in w_grid]


def sweep_to_csv(reports: list[BoundReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["W", "g_app", "g_orig", "g_max", "g_min", "D", "rel_err"])
    for r in reports:
        w.writerow([f"{x:.17g}" for x in
                    (r.W, r.g_app, r.g_orig, r.g_max, r.g_min, r.D, r.rel_err)])
    return buf.getvalue()
