"""Exact dynamic-programming baselines.

Single-arm solvers operate on the truncated belief chain of one user under
a passivity subsidy W: discounted and average-reward value iteration for
four active-transition kernels (original, steady-state approximation, and
the optimistic/pessimistic bounding models), plus the analytic value of a
fixed threshold policy.  The joint solver computes the exact multi-user
optimum for small N by value iteration over the product belief space.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .channel import BeliefTable, ChannelModel
from .config import DEFAULTS, Tolerances
from .errors import (BudgetExceeded, DegenerateBelief, NoConvergence,
                     NonThresholdPolicy)
from .reward import RewardModel

ORIGINAL = "original"
APPROXIMATED = "approximated"
MAX_BOUND = "max"
MIN_BOUND = "min"


@dataclass(frozen=True)
class SingleArmMDP:
    """One user's belief chain with a subsidy W for the passive action.

    The passive kernel is the deterministic age increment; the active
    kernel lands in a fresh belief (i, 1) with probability given by `kind`:
      original      -- the belief vector itself,
      approximated  -- the stationary distribution,
      max / min     -- decision-coupled best/worst restart channel.
    """

    table: BeliefTable
    rm: RewardModel
    W: float
    kind: str = APPROXIMATED

    def __post_init__(self):
        if self.kind not in (ORIGINAL, APPROXIMATED, MAX_BOUND, MIN_BOUND):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @property
    def n_states(self) -> int:
        return self.table.n_states

    def active_continuation(self, V: np.ndarray) -> np.ndarray:
        """E[V(next) | active] per state (scalar broadcast where possible)."""
        V1 = V[self.table.first_age]
        if self.kind == APPROXIMATED:
            return np.full(self.n_states, float(self.table.model.steady @ V1))
        if self.kind == MAX_BOUND:
            return np.full(self.n_states, float(V1.max()))
        if self.kind == MIN_BOUND:
            return np.full(self.n_states, float(V1.min()))
        return self.table.vectors @ V1   # original: row = belief vector


def _bellman(mdp: SingleArmMDP, V: np.ndarray, beta: float):
    """Return (passive action values, active action values)."""
    passive = mdp.rm.passive_flat + mdp.W + beta * V[mdp.table.passive_next]
    active = mdp.rm.active + beta * mdp.active_continuation(V)
    return passive, active


@dataclass
class DiscountedSolution:
    values: np.ndarray
    policy: np.ndarray      # boolean per flat state, True = active
    iterations: int
    beta: float
    tol: float


def vi_discounted(mdp: SingleArmMDP, beta: float, tol: float | None = None,
                  cfg: Tolerances = DEFAULTS) -> DiscountedSolution:
    """Sup-norm value iteration; reported values are within tol of the fixed point.

    Uses the classic successive-difference stopping rule at
    tol * (1 - beta) / (2 * beta).  Greedy ties go to the passive action.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    tol = cfg.vi_value if tol is None else tol
    stop = tol if beta == 0.0 else tol * (1.0 - beta) / (2.0 * beta)
    V = np.zeros(mdp.n_states)
    for it in range(cfg.max_iter_single):
        passive, active = _bellman(mdp, V, beta)
        Vn = np.maximum(passive, active)
        diff = np.abs(Vn - V).max()
        V = Vn
        if diff <= stop:
            passive, active = _bellman(mdp, V, beta)
            return DiscountedSolution(values=V, policy=active > passive + cfg.tie,
                                      iterations=it + 1, beta=beta, tol=tol)
    raise NoConvergence(f"discounted VI did not reach tol={tol} "
                        f"in {cfg.max_iter_single} iterations")


@dataclass
class AverageSolution:
    gain: float
    bias: np.ndarray
    policy: np.ndarray      # boolean per flat state, True = active
    iterations: int
    span: float


def vi_average(mdp: SingleArmMDP, tol: float | None = None,
               cfg: Tolerances = DEFAULTS, ref_state: int = 0) -> AverageSolution:
    """Relative value iteration with span-seminorm stopping.

    Deterministic activation cycles make some induced chains periodic, so
    the update is damped (aperiodicity transformation)
    V <- (1-k) V + k T(V), which leaves the gain and fixed point unchanged.
    The gain estimate is the span midpoint of T(V) - V at convergence.
    """
    tol = cfg.rvi_span if tol is None else tol
    k = cfg.rvi_damping
    V = np.zeros(mdp.n_states)
    span = np.inf
    for it in range(cfg.max_iter_single):
        passive, active = _bellman(mdp, V, 1.0)
        TV = np.maximum(passive, active)
        delta = TV - V
        span = float(delta.max() - delta.min())
        if span <= tol:
            gain = 0.5 * float(delta.max() + delta.min())
            return AverageSolution(gain=gain, bias=V - V[ref_state],
                                   policy=active > passive + cfg.tie,
                                   iterations=it + 1, span=span)
        V = (1.0 - k) * V + k * TV
        V -= V[ref_state]
    raise NoConvergence(f"relative VI span {span:.3e} above tol={tol} "
                        f"after {cfg.max_iter_single} sweeps")


@dataclass(frozen=True)
class ThresholdSummary:
    """Threshold read off a single-arm policy: passive for tau <= gamma[j]."""
    gamma: np.ndarray           # per-channel thresholds in {0..tau_bar}
    active_at_steady: bool


def extract_thresholds(policy: np.ndarray, table: BeliefTable) -> ThresholdSummary:
    """Validate threshold structure and read per-channel thresholds.

    Raises NonThresholdPolicy when some channel's active set of ages is
    not an upper range {gamma_j + 1, ..., tau_bar}.
    """
    K, tau_bar = table.model.K, table.tau_bar
    gamma = np.empty(K, dtype=np.int64)
    for j in range(K):
        acts = policy[j * tau_bar:(j + 1) * tau_bar]
        n_active = int(acts.sum())
        gamma[j] = tau_bar - n_active
        if n_active and not acts[gamma[j]:].all():
            raise NonThresholdPolicy(f"channel {j}: active ages are not an upper range")
    return ThresholdSummary(gamma=gamma, active_at_steady=bool(policy[table.steady_index]))


def closed_form_value(gamma, W: float, beta: float, rm: RewardModel,
                      model: ChannelModel) -> np.ndarray:
    """Analytic discounted value of a threshold policy at the fresh beliefs.

    Under threshold gamma in the steady-restart kernel, the value at (j, 1)
    is gamma_j discounted passive slots followed by activation and a
    restart-mixture continuation; eliminating the mixture yields all K
    fresh-state values:

        V(j,1) = c_j + beta^g_j (R1 + beta S),
        c_j    = sum_{i<=g_j} beta^{i-1} (R0(j,i) + W),
        S      = [sum_j p_j c_j + R1 sum_j p_j beta^{g_j}]
                 / (1 - sum_j p_j beta^{g_j + 1}).
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    gamma = np.asarray(gamma, dtype=np.int64)
    if gamma.min() < 0 or gamma.max() > rm.tau_bar:
        raise ValueError("thresholds must lie in [0, tau_bar]")
    ps = model.steady
    K = model.K
    c = np.empty(K)
    for j in range(K):
        ages = np.arange(gamma[j])
        c[j] = float((beta ** ages) @ (rm.table[j, :gamma[j]] + W))
    bg = beta ** gamma.astype(float)
    denom = 1.0 - float(ps @ (beta * bg))
    if abs(denom) < 1e-300:
        raise DegenerateBelief("restart-mixture denominator vanished")
    S = (float(ps @ c) + rm.active * float(ps @ bg)) / denom
    return c + bg * (rm.active + beta * S)


# ---------------------------------------------------------------------------
# Joint multi-user model
# ---------------------------------------------------------------------------

class JointMDP:
    """Exact N-user pilot-assignment MDP over the product belief space.

    State: one flat belief index per user; action: subset of users of size
    at most M (the empty subset is allowed).  Construction refuses joint
    models whose states x actions exceed the configured budget.
    """

    def __init__(self, users: list[tuple[BeliefTable, RewardModel]], M: int,
                 kind: str = ORIGINAL, cfg: Tolerances = DEFAULTS):
        if kind not in (ORIGINAL, APPROXIMATED):
            raise ValueError("joint kernels are original or approximated")
        if not 0 <= M <= len(users):
            raise ValueError("need 0 <= M <= N")
        self.users = users
        self.N = len(users)
        self.M = M
        self.kind = kind
        self.cfg = cfg
        self.shape = tuple(t.n_states for t, _ in users)
        self.n_states = int(np.prod(self.shape))
        # Idle first, then by subset size and lexicographic order, so greedy
        # argmax ties resolve toward the most-passive action.
        self.actions: list[tuple[int, ...]] = []
        for size in range(M + 1):
            self.actions.extend(itertools.combinations(range(self.N), size))
        if self.n_states * len(self.actions) > cfg.joint_budget:
            raise BudgetExceeded(
                f"{self.n_states} states x {len(self.actions)} actions "
                f"exceeds budget {cfg.joint_budget}")
        self._rewards = [self._reward_array(a) for a in self.actions]

    def _reward_array(self, action: tuple[int, ...]) -> np.ndarray:
        r = 0.0
        for n, (table, rm) in enumerate(self.users):
            if n in action:
                r = r + rm.active
            else:
                shape = [1] * self.N
                shape[n] = self.shape[n]
                r = r + rm.passive_flat.reshape(shape)
        return np.broadcast_to(np.asarray(r, dtype=float), self.shape).copy()

    def _apply_passive(self, V: np.ndarray, n: int) -> np.ndarray:
        return np.take(V, self.users[n][0].passive_next, axis=n)

    def _apply_active(self, V: np.ndarray, n: int) -> np.ndarray:
        table = self.users[n][0]
        fresh = np.take(V, table.first_age, axis=n)     # axis n now has size K
        if self.kind == APPROXIMATED:
            out = np.tensordot(fresh, table.model.steady, axes=(n, 0))
            out = np.expand_dims(out, n)
            reps = [1] * self.N
            reps[n] = self.shape[n]
            return np.tile(out, reps)
        out = np.tensordot(fresh, table.vectors, axes=(n, 1))
        return np.moveaxis(out, -1, n)

    def action_value(self, V: np.ndarray, a_idx: int) -> np.ndarray:
        """r_A + E[V(next) | A] for every joint state."""
        EV = V
        for n in range(self.N):
            if n in self.actions[a_idx]:
                EV = self._apply_active(EV, n)
            else:
                EV = self._apply_passive(EV, n)
        return self._rewards[a_idx] + EV


@dataclass
class JointSolution:
    gain: float
    policy: np.ndarray        # int action index per joint state (model shape)
    bias: np.ndarray
    iterations: int
    span: float


def _joint_rvi(jm: JointMDP, backup, tol: float, cfg: Tolerances) -> JointSolution:
    k = cfg.rvi_damping
    V = np.zeros(jm.shape)
    span = np.inf
    for it in range(cfg.max_sweeps_joint):
        TV = backup(V)
        delta = TV - V
        span = float(delta.max() - delta.min())
        if span <= tol:
            gain = 0.5 * float(delta.max() + delta.min())
            return JointSolution(gain=gain, policy=None, bias=V - V.flat[0],
                                 iterations=it + 1, span=span)
        V = (1.0 - k) * V + k * TV
        V -= V.flat[0]
    raise NoConvergence(f"joint RVI span {span:.3e} above tol={tol} "
                        f"after {cfg.max_sweeps_joint} sweeps")


def vi_joint_average(jm: JointMDP, tol: float = 1e-8,
                     cfg: Tolerances | None = None) -> JointSolution:
    """Optimal long-run average reward of the joint model, with policy map."""
    cfg = jm.cfg if cfg is None else cfg

    def backup(V):
        best = jm.action_value(V, 0)
        for a in range(1, len(jm.actions)):
            np.maximum(best, jm.action_value(V, a), out=best)
        return best

    sol = _joint_rvi(jm, backup, tol, cfg)
    # Greedy policy at the fixed point; first (most passive) argmax wins.
    stacked = np.stack([jm.action_value(sol.bias, a) for a in range(len(jm.actions))])
    sol.policy = np.argmax(stacked + 0.0, axis=0).astype(np.int32)
    return sol


def evaluate_joint_policy(jm: JointMDP, policy: np.ndarray, tol: float = 1e-8,
                          cfg: Tolerances | None = None) -> JointSolution:
    """Long-run average reward of a fixed deterministic policy map."""
    cfg = jm.cfg if cfg is None else cfg
    flat_policy = policy.reshape(-1)
    idx = np.arange(jm.n_states)

    def backup(V):
        stacked = np.stack([jm.action_value(V, a).reshape(-1)
                            for a in range(len(jm.actions))])
        return stacked[flat_policy, idx].reshape(jm.shape)

    sol = _joint_rvi(jm, backup, tol, cfg)
    sol.policy = policy
    return sol


def evaluate_joint_random(jm: JointMDP, tol: float = 1e-8,
                          cfg: Tolerances | None = None) -> JointSolution:
    """Average reward of the uniform single-pilot policy (M = 1 layouts)."""
    if jm.M != 1:
        raise ValueError("random-policy evaluation is defined for M = 1")
    cfg = jm.cfg if cfg is None else cfg
    single = [jm.actions.index((n,)) for n in range(jm.N)]

    def backup(V):
        acc = jm.action_value(V, single[0])
        for a in single[1:]:
            acc = acc + jm.action_value(V, a)
        return acc / jm.N

    return _joint_rvi(jm, backup, tol, cfg)


def greedy_score_policy(jm: JointMDP, scores: list[np.ndarray]) -> np.ndarray:
    """Deterministic M=1 policy: assign the pilot to the best-scoring user.

    scores[n] is a per-flat-state score vector for user n; ties go to the
    lowest user id.  Returns an action-index map over the joint state space.
    """
    if jm.M != 1:
        raise ValueError("score policies are built for M = 1")
    full = np.empty((jm.N,) + jm.shape)
    for n in range(jm.N):
        shape = [1] * jm.N
        shape[n] = jm.shape[n]
        full[n] = np.broadcast_to(scores[n].reshape(shape), jm.shape)
    chosen = np.argmax(full, axis=0)
    action_of_user = np.array([jm.actions.index((n,)) for n in range(jm.N)],
                              dtype=np.int32)
    return action_of_user[chosen]


def wip_joint_policy(jm: JointMDP, index_tables: list[np.ndarray]) -> np.ndarray:
    """Index policy map: highest per-user index value gets the pilot."""
    return greedy_score_policy(jm, index_tables)


def myopic_joint_policy(jm: JointMDP, mode: str = "gain") -> np.ndarray:
    """Myopic policy map: rank users by immediate active payoff.

    mode "gain" ranks by R1 - passive(current belief); mode "reward" ranks
    by R1 alone (state-independent).
    """
    scores = []
    for table, rm in jm.users:
        if mode == "gain":
            scores.append(rm.active - rm.passive_flat)
        elif mode == "reward":
            scores.append(np.full(table.n_states, rm.active))
        else:
            raise ValueError("mode must be 'gain' or 'reward'")
    return greedy_score_policy(jm, scores)


def policy_to_csv(policy: np.ndarray, table: BeliefTable) -> str:
    """Single-arm policy as CSV rows (j, tau, action); steady row last."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "tau", "action"])
    K, tau_bar = table.model.K, table.tau_bar
    for j in range(K):
        for t in range(tau_bar):
            w.writerow([j + 1, t + 1, int(policy[j * tau_bar + t])])
    w.writerow([0, 0, int(policy[table.steady_index])])
    return buf.getvalue()


def structure_map_csv(jm: JointMDP, policy: np.ndarray) -> str:
    """Two-user policy map as CSV rows (j1, tau1, j2, tau2, chosen_user).

    chosen_user is 1-based; 0 denotes the idle action.  Steady entries are
    reported with j = 0, tau = 0.
    """
    if jm.N != 2:
        raise ValueError("structure maps are drawn for two-user models")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j1", "tau1", "j2", "tau2", "chosen_user"])
    t1, t2 = jm.users[0][0], jm.users[1][0]

    def lbl(table, s):
        j, tau = table.label(s)
        return (0, 0) if j < 0 else (j + 1, tau)

    for s1 in range(jm.shape[0]):
        for s2 in range(jm.shape[1]):
            a = jm.actions[int(policy[s1, s2])]
            chosen = 0 if not a else a[0] + 1
            w.writerow([*lbl(t1, s1), *lbl(t2, s2), chosen])
    return buf.getvalue()
