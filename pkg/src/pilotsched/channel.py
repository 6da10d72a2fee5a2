"""K-state Markov channel models and belief-state machinery.

A channel is a finite ergodic Markov chain over quality levels; per-state
throughput rates turn observed states into rewards.  When a user has not
been probed for tau slots since last observing state j, its channel-state
distribution is the belief vector e_j P^tau.  Beliefs are tabulated up to a
truncation age tau_bar, beyond which they are replaced by the stationary
vector (an absorbing entry under the passive action).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import DEFAULTS, Tolerances
from .errors import NonErgodic, TruncationWarning

DEFAULT_TAU_BAR = 64


def _validate_stochastic(P: np.ndarray, tol: float) -> None:
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"transition matrix must be square, got {P.shape}")
    if np.any(P < -tol) or np.any(P > 1 + tol):
        raise ValueError("transition probabilities outside [0, 1]")
    row_err = np.abs(P.sum(axis=1) - 1.0).max()
    if row_err > tol:
        raise ValueError(f"rows must sum to 1 (max error {row_err:.3e})")


def _is_ergodic(P: np.ndarray, eps: float) -> bool:
    """Strong connectivity of the positive-entry digraph plus aperiodicity."""
    K = P.shape[0]
    adj = P > eps

    def reachable(start, mat):
        seen = np.zeros(K, dtype=bool)
        seen[start] = True
        frontier = [start]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.nonzero(mat[u])[0]:
                    if not seen[v]:
                        seen[v] = True
                        nxt.append(v)
            frontier = nxt
        return seen

    if not reachable(0, adj).all() or not reachable(0, adj.T).all():
        return False

    # Aperiodicity: gcd over edges of (level[u] + 1 - level[v]), BFS levels.
    level = np.full(K, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u in range(K):
        for v in np.nonzero(adj[u])[0]:
            g = math.gcd(g, level[u] + 1 - level[v])
    return g == 1


def steady_state(P: np.ndarray, tol: Tolerances = DEFAULTS) -> np.ndarray:
    """Unique stationary distribution of a row-stochastic matrix.

    Solves the balance equations by a dense linear solve (one equation
    replaced by the normalization row) and cross-checks with power
    iteration.  Raises NonErgodic when the chain has no unique aperiodic
    stationary distribution.
    """
    P = np.asarray(P, dtype=float)
    _validate_stochastic(P, tol.row_sum)
    if not _is_ergodic(P, tol.positive_entry):
        raise NonErgodic("chain is reducible or periodic")
    K = P.shape[0]
    A = P.T - np.eye(K)
    A[-1, :] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)

    # Power-iteration cross-check guards against ill-conditioned solves.
    v = np.full(K, 1.0 / K)
    for _ in range(10_000):
        w = v @ P
        if np.abs(w - v).max() < 1e-15:
            v = w
            break
        v = w
    if np.abs(v - pi).max() > 1e-8:
        raise NonErgodic("stationary solve and power iteration disagree")
    residual = np.abs(pi @ P - pi).max()
    if residual > tol.stationary:
        raise NonErgodic(f"balance residual {residual:.3e} too large")
    return pi


@dataclass(frozen=True)
class ChannelModel:
    """Ergodic K-state channel: transition matrix, rates, stationary law."""

    K: int
    P: np.ndarray
    rates: np.ndarray
    steady: np.ndarray
    label: str = ""

    @classmethod
    def build(cls, P, rates, label: str = "", tol: Tolerances = DEFAULTS) -> "ChannelModel":
        P = np.array(P, dtype=float)
        rates = np.array(rates, dtype=float)
        _validate_stochastic(P, tol.row_sum)
        if rates.shape != (P.shape[0],):
            raise ValueError("rates must have one entry per channel state")
        if np.any(rates < 0):
            raise ValueError("rates must be nonnegative")
        pi = steady_state(P, tol)
        P.setflags(write=False)
        rates.setflags(write=False)
        pi.setflags(write=False)
        return cls(K=P.shape[0], P=P, rates=rates, steady=pi, label=label)

    def to_json(self) -> str:
        """Serialize with decimal-string entries for exact round-trips."""
        doc = {
            "K": self.K,
            "P": [f"{x:.17g}" for x in self.P.reshape(-1)],
            "rates": [f"{x:.17g}" for x in self.rates],
        }
        if self.label:
            doc["label"] = self.label
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ChannelModel":
        doc = json.loads(text)
        K = int(doc["K"])
        P = np.array([float(x) for x in doc["P"]], dtype=float).reshape(K, K)
        rates = np.array([float(x) for x in doc["rates"]], dtype=float)
        return cls.build(P, rates, label=doc.get("label", ""))


@dataclass(frozen=True)
class BeliefState:
    """Belief label (j, tau) with its distribution e_j P^tau.

    j is a 0-based channel index; tau >= 1 is the age in slots.  The shared
    stationary entry is represented by j = -1.
    """

    j: int
    tau: int
    vector: np.ndarray

    @property
    def is_steady(self) -> bool:
        return self.j < 0


class BeliefTable:
    """Tabulated beliefs (j, tau <= tau_bar) plus the absorbing steady entry.

    Flat state indexing used by every solver: s = j * tau_bar + (tau - 1)
    for j in [0, K), tau in [1, tau_bar]; the steady entry is the last
    index K * tau_bar.
    """

    def __init__(self, model: ChannelModel, tau_bar: int = DEFAULT_TAU_BAR,
                 tol: Tolerances = DEFAULTS, warn: bool = True):
        if tau_bar < 1:
            raise ValueError("tau_bar must be >= 1")
        self.model = model
        self.tau_bar = int(tau_bar)
        K = model.K
        self.n_states = K * self.tau_bar + 1
        self.steady_index = K * self.tau_bar

        vectors = np.empty((self.n_states, K))
        cur = model.P.copy()          # rows of P^tau
        for tau in range(1, self.tau_bar + 1):
            for j in range(K):
                vectors[j * self.tau_bar + (tau - 1)] = cur[j]
            if tau < self.tau_bar:
                cur = cur @ model.P
        vectors[self.steady_index] = model.steady
        self.vectors = vectors

        tail = vectors[[j * self.tau_bar + self.tau_bar - 1 for j in range(K)]]
        self.tail_gap = float(np.abs(tail - model.steady).max())
        if warn and self.tail_gap > tol.tail_closeness:
            warnings.warn(
                f"belief tail gap {self.tail_gap:.2e} exceeds "
                f"{tol.tail_closeness:.0e}; consider a larger tau_bar",
                TruncationWarning, stacklevel=2)

        # Passive action: age by one slot, absorb at the steady entry.
        nxt = np.empty(self.n_states, dtype=np.int64)
        for j in range(K):
            base = j * self.tau_bar
            for t in range(self.tau_bar - 1):
                nxt[base + t] = base + t + 1
            nxt[base + self.tau_bar - 1] = self.steady_index
        nxt[self.steady_index] = self.steady_index
        self.passive_next = nxt
        self.first_age = np.arange(K) * self.tau_bar   # flat index of (j, 1)

    def flat(self, j: int, tau: int) -> int:
        if j < 0:
            return self.steady_index
        if not (0 <= j < self.model.K and 1 <= tau <= self.tau_bar):
            raise IndexError(f"no tabulated belief ({j}, {tau})")
        return j * self.tau_bar + (tau - 1)

    def label(self, s: int) -> tuple[int, int]:
        """Inverse of flat(); steady entry reported as (-1, tau_bar + 1)."""
        if s == self.steady_index:
            return (-1, self.tau_bar + 1)
        return (s // self.tau_bar, s % self.tau_bar + 1)

    def state(self, j: int, tau: int) -> BeliefState:
        return BeliefState(j=j, tau=tau, vector=self.vectors[self.flat(j, tau)])

    @property
    def steady_entry(self) -> BeliefState:
        return BeliefState(j=-1, tau=self.tau_bar + 1,
                           vector=self.vectors[self.steady_index])


def belief_propagate(b: BeliefState, model: ChannelModel,
                     tau_bar: int = DEFAULT_TAU_BAR) -> BeliefState:
    """One passive slot: (j, tau) -> (j, tau + 1), absorbing at the tail."""
    if b.is_steady or b.tau >= tau_bar:
        return BeliefState(j=-1, tau=tau_bar + 1, vector=model.steady)
    return BeliefState(j=b.j, tau=b.tau + 1, vector=b.vector @ model.P)


@dataclass(frozen=True)
class A1Report:
    passed: bool
    doubly_stochastic: bool
    violation: tuple[int, int, int] | None = None   # (j, tau, tau2), 0-based j
    margins: np.ndarray | None = field(default=None, repr=False)


def check_A1(model_or_P, tau_bar: int = DEFAULT_TAU_BAR,
             tol: Tolerances = DEFAULTS) -> A1Report:
    """Verify that max_i p_ji^(tau) is non-increasing in tau for every j.

    Accepts a ChannelModel or a raw row-stochastic matrix (the trivially
    passing identity matrix, for instance, cannot form an ergodic model).
    Reports the first violating triple (j, tau, tau') in scan order and
    whether the matrix is doubly stochastic, which is sufficient to pass.
    """
    P = model_or_P.P if isinstance(model_or_P, ChannelModel) else np.asarray(model_or_P, dtype=float)
    _validate_stochastic(P, tol.row_sum)
    K = P.shape[0]
    doubly = bool(np.abs(P.sum(axis=0) - 1.0).max() <= tol.row_sum)

    maxima = np.empty((tau_bar, K))
    cur = P.copy()
    for t in range(tau_bar):
        maxima[t] = cur.max(axis=1)
        if t < tau_bar - 1:
            cur = cur @ P
    violation = None
    for j in range(K):
        for t1 in range(tau_bar):
            worse = np.nonzero(maxima[t1 + 1:, j] > maxima[t1, j] + tol.tie)[0]
            if worse.size:
                violation = (j, t1 + 1, t1 + 2 + int(worse[0]))
                break
        if violation:
            break
    return A1Report(passed=violation is None, doubly_stochastic=doubly,
                    violation=violation, margins=maxima)


def generate_doubly_stochastic(K: int, seed: int, n_perms: int | None = None,
                               uniform_weight: float = 0.1) -> np.ndarray:
    """Random doubly stochastic matrix, deterministic in the seed.

    Convex combination of random permutation matrices blended with the
    uniform matrix (itself an average of permutations), so the result is
    strictly positive and therefore ergodic.
    """
    if K < 2:
        raise ValueError("K must be >= 2")
    rng = np.random.default_rng(seed)
    m = n_perms if n_perms is not None else K + 2
    weights = rng.dirichlet(np.ones(m))
    P = np.zeros((K, K))
    for w in weights:
        perm = rng.permutation(K)
        P[np.arange(K), perm] += w
    P = (1.0 - uniform_weight) * P + uniform_weight / K
    return P
