"""Slot-level Monte Carlo simulator for N users sharing M pilots.

True channels evolve independently of the scheduler; beliefs are tracked
as (observed channel, age) labels.  Each slot a policy picks at most M
users; picked users reveal their current channel, earn its rate and reset
their belief, everyone else earns the belief-dependent passive reward and
ages.  Replications use independent seeded streams, and the channel-noise
stream is shared across policies (common random numbers), so results are
deterministic in (seed, replication) regardless of scheduling order.
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass, field

import numpy as np

from .channel import BeliefTable, ChannelModel
from .errors import OptimalUnavailable
from .reward import RewardModel


@dataclass(frozen=True)
class UserClass:
    """Shared channel/reward/lookup tables for a group of identical users."""

    model: ChannelModel
    table: BeliefTable
    rm: RewardModel
    windex_flat: np.ndarray | None = None

    @property
    def n_states(self) -> int:
        return self.table.n_states


@dataclass
class SimConfig:
    classes: list[UserClass]
    class_of: np.ndarray        # per-user class id
    M: int
    T: int
    warmup: int | None = None   # default 10% of T
    seed: int = 0
    replications: int = 8
    kernel: str = "original"    # "original" observes the true channel;
                                # "approximated" observes a stationary draw

    def __post_init__(self):
        self.class_of = np.asarray(self.class_of, dtype=np.int64)
        self.N = len(self.class_of)
        if not 0 <= self.M <= self.N:
            raise ValueError("need 0 <= M <= N")
        if self.kernel not in ("original", "approximated"):
            raise ValueError("kernel must be 'original' or 'approximated'")
        if self.warmup is None:
            self.warmup = self.T // 10
        if self.T <= self.warmup:
            raise ValueError("horizon must exceed the warmup")

    def per_user(self, per_class_values: list[np.ndarray]) -> np.ndarray:
        """Stack per-class lookup vectors into a (N, S) matrix."""
        return np.stack([per_class_values[c] for c in self.class_of])


class Engine:
    """Vectorized per-slot state for one replication."""

    def __init__(self, cfg: SimConfig, chan_rng: np.random.Generator):
        self.cfg = cfg
        self.N = cfg.N
        self.chan_rng = chan_rng
        n_cls = len(cfg.classes)
        self.cum_P = [np.cumsum(c.model.P, axis=1) for c in cfg.classes]
        self.rates = cfg.per_user([c.model.rates for c in cfg.classes])
        self.passive_reward = cfg.per_user([c.rm.passive_flat for c in cfg.classes])
        self.passive_next = cfg.per_user([c.table.passive_next for c in cfg.classes])
        self.first_age = cfg.per_user([c.table.first_age for c in cfg.classes])
        self.r1 = np.array([cfg.classes[c].rm.active for c in cfg.class_of])
        self.cls_members = [np.nonzero(cfg.class_of == c)[0] for c in range(n_cls)]
        # True channels start stationary; beliefs start at the absorbing entry.
        self.true_state = np.empty(self.N, dtype=np.int64)
        for c, members in enumerate(self.cls_members):
            steady = cfg.classes[c].model.steady
            self.true_state[members] = chan_rng.choice(
                len(steady), size=len(members), p=steady)
        self.belief = np.array([cfg.classes[c].table.steady_index
                                for c in cfg.class_of], dtype=np.int64)
        self.ids = np.arange(self.N)

    def evolve_channels(self):
        u = self.chan_rng.random(self.N)
        for c, members in enumerate(self.cls_members):
            rows = self.cum_P[c][self.true_state[members]]
            self.true_state[members] = (rows < u[members, None]).sum(axis=1)

    def observe(self) -> np.ndarray:
        """Channel revealed to probed users this slot.

        The original kernel reveals the true channel; the steady-restart
        kernel draws an independent stationary sample (one uniform per user
        per slot either way, so streams never depend on who was probed).
        """
        if self.cfg.kernel == "original":
            return self.true_state
        u = self.chan_rng.random(self.N)
        observed = np.empty(self.N, dtype=np.int64)
        for c, members in enumerate(self.cls_members):
            cum = np.cumsum(self.cfg.classes[c].model.steady)
            observed[members] = np.searchsorted(cum, u[members], side="right")
        return np.minimum(observed, self.rates.shape[1] - 1)

    def apply(self, selected: np.ndarray) -> float:
        """Collect the slot reward and update beliefs; returns total reward."""
        assert selected.sum() <= self.cfg.M, "pilot budget violated"
        observed_state = self.observe()
        reward = np.where(
            selected,
            self.rates[self.ids, observed_state],
            self.passive_reward[self.ids, self.belief]).sum()
        new_belief = self.passive_next[self.ids, self.belief]
        observed = self.first_age[self.ids, observed_state]
        self.belief = np.where(selected, observed, new_belief)
        self.evolve_channels()
        return float(reward)

    def check_beliefs(self):
        """Spot-check tracked labels against a fresh matrix-power belief."""
        n = int(self.ids[0])
        c = self.cfg.class_of[n]
        table = self.cfg.classes[c].table
        j, tau = table.label(int(self.belief[n]))
        if j >= 0:
            fresh = np.linalg.matrix_power(self.cfg.classes[c].model.P, tau)[j]
            assert np.abs(table.vectors[self.belief[n]] - fresh).max() < 1e-10


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class Policy:
    name = "policy"
    feasible = True     # respects the per-slot pilot cap

    def reset(self, rng: np.random.Generator):
        self.rng = rng

    def select(self, eng: Engine, t: int) -> np.ndarray:
        raise NotImplementedError


def _top_m(scores: np.ndarray, ids: np.ndarray, m: int) -> np.ndarray:
    """Boolean mask of the m best scores; ties go to the lowest user id."""
    mask = np.zeros(len(scores), dtype=bool)
    if m > 0:
        order = np.lexsort((ids, -scores))
        mask[order[:m]] = True
    return mask


class WIPPolicy(Policy):
    """Probe the M users whose current belief has the highest index."""

    name = "wip"

    def __init__(self, cfg: SimConfig):
        for c in cfg.classes:
            if c.windex_flat is None:
                raise ValueError("user classes need index tables for WIP")
        self.values = cfg.per_user([c.windex_flat for c in cfg.classes])

    def select(self, eng: Engine, t: int) -> np.ndarray:
        scores = self.values[eng.ids, eng.belief]
        return _top_m(scores, eng.ids, eng.cfg.M)


class MyopicPolicy(Policy):
    """Probe the users with the largest immediate active payoff.

    mode "gain" ranks by R1 - passive(belief); mode "reward" ranks by R1.
    """

    name = "myopic"

    def __init__(self, mode: str = "gain"):
        if mode not in ("gain", "reward"):
            raise ValueError("mode must be 'gain' or 'reward'")
        self.mode = mode

    def select(self, eng: Engine, t: int) -> np.ndarray:
        if self.mode == "gain":
            scores = eng.r1 - eng.passive_reward[eng.ids, eng.belief]
        else:
            scores = eng.r1
        return _top_m(scores, eng.ids, eng.cfg.M)


class RandomPolicy(Policy):
    """Probe M users chosen uniformly at random."""

    name = "random"

    def select(self, eng: Engine, t: int) -> np.ndarray:
        mask = np.zeros(eng.N, dtype=bool)
        if eng.cfg.M > 0:
            mask[self.rng.choice(eng.N, size=eng.cfg.M, replace=False)] = True
        return mask


class RELPolicy(Policy):
    """Subsidy-threshold policy with randomization at the critical states.

    Meets the pilot budget only on average, so per-slot activations may
    exceed M; simulated purely as an upper-bound reference.
    """

    name = "rel"
    feasible = False

    def __init__(self, cfg: SimConfig, wstar: float, rho: float):
        for c in cfg.classes:
            if c.windex_flat is None:
                raise ValueError("user classes need index tables for REL")
        self.values = cfg.per_user([c.windex_flat for c in cfg.classes])
        self.wstar = wstar
        self.rho = rho

    def select(self, eng: Engine, t: int) -> np.ndarray:
        v = self.values[eng.ids, eng.belief]
        mask = v > self.wstar + 1e-12
        crit = np.abs(v - self.wstar) <= 1e-12
        if crit.any():
            mask = mask | (crit & (self.rng.random(eng.N) < self.rho))
        return mask


class OptimalPolicy(Policy):
    """Exact joint-model policy lookup (small N only)."""

    name = "optimal"

    def __init__(self, joint_mdp, joint_policy: np.ndarray):
        if joint_policy is None:
            raise OptimalUnavailable("joint solution has no policy map")
        self.jm = joint_mdp
        self.policy = joint_policy

    def select(self, eng: Engine, t: int) -> np.ndarray:
        action = self.jm.actions[int(self.policy[tuple(eng.belief)])]
        mask = np.zeros(eng.N, dtype=bool)
        mask[list(action)] = True
        return mask


class PeriodicPolicy(Policy):
    """Probe every user every `period` slots (test harness helper)."""

    name = "periodic"

    def __init__(self, period: int):
        self.period = period

    def select(self, eng: Engine, t: int) -> np.ndarray:
        if t % self.period == 0:
            return np.ones(eng.N, dtype=bool)
        return np.zeros(eng.N, dtype=bool)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

@dataclass
class PolicyStats:
    mean: float                 # total reward per slot, averaged over reps
    stderr: float
    rep_means: np.ndarray


@dataclass
class SimResult:
    per_policy: dict[str, PolicyStats]
    gaps: dict[str, float] = field(default_factory=dict)
    baseline: str = ""

    def gap_of(self, name: str) -> float:
        return self.gaps[name]


def _run_one(cfg: SimConfig, policy: Policy, rep: int) -> float:
    chan_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(101, rep)))
    pol_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed,
                               spawn_key=(211, zlib.crc32(policy.name.encode()), rep)))
    eng = Engine(cfg, chan_rng)
    policy.reset(pol_rng)
    total = 0.0
    for t in range(cfg.T):
        selected = policy.select(eng, t)
        if policy.feasible:
            assert selected.sum() <= cfg.M
        r = eng.apply(selected)
        if t >= cfg.warmup:
            total += r
        if (t + 1) % 1000 == 0:
            eng.check_beliefs()
    return total / (cfg.T - cfg.warmup)


def run(cfg: SimConfig, policies: list[Policy], baseline: str | None = None) -> SimResult:
    """Simulate each policy over independent replications.

    Gap convention: (baseline - policy) / baseline using the exact-optimal
    policy when present, else the REL upper bound, else the best mean.
    """
    per_policy: dict[str, PolicyStats] = {}
    for policy in policies:
        means = np.array([_run_one(cfg, policy, rep)
                          for rep in range(cfg.replications)])
        stderr = float(means.std(ddof=1) / np.sqrt(len(means))) if len(means) > 1 else 0.0
        per_policy[policy.name] = PolicyStats(mean=float(means.mean()),
                                              stderr=stderr, rep_means=means)
    if baseline is None:
        names = [p.name for p in policies]
        if "optimal" in names:
            baseline = "optimal"
        elif "rel" in names:
            baseline = "rel"
        else:
            baseline = max(per_policy, key=lambda n: per_policy[n].mean)
    g_base = per_policy[baseline].mean
    gaps = {name: (g_base - st.mean) / g_base for name, st in per_policy.items()}
    return SimResult(per_policy=per_policy, gaps=gaps, baseline=baseline)


def results_to_csv(results: dict[str, SimResult]) -> str:
    """Rows (instance_id, policy, mean, stderr, gap_pct)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance_id", "policy", "mean", "stderr", "gap_pct"])
    for inst, res in results.items():
        for name, st in res.per_policy.items():
            w.writerow([inst, name, f"{st.mean:.17g}", f"{st.stderr:.17g}",
                        f"{100.0 * res.gaps[name]:.17g}"])
    return buf.getvalue()


def boxplot_csv(gap_rows: list[dict[str, float]], policies: list[str]) -> str:
    """Instance rows, policy columns; entries are percent gaps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance"] + policies)
    for i, row in enumerate(gap_rows):
        w.writerow([i] + [f"{100.0 * row[p]:.17g}" for p in policies])
    return buf.getvalue()
