"""Two-class population dynamics of the index policy and its fixed point.

With many users, the per-slot occupancy of belief states evolves
deterministically: states above the critical index activate fully, the
critical state absorbs the residual pilot budget, everything below stays
passive.  Inside the region where the budget binds at the critical state
these dynamics are affine; their unique fixed point is the stationary
occupancy of the randomized relaxed-optimal policy, and the reduced system
matrix has every eigenvalue at -1, so perturbations die out in finitely
many steps.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .channel import BeliefTable, ChannelModel, generate_doubly_stochastic
from .config import DEFAULTS, Tolerances
from .errors import Infeasible, RegionEmpty
from .reward import RewardModel, max_belief_reward
from .whittle import WhittleIndexTable, omega, whittle_closed_form


@dataclass(frozen=True)
class FluidClass:
    """One user class: channel, rewards, and its index table."""

    model: ChannelModel
    table: BeliefTable
    rm: RewardModel
    windex: WhittleIndexTable

    @classmethod
    def build(cls, model: ChannelModel, tau_bar: int,
              rm: RewardModel | None = None) -> "FluidClass":
        table = BeliefTable(model, tau_bar, warn=False)
        rm = max_belief_reward(table) if rm is None else rm
        win = whittle_closed_form(rm, omega(model))
        return cls(model=model, table=table, rm=rm, windex=win)

    @property
    def n_states(self) -> int:
        return self.table.n_states


@dataclass
class FluidConfig:
    """Two classes, a class mix, a pilot fraction, and the critical pair.

    State vectors are laid out class block by class block; within a block,
    channels by age with the steady entry last (the same flat order the
    single-arm solvers use).
    """

    classes: list[FluidClass]
    delta: np.ndarray
    lam: float
    wstar: float
    rho: float
    # Derived layout, filled by __post_init__.
    dim: int = field(init=False)
    offsets: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)       # index value per global state
    class_of: np.ndarray = field(init=False)
    r1: np.ndarray = field(init=False)           # active reward per global state
    passive_reward: np.ndarray = field(init=False)
    passive_next: np.ndarray = field(init=False)
    priority: np.ndarray = field(init=False)     # global states, best index first
    crit: int = field(init=False)                # global index of the critical state
    above: np.ndarray = field(init=False)        # boolean: index above critical

    def __post_init__(self):
        if len(self.classes) != 2:
            raise ValueError("the population model is built for two classes")
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.shape != (2,) or abs(self.delta.sum() - 1.0) > 1e-12 or (self.delta <= 0).any():
            raise ValueError("delta must be a positive pair summing to 1")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("pilot fraction must lie in (0, 1]")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("randomization must lie strictly inside (0, 1)")

        sizes = [c.n_states for c in self.classes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.dim = int(self.offsets[-1])
        self.values = np.concatenate([c.windex.values_flat for c in self.classes])
        self.class_of = np.concatenate(
            [np.full(s, ci, dtype=np.int64) for ci, s in enumerate(sizes)])
        self.r1 = np.concatenate(
            [np.full(s, c.rm.active) for c, s in zip(self.classes, sizes)])
        self.passive_reward = np.concatenate(
            [c.rm.passive_flat for c in self.classes])
        self.passive_next = np.concatenate(
            [c.table.passive_next + off for c, off in zip(self.classes, self.offsets[:-1])])

        # Strict priority: index value descending, then class/channel/age.
        self.priority = np.lexsort((np.arange(self.dim), -self.values))

        for c in self.classes:
            if c.windex.steady_value < self.wstar - 1e-12:
                raise Infeasible("steady-entry index below the critical subsidy "
                                 "for one class; that class would never be probed")
        crit_states = np.nonzero(np.abs(self.values - self.wstar) <= 1e-9)[0]
        if len(crit_states) == 0:
            raise Infeasible("no belief state sits exactly at the critical subsidy")
        if len(crit_states) > 1:
            raise Infeasible("tied critical states; perturb the instance")
        self.crit = int(crit_states[0])
        self.above = self.values > self.wstar + 1e-9
        ci, s = self.locate(self.crit)
        j, tau = self.classes[ci].table.label(s)
        if j < 0 or tau + 1 > self.classes[ci].table.tau_bar:
            raise RegionEmpty("critical state must be a tabulated age with room "
                              "for one unprobed slot past it")

    def locate(self, g: int) -> tuple[int, int]:
        """Global state -> (class index, within-class flat state)."""
        ci = 0 if g < self.offsets[1] else 1
        return ci, g - int(self.offsets[ci])

    def first_ages(self, ci: int) -> np.ndarray:
        return self.classes[ci].table.first_age + int(self.offsets[ci])

    def class_mask(self, ci: int) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        mask[self.offsets[ci]:self.offsets[ci + 1]] = True
        return mask

    def check_state(self, y: np.ndarray, tol: float = 1e-10) -> bool:
        """Nonnegative with per-class masses matching the class mix."""
        if (np.asarray(y) < -tol).any():
            return False
        for ci in range(2):
            if abs(y[self.class_mask(ci)].sum() - self.delta[ci]) > tol:
                return False
        return True

    def in_region(self, y: np.ndarray) -> bool:
        """Budget binds at the critical state: above < lam <= above + crit."""
        above_mass = float(y[self.above].sum())
        return above_mass < self.lam <= above_mass + float(y[self.crit])


# ---------------------------------------------------------------------------
# Relaxed-optimal policy: critical subsidy and randomization from the budget
# ---------------------------------------------------------------------------

def _first_active_ages(cls: FluidClass, wstar: float, strict: bool) -> np.ndarray:
    """Per-channel age of first activation (tau_bar + 1 = at the steady entry).

    A state activates when its index exceeds wstar (or ties it, when strict
    is False).  Returns 0 for a channel that never activates.
    """
    win = cls.windex
    ages = np.empty(cls.model.K, dtype=np.int64)
    for j in range(cls.model.K):
        if strict:
            active = win.values[j] > wstar + 1e-12
        else:
            active = win.values[j] >= wstar - 1e-12
        idx = np.nonzero(active)[0]
        if idx.size:
            ages[j] = idx[0] + 1
        else:
            steady_active = (win.steady_value > wstar + 1e-12 if strict
                             else win.steady_value >= wstar - 1e-12)
            ages[j] = cls.table.tau_bar + 1 if steady_active else 0
    return ages


def _activation_fraction(cls: FluidClass, wstar: float, strict: bool) -> float:
    ages = _first_active_ages(cls, wstar, strict)
    if (ages == 0).any():
        return 0.0          # some channel absorbs; activations die out
    return 1.0 / float(ages @ omega(cls.model))


def solve_rel_policy(classes: list[FluidClass], delta, lam: float
                     ) -> tuple[float, float]:
    """Critical subsidy and randomization meeting the budget with equality.

    The activation fraction is piecewise constant in the subsidy with jumps
    at index values; the subsidy is located among the classes' breakpoints
    and the randomization solves the linear fill at the critical state.
    Budget values landing exactly on a jump are nudged into the interior.
    """
    delta = np.asarray(delta, dtype=float)
    if not 0.0 < lam < 1.0:
        raise Infeasible("pilot fraction must lie strictly inside (0, 1)")
    candidates = np.unique(np.concatenate(
        [c.windex.values_flat for c in classes]))[::-1]
    for v in candidates:
        hi = float(sum(d * _activation_fraction(c, v, strict=False)
                       for c, d in zip(classes, delta)))
        lo = float(sum(d * _activation_fraction(c, v, strict=True)
                       for c, d in zip(classes, delta)))
        if lo < lam <= hi:
            target = lam
            if abs(target - hi) < 1e-12 or abs(target - lo) < 1e-12:
                target = min(max(lam - 1e-9, lo + 1e-12), hi)  # nudge off the jump
            # Identify the critical class: the one holding a state at value v.
            crit_cls = None
            for ci, c in enumerate(classes):
                if np.any(np.abs(c.windex.values_flat - v) <= 1e-12):
                    if crit_cls is not None:
                        raise Infeasible("tied critical states across classes")
                    crit_cls = ci
            c = classes[crit_cls]
            ages_hi = _first_active_ages(c, v, strict=False)
            ages_lo = _first_active_ages(c, v, strict=True)
            if (ages_lo == 0).any() or (ages_hi == 0).any():
                raise Infeasible("critical subsidy at the absorbing boundary")
            w = omega(c.model)
            mu = target - float(sum(d * _activation_fraction(cc, v, strict=True)
                                    for cc, d in zip(classes, delta) if cc is not c))
            if mu <= 0:
                raise Infeasible("non-critical classes already exceed the budget")
            # Expected cycle length is affine in rho between the two age maps.
            base = float(ages_lo @ w)
            slope = float((ages_lo - ages_hi) @ w)   # > 0 on the critical channel
            # delta_c / (base - rho * slope) = mu
            rho = (base - delta[crit_cls] / mu) / slope
            if not 0.0 < rho < 1.0:
                raise Infeasible(f"randomization {rho:.3g} outside (0, 1); "
                                 "nudge the pilot fraction")
            return float(v), float(rho)
    raise Infeasible("no subsidy level meets the budget")


def build_config(classes: list[FluidClass], delta, lam: float) -> FluidConfig:
    wstar, rho = solve_rel_policy(classes, delta, lam)
    return FluidConfig(classes=classes, delta=np.asarray(delta, dtype=float),
                       lam=float(lam), wstar=wstar, rho=rho)


def rel_occupancy(cfg: FluidConfig) -> np.ndarray:
    """Stationary occupancy under the relaxed-optimal policy, class scaled.

    Non-critical channels hold equal mass on ages up to their activation
    age; the critical state's successor age keeps the non-activated
    fraction.  Steady entries carry no mass (interior criticality).
    """
    theta = np.zeros(cfg.dim)
    crit_ci, crit_s = cfg.locate(cfg.crit)
    for ci, cls in enumerate(cfg.classes):
        w = omega(cls.model)
        ages = _first_active_ages(cls, cfg.wstar, strict=True)
        tau_bar = cls.table.tau_bar
        if ci == crit_ci:
            uj, utau = cls.table.label(crit_s)
            assert ages[uj] == utau + 1
            # Activation at utau with probability rho, else one age later.
            cycle = float(ages @ w) - cfg.rho * w[uj]
        else:
            cycle = float(ages @ w)
        off = int(cfg.offsets[ci])
        for j in range(cls.model.K):
            last = min(int(ages[j]), tau_bar)
            theta[off + j * tau_bar: off + j * tau_bar + last] = w[j] / cycle
            if ages[j] == tau_bar + 1:       # activation happens at the steady entry
                theta[off + cls.table.steady_index] += w[j] / cycle
        if ci == crit_ci:
            theta[off + uj * tau_bar + utau] = (1 - cfg.rho) * w[uj] / cycle
            theta[off + uj * tau_bar + utau + 1: off + (uj + 1) * tau_bar] = 0.0
        theta[off:off + cls.n_states] *= cfg.delta[ci]
    return theta


def rel_gain(cfg: FluidConfig, theta: np.ndarray | None = None) -> float:
    """Per-user average reward of the relaxed-optimal policy."""
    y = rel_occupancy(cfg) if theta is None else theta
    g = activation_fractions(y, cfg)
    return float((y * (g * cfg.r1 + (1.0 - g) * cfg.passive_reward)).sum())


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def activation_fractions(y: np.ndarray, cfg: FluidConfig) -> np.ndarray:
    """Waterfall fill of the pilot budget in strict index-priority order.

    States are visited best index first; each receives the remaining budget
    capped at its mass.  Empty states get 1 while budget remains so the
    fraction is defined everywhere.
    """
    g = np.zeros(cfg.dim)
    remaining = cfg.lam
    for i in cfg.priority:
        yi = float(y[i])
        if yi > 0.0:
            gi = min(remaining / yi, 1.0)
            g[i] = gi
            remaining = max(remaining - gi * yi, 0.0)
        else:
            g[i] = 1.0 if remaining > 0.0 else 0.0
    return g


def drift(y: np.ndarray, cfg: FluidConfig) -> np.ndarray:
    """Expected one-slot change of the occupancy vector.

    Active mass restarts at fresh ages with stationary weights of its own
    class; passive mass ages by one slot.  Mass is conserved per class.
    """
    y = np.asarray(y, dtype=float)
    g = activation_fractions(y, cfg)
    inflow = np.zeros(cfg.dim)
    np.add.at(inflow, cfg.passive_next, (1.0 - g) * y)
    for ci, cls in enumerate(cfg.classes):
        mask = cfg.class_mask(ci)
        active_mass = float((g[mask] * y[mask]).sum())
        inflow[cfg.first_ages(ci)] += active_mass * omega(cls.model)
    return inflow - y


@dataclass
class LinearFluid:
    """Affine dynamics on the budget-binding region and derived objects.

    Qbar/dbar reproduce the nonlinear drift exactly on the region.  Qhat is
    the block-structured reduced matrix whose spectrum sits at -1 by
    construction: it prices activation inflows at their stationary level,
    which drops the restart feedback of the non-critical class.  Qreduced
    keeps that feedback (one coordinate per class eliminated through mass
    conservation); it is nonsingular, solves the fixed point, and its
    spectrum -- strictly inside the unit disk around -1 -- governs the true
    contraction rate.
    """

    Qbar: np.ndarray
    dbar: np.ndarray
    theta: np.ndarray
    Qhat: np.ndarray
    eigenvalues: np.ndarray          # spectrum of Qhat
    Qreduced: np.ndarray
    reduced_eigenvalues: np.ndarray  # spectrum of Qreduced
    crit: int
    linear_check_max_err: float

    @property
    def contraction_radius(self) -> float:
        return float(np.abs(self.reduced_eigenvalues + 1.0).max())


def _flow_column(cfg: FluidConfig, i: int, active: bool) -> np.ndarray:
    """Net outflow pattern of one unit of mass at state i under an action."""
    col = np.zeros(cfg.dim)
    if active:
        ci, _ = cfg.locate(i)
        col[cfg.first_ages(ci)] += omega(cfg.classes[ci].model)
    else:
        col[cfg.passive_next[i]] += 1.0
    col[i] -= 1.0
    return col


def affine_dynamics(cfg: FluidConfig) -> tuple[np.ndarray, np.ndarray]:
    """(Qbar, dbar) with drift(y) = Qbar y + dbar on the binding region."""
    d = cfg.dim
    A = np.zeros((d, d))
    for i in range(d):
        A[:, i] = _flow_column(cfg, i, active=bool(cfg.above[i]) and i != cfg.crit)
    v = _flow_column(cfg, cfg.crit, True) - _flow_column(cfg, cfg.crit, False)
    return A - np.outer(v, cfg.above.astype(float)), cfg.lam * v


def faithful_reduction(cfg: FluidConfig, Qbar: np.ndarray, dbar: np.ndarray):
    """Eliminate one coordinate per class via mass conservation.

    Removes the critical state and the first state of the other class; the
    result is nonsingular, so it pins the fixed point uniquely.
    """
    d = cfg.dim
    crit_ci, _ = cfg.locate(cfg.crit)
    other_ci = 1 - crit_ci
    other_elim = int(np.nonzero(cfg.class_mask(other_ci))[0][0])
    keep = np.ones(d, dtype=bool)
    keep[cfg.crit] = False
    keep[other_elim] = False
    Q = Qbar[np.ix_(keep, keep)].copy()
    dd = dbar[keep].copy()
    for ci, elim in ((crit_ci, cfg.crit), (other_ci, other_elim)):
        block = cfg.class_mask(ci)
        block[elim] = False
        Q -= np.outer(Qbar[keep, elim], block[keep].astype(float))
        dd += Qbar[keep, elim] * cfg.delta[ci]
    return Q, dd, keep, (cfg.crit, other_elim)


def _A_block(m: int) -> np.ndarray:
    M = -np.eye(m)
    if m > 1:
        M[1:, :-1] += np.eye(m - 1)
    return M


def _B_block(n: int, m: int) -> np.ndarray:
    Z = np.zeros((n, m))
    if n > 0 and m > 1:
        Z[0, :m - 1] = -1.0
    return Z


def paper_reduced_matrix(cfg: FluidConfig) -> np.ndarray:
    """Block-structured reduced matrix with spectrum at -1.

    Critical class first (its critical channel relabeled to position 1 and
    the critical coordinate removed), non-critical class second.  Aging
    chains contribute bidiagonal blocks, activation shows up as pure
    outflow (inflows priced at their stationary level), and the critical
    successor row carries the budget coupling, rewritten through both
    classes' mass conservation.
    """
    crit_ci, crit_s = cfg.locate(cfg.crit)
    other_ci = 1 - crit_ci
    ccls, ocls = cfg.classes[crit_ci], cfg.classes[other_ci]
    K, tau = ccls.model.K, ccls.table.tau_bar
    if ocls.model.K != K or ocls.table.tau_bar != tau:
        raise RegionEmpty("block form needs matching K and tau_bar across classes")
    uj, utau = ccls.table.label(crit_s)

    ell_all = _first_active_ages(ccls, cfg.wstar, strict=False)
    perm = [uj] + [j for j in range(K) if j != uj]
    ell = [int(ell_all[j]) for j in perm]          # ell[0] == critical age
    m_ages = [int(a) for a in _first_active_ages(ocls, cfg.wstar, strict=True)]
    if ell[0] != utau or ell[0] < 1 or ell[0] > tau - 1:
        raise RegionEmpty("critical age must be interior")
    if any(not 1 <= e <= tau for e in ell[1:]) or any(not 1 <= m <= tau for m in m_ages[:-1]) \
            or not 1 <= m_ages[-1] <= tau + 1:
        raise RegionEmpty("activation ages outside the block form's range")

    dim1, dim2 = K * tau, K * tau + 1
    Q = np.zeros((dim1 + dim2, dim1 + dim2))
    succ_rows = slice(ell[0] - 1, tau - 1)          # critical-successor ages

    col = 0
    for i in range(K):
        ncols = (tau - 1) if i == 0 else (tau if i < K - 1 else tau + 1)
        block = np.zeros((dim1, ncols))
        if i == 0:
            block[:ell[0] - 1, :ell[0] - 1] = _A_block(ell[0] - 1)
            block[succ_rows, :ell[0] - 1] = _B_block(tau - ell[0], ell[0] - 1)
            block[succ_rows, ell[0] - 1:] = -np.eye(tau - ell[0])
        else:
            row0 = (tau - 1) + (i - 1) * tau
            block[succ_rows, :ell[i]] = _B_block(tau - ell[0], ell[i])
            block[row0:row0 + ell[i], :ell[i]] = _A_block(ell[i])
            nact = ncols - ell[i]
            block[row0 + ell[i]:row0 + ell[i] + nact, ell[i]:] = -np.eye(nact)
        Q[:dim1, col:col + ncols] = block
        col += ncols
    for i in range(K):
        ncols = tau if i < K - 1 else tau + 1
        top = np.zeros((dim1, ncols))
        top[succ_rows, :m_ages[i]] = _B_block(tau - ell[0], m_ages[i])
        bot = np.zeros((dim2, ncols))
        row0 = i * tau
        bot[row0:row0 + m_ages[i], :m_ages[i]] = _A_block(m_ages[i])
        nact = ncols - m_ages[i]
        bot[row0 + m_ages[i]:row0 + m_ages[i] + nact, m_ages[i]:] = -np.eye(nact)
        Q[:dim1, col:col + ncols] = top
        Q[dim1:, col:col + ncols] = bot
        col += ncols
    assert col == dim1 + dim2
    return Q


def linearize(cfg: FluidConfig, rng: np.random.Generator | None = None,
              n_check: int = 100) -> LinearFluid:
    """Affine form on the budget-binding region, fixed point, and spectra.

    Agreement between the affine form and the nonlinear drift is verified
    at random points of the region; the fixed point comes from the
    nonsingular per-class reduction and must bind the budget.
    """
    Qbar, dbar = affine_dynamics(cfg)
    Qred, dred, keep, (crit, other_elim) = faithful_reduction(cfg, Qbar, dbar)
    theta_hat = np.linalg.solve(Qred, -dred)
    theta = np.empty(cfg.dim)
    theta[keep] = theta_hat
    crit_ci, _ = cfg.locate(crit)
    for ci, elim in ((crit_ci, crit), (1 - crit_ci, other_elim)):
        block = cfg.class_mask(ci)
        block[elim] = False
        theta[elim] = cfg.delta[ci] - theta[block].sum()
    if theta[cfg.crit] <= 0 or not cfg.in_region(theta):
        raise RegionEmpty("fixed point does not bind the budget at the "
                          "critical state; the linear regime is empty")

    Qhat = paper_reduced_matrix(cfg)
    max_err = 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    for _ in range(n_check):
        y = sample_region_point(cfg, theta, rng)
        err = np.abs(drift(y, cfg) - (Qbar @ y + dbar)).max()
        max_err = max(max_err, float(err))
    return LinearFluid(Qbar=Qbar, dbar=dbar, theta=theta, Qhat=Qhat,
                       eigenvalues=np.linalg.eigvals(Qhat),
                       Qreduced=Qred, reduced_eigenvalues=np.linalg.eigvals(Qred),
                       crit=cfg.crit, linear_check_max_err=max_err)


def sample_region_point(cfg: FluidConfig, theta: np.ndarray,
                        rng: np.random.Generator, scale: float = 0.25
                        ) -> np.ndarray:
    """Random state near the fixed point, inside the budget-binding region."""
    for _ in range(200):
        z = rng.normal(size=cfg.dim)
        for ci in range(2):
            mask = cfg.class_mask(ci)
            z[mask] -= z[mask].mean()
        pos = theta > 1e-12
        z[~pos] = np.abs(z[~pos]) * 1e-3    # barely touch empty states
        eps = scale * float(theta[pos].min())
        y = theta + eps * z / max(np.abs(z).max(), 1e-12)
        for ci in range(2):
            mask = cfg.class_mask(ci)
            y[mask] += (cfg.delta[ci] - y[mask].sum()) / mask.sum()
        if (y >= 0).all() and cfg.in_region(y):
            return y
        scale *= 0.5
    raise RegionEmpty("could not sample a point in the budget-binding region")


def integrate(y0: np.ndarray, cfg: FluidConfig, T: int,
              theta: np.ndarray | None = None):
    """Iterate the nonlinear dynamics for T slots.

    Returns (trajectory, distances) where distances[t] is the sup-norm gap
    to the fixed point (all zeros when theta is not supplied).
    """
    y = np.asarray(y0, dtype=float).copy()
    traj = np.empty((T + 1, cfg.dim))
    dist = np.empty(T + 1)
    ref = np.zeros(cfg.dim) if theta is None else theta
    traj[0] = y
    dist[0] = np.abs(y - ref).max()
    for t in range(T):
        y = y + drift(y, cfg)
        traj[t + 1] = y
        dist[t + 1] = np.abs(y - ref).max()
    return traj, dist


# ---------------------------------------------------------------------------
# Random two-class instances (experiment plumbing)
# ---------------------------------------------------------------------------

def random_two_class_config(seed: int, K: int = 3, tau_bar: int = 8,
                            quantile: float = 0.35, delta=(0.5, 0.5),
                            max_radius: float = 0.95) -> FluidConfig:
    """Seeded two-class configuration with an interior critical state.

    Channels are random doubly stochastic matrices with random rates; the
    critical subsidy is picked among the merged finite-age index values at
    roughly the given depth, the randomization is drawn, and the pilot
    fraction is whatever budget that policy consumes.  Configurations whose
    faithful reduction contracts slower than max_radius (possible when
    activation ages tie across every channel) are skipped.
    """
    rng = np.random.default_rng(seed)
    classes = []
    for c in range(2):
        # Redraw channel-symmetric instances whose index values collide:
        # they have no unique critical state.
        while True:
            P = generate_doubly_stochastic(K, int(rng.integers(2 ** 31)))
            h2 = rng.normal(size=K) ** 2 + rng.normal(size=K) ** 2
            model = ChannelModel.build(P, np.log2(1.0 + h2), label=f"class{c + 1}")
            fc = FluidClass.build(model, tau_bar)
            vals = np.sort(fc.windex.values.reshape(-1))
            if np.diff(vals).min() > 1e-7:
                classes.append(fc)
                break
    finite = np.sort(np.concatenate([c.windex.values.reshape(-1) for c in classes]))[::-1]
    pos = int(quantile * len(finite))
    delta = np.asarray(delta, dtype=float)
    order = sorted(range(len(finite)), key=lambda i: abs(i - pos))
    for i in order:
        v = finite[i]
        rho = float(rng.uniform(0.25, 0.75))
        try:
            lam = _budget_for(classes, delta, v, rho)
            cfg = FluidConfig(classes=classes, delta=delta, lam=lam,
                              wstar=float(v), rho=rho)
            lf = linearize(cfg, n_check=3)
            if lf.contraction_radius < max_radius:
                return cfg
        except (Infeasible, RegionEmpty, ValueError):
            continue
    raise Infeasible(f"no interior critical state for seed {seed}")


def _budget_for(classes, delta, wstar: float, rho: float) -> float:
    """Pilot fraction consumed by the (wstar, rho) randomized policy."""
    total = 0.0
    for c, d in zip(classes, delta):
        ages_lo = _first_active_ages(c, wstar, strict=True)
        ages_hi = _first_active_ages(c, wstar, strict=False)
        if (ages_lo == 0).any() or (ages_hi == 0).any():
            raise Infeasible("absorbing policy")
        w = omega(c.model)
        cycle = float(ages_lo @ w) - rho * float((ages_lo - ages_hi) @ w)
        total += d / cycle
    return total


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------

def trajectory_to_csv(traj: np.ndarray, dist: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "dist_to_theta"] + [f"y{i}" for i in range(traj.shape[1])])
    for t in range(traj.shape[0]):
        w.writerow([t, f"{dist[t]:.17g}"] + [f"{x:.17g}" for x in traj[t]])
    return buf.getvalue()


def spectrum_to_csv(lf: LinearFluid) -> str:
    """Both spectra: the block-form matrix and the faithful reduction."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["matrix", "re", "im"])
    for ev in lf.eigenvalues:
        w.writerow(["block_form", f"{ev.real:.17g}", f"{ev.imag:.17g}"])
    for ev in lf.reduced_eigenvalues:
        w.writerow(["faithful", f"{ev.real:.17g}", f"{ev.imag:.17g}"])
    return buf.getvalue()


def theta_to_csv(cfg: FluidConfig, theta: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class", "j", "tau", "theta", "windex"])
    for i in range(cfg.dim):
        ci, s = cfg.locate(i)
        j, tau = cfg.classes[ci].table.label(s)
        if j < 0:
            w.writerow([ci + 1, 0, 0, f"{theta[i]:.17g}", f"{cfg.values[i]:.17g}"])
        else:
            w.writerow([ci + 1, j + 1, tau, f"{theta[i]:.17g}", f"{cfg.values[i]:.17g}"])
    return buf.getvalue()
