"""Figure rendering for the CLI report path.

Every plot function takes prepared data plus an output path and writes a
PNG; the delimited files remain the primary outputs and figures are
derived views of the same data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: str):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_index_table(windex, path: str):
    """Index values against belief age, one staircase per channel."""
    fig, ax = plt.subplots(figsize=(6, 4))
    taus = np.arange(1, windex.tau_bar + 1)
    for j in range(windex.K):
        ax.step(taus, windex.values[j], where="post", label=f"channel {j + 1}")
    ax.axhline(windex.steady_value, color="k", ls=":", lw=1,
               label="steady entry")
    ax.set_xlabel("belief age")
    ax.set_ylabel("index value")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_envelope(lines, breakpoints, w_range, path: str):
    """Affine reward pieces, their upper envelope, and breakpoint markers."""
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    W = np.linspace(w_range[0], w_range[1], 200)
    env = np.full_like(W, -np.inf)
    for gamma, a, b in lines:
        y = a + b * W
        env = np.maximum(env, y)
        ax.plot(W, y, lw=0.6, alpha=0.5, color="tab:gray")
    ax.plot(W, env, lw=2.0, color="tab:blue", label="upper envelope")
    for wb in breakpoints:
        if w_range[0] <= wb <= w_range[1]:
            ax.axvline(wb, color="tab:red", ls=":", lw=0.7)
    ax.set_xlabel("passivity subsidy W")
    ax.set_ylabel("average reward")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_bounds(reports, path: str):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    W = [r.W for r in reports]
    axes[0].plot(W, [r.g_max for r in reports], label="g_max", ls="--")
    axes[0].plot(W, [r.g_orig for r in reports], label="g_orig")
    axes[0].plot(W, [r.g_app for r in reports], label="g_app", ls=":")
    axes[0].plot(W, [r.g_min for r in reports], label="g_min", ls="--")
    axes[0].set_xlabel("W")
    axes[0].set_ylabel("gain")
    axes[0].legend(fontsize=8)
    axes[1].semilogy(W, [max(r.D, 1e-18) for r in reports], label="D(W)")
    axes[1].semilogy(W, [max(r.rel_err, 1e-18) for r in reports],
                     label="measured rel. err.")
    axes[1].set_xlabel("W")
    axes[1].legend(fontsize=8)
    _save(fig, path)


def plot_structure_map(policy: np.ndarray, path: str, title: str = ""):
    """Two-user pilot assignment over the product belief space."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(policy.T, origin="lower", aspect="auto", cmap="coolwarm",
              interpolation="nearest")
    ax.set_xlabel("user 1 belief state")
    ax.set_ylabel("user 2 belief state")
    if title:
        ax.set_title(title, fontsize=9)
    _save(fig, path)


def plot_gap_boxplot(gap_rows, policies, path: str):
    """Per-policy suboptimality gap distribution across instances."""
    fig, ax = plt.subplots(figsize=(6, 4))
    data = [[100.0 * row[p] for row in gap_rows] for p in policies]
    ax.boxplot(data, tick_labels=policies, showmeans=True)
    ax.set_ylabel("suboptimality gap (%)")
    _save(fig, path)


def plot_fluid(dist: np.ndarray, eigenvalues: np.ndarray, path: str):
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    axes[0].semilogy(np.maximum(dist, 1e-18))
    axes[0].set_xlabel("slot")
    axes[0].set_ylabel("distance to fixed point")
    axes[1].scatter(eigenvalues.real, eigenvalues.imag, s=12)
    axes[1].axvline(-1.0, color="tab:red", ls=":", lw=0.8)
    axes[1].set_xlabel("Re")
    axes[1].set_ylabel("Im")
    _save(fig, path)


def plot_sim(result, path: str):
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(result.per_policy)
    means = [result.per_policy[n].mean for n in names]
    errs = [result.per_policy[n].stderr for n in names]
    ax.bar(names, means, yerr=[3 * e for e in errs], capsize=4)
    ax.set_ylabel("reward per slot (3 s.e. bars)")
    _save(fig, path)
