"""Figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.linestyle": "--",
    "grid.linewidth": 0.5,
    "lines.linewidth": 1.5,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_training_history(history, path):
    """Train loss and test MSE per epoch (log scale), temperature on a twin axis."""
    rows = history.rows if hasattr(history, "rows") else list(history)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        epochs = [r["epoch"] for r in rows]
        ax.semilogy(epochs, [r["train_loss"] for r in rows], label="train loss")
        tested = [r for r in rows if r.get("test_mse") is not None]
        if tested:
            ax.semilogy([r["epoch"] for r in tested], [r["test_mse"] for r in tested], label="test MSE")
        ax.set_xlabel("epoch")
        ax.set_ylabel("squared error")
        tau_ax = ax.twinx()
        tau_ax.plot(epochs, [r["tau"] for r in rows], color="0.6", linestyle=":", label="tau")
        tau_ax.set_ylabel("temperature")
        tau_ax.grid(False)
        lines = ax.get_legend_handles_labels()
        more = tau_ax.get_legend_handles_labels()
        ax.legend(lines[0] + more[0], lines[1] + more[1], loc="upper right")
        return _save(fig, path)


def plot_arity_contours(rows, path, metric="test_object_se", threshold=0.1):
    """One panel per arity: log10 of ``metric`` over the (U, P) grid.

    The threshold level is drawn as a heavy contour line.
    """
    arities = sorted({r["arity"] for r in rows})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(arities), figsize=(3.6 * len(arities), 3.3), squeeze=False)
        for ax, a in zip(axes[0], arities):
            sub = [r for r in rows if r["arity"] == a]
            us = sorted({r["units"] for r in sub})
            ps = sorted({r["predicates"] for r in sub})
            grid = np.full((len(ps), len(us)), np.nan)
            for r in sub:
                if r.get(metric) is not None:
                    grid[ps.index(r["predicates"]), us.index(r["units"])] = np.log10(max(r[metric], 1e-8))
            if len(us) > 1 and len(ps) > 1 and np.isfinite(grid).any():
                cs = ax.contourf(us, ps, grid, levels=12, cmap="viridis")
                fig.colorbar(cs, ax=ax, label=f"log10 {metric}")
                if np.nanmin(grid) <= np.log10(threshold) <= np.nanmax(grid):
                    ax.contour(us, ps, grid, levels=[np.log10(threshold)], colors="red", linewidths=2)
            else:
                ax.imshow(grid, origin="lower", aspect="auto")
            ax.set_title(f"A = {a}")
            ax.set_xlabel("U (units)")
            ax.set_ylabel("P (predicates)")
            ax.grid(False)
        return _save(fig, path)


def plot_solve_results(rows, path):
    """Plan cost per instance against the random-walk length."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        idx = [r["instance"] for r in rows]
        costs = [r["cost"] if r["cost"] is not None else np.nan for r in rows]
        colors = ["tab:green" if r["solved"] else "tab:red" for r in rows]
        ax.bar(idx, np.nan_to_num(costs), color=colors)
        steps = {r["steps"] for r in rows}
        for s in steps:
            ax.axhline(s, color="0.3", linestyle="--", linewidth=1)
        ax.set_xlabel("instance")
        ax.set_ylabel("plan cost")
        solved = sum(1 for r in rows if r["solved"])
        ax.set_title(f"{solved}/{len(rows)} solved")
        return _save(fig, path)
