"""Static figures written next to the CSV reports (Agg backend, no display)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}
# reproducible bytes: no timestamps or version strings in the files
_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_history(history_by_target: dict[int, list[dict]], path, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        for target, hist in sorted(history_by_target.items()):
            if not hist:
                continue
            ep = [h["epoch"] for h in hist]
            ax_loss.plot(ep, [h["train_loss"] for h in hist], label=f"target {target}")
            ax_acc.plot(ep, [h["val_accuracy"] for h in hist], label=f"target {target}")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("train loss")
        ax_acc.set_xlabel("epoch")
        ax_acc.set_ylabel("source validation accuracy")
        ax_acc.legend(loc="lower right")
        if title:
            fig.suptitle(title)
        _save(fig, path)


def plot_summary(rows: list[dict], path) -> None:
    """Bar chart of mean target accuracy per algorithm with a std error bar."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        names = [r["algorithm"] for r in rows]
        means = [100 * r["mean_accuracy"] for r in rows]
        stds = [100 * r["std_accuracy"] for r in rows]
        ax.bar(range(len(rows)), means, yerr=stds, capsize=3, color="0.55", edgecolor="0.2")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel("held-out accuracy (%)")
        lo = max(0.0, min(means) - max(stds + [0.0]) - 5) if means else 0
        ax.set_ylim(lo, 100)
        _save(fig, path)


def plot_confusion(cm: np.ndarray, path, title: str = "") -> None:
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots(figsize=(3.4, 3.0))
        norm = cm / np.maximum(cm.sum(axis=1, keepdims=True), 1)
        ax.imshow(norm, cmap="Blues", vmin=0, vmax=1)
        for i in range(cm.shape[0]):
            for j in range(cm.shape[1]):
                ax.text(j, i, str(cm[i, j]), ha="center", va="center",
                        color="white" if norm[i, j] > 0.5 else "black")
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_toy_boundaries(grids: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]],
                        points: tuple[np.ndarray, np.ndarray], path) -> None:
    """One panel per method: predicted-class raster plus the training points."""
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, axes = plt.subplots(1, len(grids), figsize=(3.6 * len(grids), 3.4), squeeze=False)
        X, y = points
        for ax, (name, (gx, gy, pred)) in zip(axes[0], grids.items()):
            ax.contourf(gx, gy, pred, levels=np.arange(pred.max() + 2) - 0.5, cmap="coolwarm", alpha=0.25)
            ax.contour(gx, gy, pred, levels=np.arange(pred.max() + 1) + 0.5, colors="k", linewidths=1)
            ax.scatter(X[:, 0], X[:, 1], c=y, cmap="coolwarm", s=6, edgecolors="none")
            ax.set_title(name)
            ax.set_aspect("equal")
        _save(fig, path)
