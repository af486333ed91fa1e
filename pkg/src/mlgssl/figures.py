"""Matplotlib renderers for the CLI report path. File output only."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _new(width=4.8, height=3.6):
    plt.rcParams.update(_RC)
    return plt.subplots(figsize=(width, height))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def surface_heatmap(sp_axis, sn_axis, values, title, path):
    fig, ax = _new(4.6, 3.8)
    mesh = ax.pcolormesh(sp_axis, sn_axis, np.asarray(values).T, shading="auto",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="gradient magnitude")
    ax.set_xlabel("positive score")
    ax.set_ylabel("negative score")
    ax.set_title(title)
    ax.grid(False)
    _save(fig, path)


def contraction_plot(d_traj, c, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.2, 3.2))
    plt.rcParams.update(_RC)
    ax1.semilogy(np.arange(len(d_traj)), d_traj)
    ax1.set_xlabel("step")
    ax1.set_ylabel("squared distance to optimum")
    ax1.set_title("contraction of the error vector")
    ax2.plot(np.arange(len(c)), c)
    ax2.set_ylim(0.0, 1.0)
    ax2.set_xlabel("step")
    ax2.set_ylabel("per-step factor")
    ax2.set_title("multiplicative factor stays in (0, 1)")
    _save(fig, path)


def training_curve(losses, path):
    fig, ax = _new()
    ax.plot(np.arange(len(losses)), losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    _save(fig, path)


def score_means_plot(records, levels, path):
    fig, ax = _new(5.6, 3.6)
    epochs = [r["epoch"] for r in records]
    for level in levels:
        ax.plot(epochs, [r["s_pos_mean"][level] for r in records],
                label=f"{level} positive")
        ax.plot(epochs, [r["s_neg_mean"][level] for r in records],
                linestyle="--", label=f"{level} negative")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean score")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("mean pair scores per level")
    ax.legend(ncol=2)
    _save(fig, path)


def cosine_matrix_plot(matrix, labels, path):
    fig, ax = _new(4.4, 3.8)
    im = ax.imshow(matrix, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{matrix[i, j]:.2f}", ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax, label="gradient cosine")
    ax.set_title("per-level gradient alignment")
    ax.grid(False)
    _save(fig, path)


def ablation_bars(names, values, path, metric="average"):
    fig, ax = _new(6.4, 0.34 * max(8, len(names)) + 1.2)
    pos = np.arange(len(names))
    ax.barh(pos, values, color="tab:blue")
    ax.set_yticks(pos, names)
    ax.invert_yaxis()
    ax.set_xlabel(metric)
    ax.set_title("level-subset ablation")
    _save(fig, path)


def metrics_bar(metrics, path):
    fig, ax = _new()
    keys = [k for k in ("acc_mean", "nmi", "ari", "auc") if metrics.get(k) is not None]
    ax.bar(keys, [metrics[k] for k in keys], color="tab:blue")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score")
    ax.set_title("downstream metrics")
    _save(fig, path)


def linear_angle_plot(angles, path):
    fig, ax = _new()
    ax.plot(np.arange(1, len(angles) + 1), angles)
    ax.set_xlabel("step")
    ax.set_ylabel("angle to previous state (rad)")
    ax.set_title("linear combination rotates the error vector")
    _save(fig, path)
