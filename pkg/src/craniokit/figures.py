"""Static SVG figures: embeddings with iso-contours, confusion matrices,
traversal displacement heatmaps, and training curves.

All output is deterministic: fixed hash salt, no timestamps, no interactive
backend.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["embedding_figure", "confusion_figure",
           "disentanglement_figure", "training_figure"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
           "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def _save(fig, path) -> None:
    matplotlib.rcParams["svg.hashsalt"] = "craniokit"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _ellipse_outline(ellipse, n: int = 128) -> np.ndarray:
    theta = np.linspace(0.0, 2.0 * np.pi, n)
    ring = np.stack([ellipse.axes[0] * np.cos(theta),
                     ellipse.axes[1] * np.sin(theta)])
    c, s = np.cos(ellipse.angle), np.sin(ellipse.angle)
    rot = np.array([[c, -s], [s, c]])
    return (rot @ ring).T + ellipse.center


def embedding_figure(path, points, labels, ellipses=(), patient=None,
                     trajectory=None, title: str = "") -> None:
    """Scatter the embedded classes, overlay 1-std ellipses, mark a patient
    point and an optional trajectory polyline."""
    pts = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    for i, cls in enumerate(sorted(set(labels.tolist()))):
        cloud = pts[labels == cls]
        ax.scatter(cloud[:, 0], cloud[:, 1], s=14,
                   color=_COLORS[i % len(_COLORS)], label=str(cls), alpha=0.8)
    for ellipse in ellipses:
        if ellipse.degenerate:
            continue
        ring = _ellipse_outline(ellipse)
        ax.plot(ring[:, 0], ring[:, 1], color="#444444", linewidth=0.9)
    if trajectory is not None:
        tr = np.asarray(trajectory, dtype=np.float64)
        ax.plot(tr[:, 0], tr[:, 1], color="#e91e63", linewidth=1.4,
                marker=".", markersize=6)
    if patient is not None:
        ax.scatter([patient[0]], [patient[1]], s=70, color="#e91e63",
                   marker="o", edgecolors="black", zorder=5, label="patient")
    ax.set_xlabel("axis 1")
    ax.set_ylabel("axis 2")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    _save(fig, path)


def confusion_figure(path, result, title: str = "") -> None:
    """Heatmap of the confusion counts with per-cell annotations."""
    counts = np.asarray(result.counts)
    fig, ax = plt.subplots(figsize=(4.4, 4.0))
    ax.imshow(counts, cmap="Blues")
    names = [str(c) for c in result.classes]
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    cutoff = counts.max() / 2 if counts.max() else 0
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center",
                    color="white" if counts[i, j] > cutoff else "black",
                    fontsize=9)
    ax.set_title(title or f"accuracy {result.accuracy:.3f}")
    fig.tight_layout()
    _save(fig, path)


def disentanglement_figure(path, matrix, region_names=None) -> None:
    """Heatmap of mean regional displacement per latent variable."""
    m = np.asarray(matrix, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5.2, 7.5))
    image = ax.imshow(m, aspect="auto", cmap="viridis")
    fig.colorbar(image, ax=ax, label="mean displacement (mm)")
    if region_names is not None:
        ax.set_xticks(range(len(region_names)), list(region_names),
                      rotation=90, fontsize=7)
    ax.set_xlabel("region")
    ax.set_ylabel("latent variable")
    fig.tight_layout()
    _save(fig, path)


def training_figure(path, stats) -> None:
    """Loss-term curves over epochs, log scale, one line per term."""
    epochs = [s.epoch for s in stats]
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    for attr, label in (("reconstruction", "reconstruction"),
                        ("laplacian", "laplacian"),
                        ("kl", "kl"),
                        ("consistency", "consistency"),
                        ("val_reconstruction", "val reconstruction")):
        values = [getattr(s, attr) for s in stats]
        if np.all(np.asarray(values) > 0):
            ax.semilogy(epochs, values, label=label, linewidth=1.1)
        else:
            ax.plot(epochs, values, label=label, linewidth=1.1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss term")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
