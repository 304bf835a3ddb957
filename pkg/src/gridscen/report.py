"""Headless figure rendering for the delimited artifacts.

Every renderer writes a PNG next to the corresponding CSV/JSON output.
Figures are deterministic: fixed size and dpi, no timestamps, and the
Agg backend regardless of environment.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import LABELS, TypicalScenarioSet  # noqa: E402

DPI = 150


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def save_fidelity_curve(path, ks, curves: dict[str, list[float]]) -> Path:
    """Fidelity vs embedding dimension, one line per MDS method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(curves):
        ax.plot(ks, curves[name], marker="o", label=name)
    ax.set_xlabel("embedding dimension k")
    ax.set_ylabel("distance fidelity")
    ax.set_ylim(None, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def save_spectrum(path, report) -> Path:
    """Positive eigenvalues with their cumulative share."""
    fig, ax = plt.subplots(figsize=(6, 4))
    m = np.arange(1, report.n_positive + 1)
    ax.bar(m, report.eigenvalues[:report.n_positive], color="tab:blue",
           alpha=0.7, label="eigenvalue")
    ax2 = ax.twinx()
    ax2.plot(m, report.cumulative_shares, color="tab:red", marker=".",
             label="cumulative share")
    ax2.set_ylim(0.0, 1.05)
    ax.set_xlabel("rank")
    ax.set_ylabel("eigenvalue")
    ax2.set_ylabel("cumulative share")
    fig.tight_layout()
    return _save(fig, path)


def save_heatmap(path, field) -> Path:
    """One rasterized characteristic field over the electrical plane."""
    fig, ax = plt.subplots(figsize=(5, 4))
    xmin, xmax, ymin, ymax = field.bbox
    im = ax.imshow(field.grid.T, origin="lower",
                   extent=(xmin, xmax, ymin, ymax), aspect="auto",
                   cmap="viridis")
    fig.colorbar(im, ax=ax)
    ax.set_title(field.tag)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    fig.tight_layout()
    return _save(fig, path)


def save_matrix_heatmap(path, M, row_names, col_names, title) -> Path:
    """Correlation-style table with annotated cells."""
    M = np.asarray(M, dtype=float)
    fig, ax = plt.subplots(
        figsize=(1.2 * len(col_names) + 2.5, 0.45 * len(row_names) + 1.5))
    im = ax.imshow(M, cmap="coolwarm", vmin=-1.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(col_names)), col_names, rotation=30, ha="right")
    ax.set_yticks(range(len(row_names)), row_names)
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            ax.text(j, i, f"{M[i, j]:.2f}", ha="center", va="center",
                    fontsize=8)
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def save_cluster_scatter(path, indices, ts: TypicalScenarioSet) -> Path:
    """Severity vs margin scatter, colored by cluster, typicals marked."""
    X = np.asarray(indices, dtype=float)
    assign = ts.clusters.assignments
    fig, ax = plt.subplots(figsize=(6, 4.5))
    cmap = plt.get_cmap("tab10")
    for c in range(ts.clusters.k):
        members = ts.clusters.members(c)
        ax.scatter(X[members, 1], X[members, 0], s=18, alpha=0.7,
                   color=cmap(c % 10),
                   label=f"cluster {c} ({ts.labels[c]})")
    if ts.typical_ids is not None:
        t = list(ts.typical_ids)
        ax.scatter(X[t, 1], X[t, 0], s=160, marker="*", color="black",
                   zorder=5, label="typical")
    ax.set_xlabel("transient stability index")
    ax.set_ylabel("voltage severity (p.u. s)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def save_label_bars(path, report) -> Path:
    """Predicted vs true label counts for the evaluation report."""
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.35
    xs = np.arange(len(LABELS))
    true_counts = [report.true_labels.count(lab) for lab in LABELS]
    pred_counts = [report.predicted_labels.count(lab) for lab in LABELS]
    ax.bar(xs - width / 2, true_counts, width, label="true")
    ax.bar(xs + width / 2, pred_counts, width, label="predicted")
    ax.set_xticks(xs, LABELS)
    ax.set_ylabel("scenarios")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
