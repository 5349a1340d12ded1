"""Report figures, rendered off-screen to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .gait import RESIDUAL_COLUMNS  # noqa: E402

# PNG metadata carries a timestamp by default; drop it so reruns give identical files
_SAVE = dict(dpi=120, metadata={"Software": None})


def consistency_figure(runs, path) -> None:
    """Fraction of confident detections within d pixels, one line per run."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for r in runs:
        d = r.curves[0][:, 0]
        f = np.nanmean(np.stack([c[:, 1] for c in r.curves]), axis=0)
        ax.plot(d, f, label=r.method)
    ax.set_xlabel("threshold d (px)")
    ax.set_ylabel("fraction within d")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def residual_figure(runs, path) -> None:
    """Histograms of gait residuals (mm) per residual type."""
    fig, axes = plt.subplots(2, 4, figsize=(13, 6))
    for ax, col in zip(axes.ravel(), RESIDUAL_COLUMNS):
        for r in runs:
            v = r.residuals[col]
            v = v[np.isfinite(v)]
            if v.size:
                ax.hist(v, bins=20, histtype="step", label=r.method)
        ax.set_title(col.replace("_", " "))
        ax.set_xlabel("mm")
    axes.ravel()[-1].axis("off")
    handles, labels = axes.ravel()[0].get_legend_handles_labels()
    if handles:
        axes.ravel()[-1].legend(handles, labels, loc="center")
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def loss_figure(runs, path) -> None:
    """Total loss against step for runs that optimized."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for r in runs:
        for i, curve in enumerate(r.loss_curves):
            steps = [p["step"] for p in curve]
            total = [p["total"] for p in curve]
            ax.plot(steps, total, label=r.method if i == 0 else None)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("total loss")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
