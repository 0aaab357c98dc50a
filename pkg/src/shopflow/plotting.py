"""Report figures (PNG) rendered with matplotlib's Agg backend.

Figures accompany the text outputs; nothing in the pipeline depends on them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402

from .analytics import COLOR_STOPS  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
}

HEAT_CMAP = LinearSegmentedColormap.from_list("shopflow-heat", COLOR_STOPS / 255.0)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_pr_curves(curves: dict, path, title: str = "Precision-recall") -> Path:
    """``curves`` maps a legend label to a :class:`~shopflow.evalkit.PRCurve`."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.6))
        for (label, c), ls in zip(curves.items(), ("-", "--", ":", "-.") * 4):
            ax.step(c.recall, c.precision, where="post", ls=ls, lw=1.6, label=f"{label} (AP {c.ap:.3f})")
        ax.set_xlim(0.0, 1.02)
        ax.set_ylim(0.0, 1.02)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(title)
        ax.legend(loc="lower left")
        fig.tight_layout()
        return _save(fig, path)


def plot_heatmap(norm, path, background=None, title: str = "") -> Path:
    """Normalized heat map, optionally over a gray background frame."""
    with plt.rc_context(STYLE):
        h, w = norm.shape
        fig, ax = plt.subplots(figsize=(6.0, 6.0 * h / w + 0.6))
        if background is not None:
            ax.imshow(background, cmap="gray", vmin=0, vmax=255, interpolation="nearest")
        im = ax.imshow(norm, cmap=HEAT_CMAP, vmin=0.0, vmax=1.0, alpha=0.6 if background is not None else 1.0,
                       interpolation="nearest")
        ax.set_axis_off()
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.03, pad=0.02)
        fig.tight_layout()
        return _save(fig, path)


def plot_bench(table, path) -> Path:
    """Grouped bars of median sequential and pipelined FPS per batch split."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        xs = range(len(table.rows))
        seq = [r.sequential_fps for r in table.rows]
        pipe = [r.pipelined_fps for r in table.rows]
        ax.bar([x - 0.2 for x in xs], seq, width=0.4, label="sequential")
        ax.bar([x + 0.2 for x in xs], pipe, width=0.4, label="pipelined")
        for x, r in zip(xs, table.rows):
            ax.annotate(f"x{r.ratio:.2f}", (x + 0.2, r.pipelined_fps), ha="center", va="bottom", fontsize=8)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([f"{r.detections_per_batch}/{table.buffer_size}" for r in table.rows])
        ax.set_xlabel("detection frames per buffer")
        ax.set_ylabel("effective FPS (median)")
        ax.legend(loc="upper right")
        fig.tight_layout()
        return _save(fig, path)


def plot_sweep(table, path) -> Path:
    """AP and id switches against the miss threshold."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        m = [r.miss_threshold for r in table.rows]
        ax.plot(m, [r.ap for r in table.rows], "o-", label="tracker AP")
        ax.axhline(table.detector_ap, color="gray", ls="--", label="detector-only AP")
        ax.set_xlabel("miss threshold (detection frames)")
        ax.set_ylabel("AP")
        ax2 = ax.twinx()
        ax2.plot(m, [r.id_switches for r in table.rows], "s:", color="tab:red", label="id switches")
        ax2.set_ylabel("id switches")
        ax2.grid(False)
        lines = ax.get_legend_handles_labels()
        lines2 = ax2.get_legend_handles_labels()
        ax.legend(lines[0] + lines2[0], lines[1] + lines2[1], loc="lower right")
        fig.tight_layout()
        return _save(fig, path)
