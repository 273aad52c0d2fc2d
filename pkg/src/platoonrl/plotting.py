"""Figures for sweep results (V2N rate and delivery probability vs payload)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.figsize": (5.0, 3.6),
    "savefig.dpi": 150,
}

MARKERS = {"exhaustive": "s", "rl": "o", "random": "^"}
LABELS = {"exhaustive": "Exhaustive search", "rl": "Multi-agent DDQN", "random": "Random"}
LINESTYLES = {1: "-", 2: "--"}


def _series(records, metric):
    groups = {}
    for r in records:
        groups.setdefault((r.allocator, r.M), []).append((r.payload_bytes / 1060, getattr(r, metric)))
    return {k: sorted(v) for k, v in sorted(groups.items())}


def plot_metric(records, metric: str, ylabel: str, path, scale: float = 1.0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (alloc, m), pts in _series(records, metric).items():
            xs, ys = zip(*pts)
            ax.plot(xs, [y * scale for y in ys], marker=MARKERS.get(alloc, "x"),
                    linestyle=LINESTYLES.get(m, ":"), label=f"{LABELS.get(alloc, alloc)}, M={m}")
        ax.set_xlabel("Payload size B (x1060 bytes)")
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def render_figures(records, out_dir) -> list[Path]:
    out = Path(out_dir)
    if not records:
        return []
    return [
        plot_metric(records, "avg_v2n_rate_bps", "Average V2N rate (Mbps)", out / "fig_v2n_rate.png", 1e-6),
        plot_metric(records, "delivery_probability", "V2V payload delivery probability", out / "fig_delivery.png"),
    ]
