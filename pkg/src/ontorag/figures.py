"""Matplotlib figures written next to the CSV/JSON evaluation report."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

if TYPE_CHECKING:
    from ontorag.evaluation import EvalReport

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "savefig.bbox": "tight",
}


def _colors(n: int) -> list:
    cmap = plt.get_cmap("tab10")
    return [cmap(i % 10) for i in range(n)]


def plot_entity_recall(report: EvalReport, path: Path) -> Path:
    methods = report.methods()
    values = [[r.c_erec for r in report.rows if r.method == m] for m in methods]
    means = [sum(v) / len(v) for v in values]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        bars = ax.bar(methods, means, color=_colors(len(methods)))
        for bar, mean in zip(bars, means):
            ax.annotate(f"{mean:.2f}", (bar.get_x() + bar.get_width() / 2, mean),
                        ha="center", va="bottom", fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("mean context entity recall")
        ax.set_title(f"Context entity recall ({len(values[0])} questions)")
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_latency(report: EvalReport, path: Path) -> Path:
    methods = report.methods()
    data = [[r.latency_ms for r in report.rows if r.method == m] for m in methods]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.boxplot(data, tick_labels=methods, showfliers=True)
        ax.set_ylabel("retrieval latency (ms)")
        ax.set_title("Per-question retrieval latency")
        fig.savefig(path)
        plt.close(fig)
    return path


def render_report_figures(report: EvalReport, out_dir: Path, prefix: str = "report") -> list[Path]:
    out_dir = Path(out_dir)
    return [
        plot_entity_recall(report, out_dir / f"{prefix}_c_erec.png"),
        plot_latency(report, out_dir / f"{prefix}_latency.png"),
    ]
