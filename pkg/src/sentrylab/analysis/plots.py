"""SVG line charts of run diagnostics.

Figures are written with matplotlib's SVG backend using a fixed hash salt
and no date metadata, so the same data always produces the same file.
Each chart is a single axes with one ``<path>`` per series and a legend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "sentrylab",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
}
FIGSIZE = (4.0, 2.8)
COLORS = ("#0072B2", "#D55E00", "#009E73", "#CC79A7", "#E69F00", "#56B4E9")


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout(pad=0.4)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def line_chart(path, x, series: dict[str, np.ndarray], xlabel="", ylabel="", ylim=None, title=None) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        for (name, y), color in zip(series.items(), COLORS * 4):
            y = np.asarray(y, dtype=float)
            ax.plot(x, y, marker="o", color=color, label=name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if ylim is not None:
            ax.set_ylim(*ylim)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_selection(path, epochs, frac_min, frac_max) -> Path:
    return line_chart(path, epochs, {"entropy min": 100 * np.asarray(frac_min),
                                    "entropy max": 100 * np.asarray(frac_max)},
                      "epoch", "% of seen target instances", (0, 100))


def plot_precision(path, epochs, prec_correct, prec_incorrect) -> Path:
    # absent precision entries arrive as None and are drawn as gaps
    pc = np.array([np.nan if v is None else 100 * v for v in prec_correct])
    pi = np.array([np.nan if v is None else 100 * v for v in prec_incorrect])
    return line_chart(path, epochs, {"consistent = correct": pc, "inconsistent = incorrect": pi},
                      "epoch", "precision (%)", (0, 100))


def plot_accuracy(path, epochs, acc) -> Path:
    a = np.array([np.nan if v is None else 100 * v for v in acc])
    return line_chart(path, epochs, {"target": a}, "epoch", "mean per-class accuracy (%)")


def plot_class_selection(path, first, last) -> Path:
    """Per-class entropy-min share after the first and last epoch."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        c = np.arange(len(first))
        ax.bar(c - 0.2, 100 * np.asarray(first), 0.4, color=COLORS[0], label="first epoch")
        ax.bar(c + 0.2, 100 * np.asarray(last), 0.4, color=COLORS[1], label="last epoch")
        ax.set_xlabel("class")
        ax.set_ylabel("% selected for entropy min")
        ax.set_xticks(c)
        ax.set_ylim(0, 100)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_accuracy_vs_axis(path, x, series: dict[str, np.ndarray], xlabel="imbalance factor") -> Path:
    return line_chart(path, x, {k: 100 * np.asarray(v) for k, v in series.items()},
                      xlabel, "mean per-class accuracy (%)")


def plot_gradient_correlation(path, table) -> Path:
    table = np.asarray(table)
    return line_chart(path, table[:, 0], {"entropy max": table[:, 1], "BCE (true class)": table[:, 2]},
                      "p", "dL/dp")
