"""Figure rendering for analysis outputs.

Each report command writes its delimited output (CSV / JSON lines) and a
matplotlib figure next to it. Figures use the Agg backend so rendering
works headless.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reembedder import read_gate_csv  # noqa: E402


def gate_frequency_correlation(frequencies, means) -> float:
    """Pearson correlation between log10(1 + frequency) and mean gate."""
    freq = np.log10(1.0 + np.asarray(frequencies, dtype=np.float64))
    gates = np.asarray(means, dtype=np.float64)
    if len(freq) < 2 or freq.std() == 0 or gates.std() == 0:
        return float("nan")
    return float(np.corrcoef(freq, gates)[0, 1])


def render_gate_figure(csv_path, png_path=None) -> tuple[Path, float]:
    """Scatter of word-type frequency vs mean gate activation.

    Returns the figure path and the log-frequency/gate correlation that
    is annotated on the plot.
    """
    rows = read_gate_csv(csv_path)
    png_path = Path(png_path) if png_path else Path(csv_path).with_suffix(".png")
    freqs = [r[1] for r in rows]
    means = [r[2] for r in rows]
    corr = gate_frequency_correlation(freqs, means)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([f + 1 for f in freqs], means, s=12, alpha=0.55, edgecolors="none")
    ax.set_xscale("log")
    ax.set_xlabel("word-type corpus frequency (+1)")
    ax.set_ylabel("mean gate activation")
    ax.set_ylim(0.0, 1.0)
    ax.set_title("Gate activation vs. word frequency")
    label = "r = n/a" if math.isnan(corr) else f"r = {corr:.3f}"
    ax.annotate(label, xy=(0.02, 0.04), xycoords="axes fraction")
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(png_path, dpi=130)
    plt.close(fig)
    return png_path, corr


def render_training_figure(log_path, png_path=None) -> Path:
    """Loss curve plus periodic dev EM/F1 from a training log."""
    log_path = Path(log_path)
    png_path = Path(png_path) if png_path else log_path.with_suffix(".png")
    steps_l, losses, steps_e, ems, f1s = [], [], [], [], []
    with open(log_path, encoding="utf-8") as f:
        for line in f:
            rec = json.loads(line)
            if "loss" in rec:
                steps_l.append(rec["step"])
                losses.append(rec["loss"])
            elif "em" in rec:
                steps_e.append(rec["step"])
                ems.append(rec["em"])
                f1s.append(rec["f1"])

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps_l, losses, lw=1.0, label="train loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if steps_e:
        ax2 = ax.twinx()
        ax2.plot(steps_e, ems, "o-", color="tab:green", ms=3, label="dev EM")
        ax2.plot(steps_e, f1s, "s-", color="tab:orange", ms=3, label="dev F1")
        ax2.set_ylabel("EM / F1 (%)")
        ax2.set_ylim(0, 102)
        lines, labels = ax.get_legend_handles_labels()
        lines2, labels2 = ax2.get_legend_handles_labels()
        ax.legend(lines + lines2, labels + labels2, loc="center right", fontsize=8)
    else:
        ax.legend(loc="upper right", fontsize=8)
    ax.set_title("Training progress")
    fig.tight_layout()
    fig.savefig(png_path, dpi=130)
    plt.close(fig)
    return png_path
