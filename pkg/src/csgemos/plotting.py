"""Static figures rendered next to the report tables.

All figures use the Agg backend and strip the PNG software tag so
re-rendering the same tables gives byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

PNG_METADATA = {"Software": None}
METHOD_STYLE = {"raw": "-", "emos": "--", "qm": ":", "qmw": "-."}


def _save(fig, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def plot_crps_vs_lead(curves: pd.DataFrame, path):
    """Mean CRPS against lead time, one line per mixture and method."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    mixtures = list(dict.fromkeys(curves["mixture"]))
    colours = plt.cm.viridis(np.linspace(0, 0.9, max(len(mixtures), 1)))
    for colour, mix in zip(colours, mixtures):
        for method, style in METHOD_STYLE.items():
            sub = curves[(curves["mixture"] == mix) & (curves["method"] == method)]
            if sub.empty:
                continue
            ax.plot(sub["lead_time"] / 24.0, sub["mean"], style, color=colour, marker="o", ms=3,
                    label=f"{mix} {method}")
    ax.set_xlabel("lead time (days)")
    ax.set_ylabel("mean CRPS (mm)")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    _save(fig, path)


def plot_skill(skill: pd.DataFrame, path, title: str):
    """Skill scores with bootstrap intervals against lead time."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    groups = list(dict.fromkeys(zip(skill["mixture"], skill["method"])))
    colours = plt.cm.tab10(np.arange(len(groups)) % 10)
    for i, (colour, (mix, method)) in enumerate(zip(colours, groups)):
        sub = skill[(skill["mixture"] == mix) & (skill["method"] == method)]
        x = sub["lead_time"] / 24.0 + 0.04 * (i - len(groups) / 2)
        y = sub["skill"].to_numpy()
        err = np.vstack([y - sub["ci_lo"].to_numpy(), sub["ci_hi"].to_numpy() - y])
        ax.errorbar(x, y, yerr=np.abs(err), fmt="o-", ms=3, lw=1, capsize=2, color=colour, label=f"{mix} {method}")
    ax.axhline(0.0, color="grey", lw=0.8)
    ax.set_xlabel("lead time (days)")
    ax.set_ylabel("skill")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    _save(fig, path)


def plot_reliability(table: pd.DataFrame, path, title: str):
    """Reliability diagram with an inset of log10 bin frequencies."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8)
    occupied = table[table["count"] > 0]
    ax.plot(occupied["mean_prob"], occupied["obs_freq"], "o-", ms=3)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("forecast probability")
    ax.set_ylabel("observed frequency")
    ax.set_title(title, fontsize=9)
    inset = ax.inset_axes([0.08, 0.62, 0.33, 0.3])
    n_bins = len(table)
    inset.bar((table["bin"] + 0.5) / n_bins, table["log10_freq"].fillna(0.0), width=0.8 / n_bins, color="C1")
    inset.set_xlim(0, 1)
    inset.tick_params(labelsize=5)
    inset.set_ylabel("log10 freq", fontsize=5)
    fig.tight_layout()
    _save(fig, path)
