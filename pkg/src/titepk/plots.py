"""Figure rendering for the CLI report paths.

Figures are written next to the delimited outputs; PNG metadata is pinned
so repeated runs stay byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .escalation import DecisionTable
from .simulate import StudyResult

_PNG_META = {"Software": "titepk"}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def render_study_figure(study: StudyResult, path: Path) -> Path:
    """Selection classification and schedule-selection bars for one study."""
    oc = study.oc
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    kinds = ["target", "overdosing", "underdosing", "none"]
    values = [oc.p_select_tt, oc.p_select_od, oc.p_select_ud, oc.p_select_none]
    ax1.bar(kinds, values, color=["#2a9d8f", "#e76f51", "#8ab17d", "#999999"])
    ax1.set_ylim(0, 1)
    ax1.set_ylabel("probability")
    ax1.set_title(f"MTC selection ({study.scenario_label}, {oc.n_trials} trials)")
    ax1.tick_params(axis="x", rotation=20)

    labels = list(oc.schedule_selection)
    ax2.bar(labels, [oc.schedule_selection[k] for k in labels], color="#264653")
    ax2.set_ylim(0, 1)
    ax2.set_title("schedule selected as part of MTC")
    fig.tight_layout()
    return _save(fig, path)


def render_decision_figure(table: DecisionTable, path: Path) -> Path:
    """Stacked interval probabilities per combination with eligibility marks."""
    labels = [row.combination.label for row in table.rows]
    under = np.asarray([row.p_under for row in table.rows])
    target = np.asarray([row.p_target for row in table.rows])
    over = np.asarray([row.p_over for row in table.rows])
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(labels)), 3.8))
    ax.bar(x, under, label="underdosing", color="#8ab17d")
    ax.bar(x, target, bottom=under, label="targeted toxicity", color="#2a9d8f")
    ax.bar(x, over, bottom=under + target, label="overdosing", color="#e76f51")
    ax.axhline(1.0 - table.feasibility_bound, color="black", lw=0.8, ls="--")
    for i, row in enumerate(table.rows):
        if not row.ewoc_ok:
            ax.text(i, 1.02, "x", ha="center", fontsize=9)
        if table.recommendation == row.combination:
            ax.text(i, 1.02, "*", ha="center", fontsize=12, color="#2a9d8f")
    ax.set_xticks(x, labels, rotation=45)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("posterior probability")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def render_exposure_figure(times: np.ndarray, exposure: np.ndarray,
                           cumulative: np.ndarray, path: Path, title: str = "") -> Path:
    """Exposure and cumulative-exposure curves over the sampled window."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax1.plot(times / 24.0, exposure, color="#264653", lw=0.9)
    ax1.set_ylabel("E(t)")
    if title:
        ax1.set_title(title)
    ax2.plot(times / 24.0, cumulative, color="#2a9d8f", lw=1.2)
    ax2.set_ylabel("cumulative exposure")
    ax2.set_xlabel("time (days)")
    fig.tight_layout()
    return _save(fig, path)
