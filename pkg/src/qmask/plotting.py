"""Figures written next to the CLI's tables and traces."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from qmask.cost import Table  # noqa: E402
from qmask.state import MeasurementRecord  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (5.0, 3.2),
    "svg.hashsalt": "qmask",
}


def plot_cost_table(table: Table, x: str, path: str | Path) -> Path:
    """Masked and baseline cost against one swept parameter, log-log."""
    path = Path(path)
    xs = table.column(x)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(xs, table.column("total"), "o-", label="masked")
        if "baseline" in table.columns:
            ax.plot(xs, table.column("baseline"), "s--", label="baseline")
        if len(set(xs)) > 1:
            ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel(x)
        ax.set_ylabel("Toffoli-equivalent gates")
        ax.set_title(table.title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_marginal(record: MeasurementRecord, path: str | Path, title: str = "") -> Path:
    """Bar chart of a measured register's exact pre-measurement distribution."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(record.outcomes, record.probabilities, width=1.0, color="0.35")
        ax.axvline(record.outcome, color="C3", lw=1, label=f"outcome {record.outcome}")
        ax.set_xlabel(f"value of {record.label}")
        ax.set_ylabel("probability")
        ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
