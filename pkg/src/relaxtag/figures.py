"""Matplotlib renderings of the delimited reports, written to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluate import EvalReport  # noqa: E402
from .engine import IterationDiagnostics  # noqa: E402


def plot_norm_sweep(rows: list[dict], path: str) -> None:
    """Convergence iterations and tuning accuracy against the
    normalization factor (same data as the sweep CSV)."""
    kappas = [row["kappa"] for row in rows]
    iters = [row["iterations"] for row in rows]
    accs = [row["accuracy"] for row in rows]
    fig, ax1 = plt.subplots(figsize=(7, 4.5))
    ax1.plot(kappas, iters, "o-", color="tab:blue", label="iterations to convergence")
    ax1.set_xlabel("normalization factor")
    ax1.set_ylabel("iterations", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(kappas, accs, "s--", color="tab:red", label="tuning accuracy")
    ax2.set_ylabel("tuning accuracy", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_diagnostics(diagnostics: IterationDiagnostics, path: str) -> None:
    """Per-iteration distance and support-variation curves."""
    iterations = range(1, diagnostics.iterations + 1)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(iterations, diagnostics.global_distance, label="global distance")
    ax.plot(iterations, diagnostics.avg_distance_per_word, label="avg distance / word")
    ax.plot(iterations, diagnostics.avg_support_variation, label="avg support variation")
    ax.plot(iterations, diagnostics.max_support_variation, label="max support variation")
    ax.set_xlabel("iteration")
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_eval_report(report: EvalReport, path: str) -> None:
    """Bar chart of the scalar accuracy metrics in an eval report."""
    labels, values = [], []
    for key, value in report.fields():
        if isinstance(value, float):
            labels.append(key.replace("_", " "))
            values.append(value)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, values, color="tab:blue")
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score")
    for i, value in enumerate(values):
        ax.text(i, value + 0.01, f"{value:.3f}", ha="center", fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
