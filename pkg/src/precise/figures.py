"""Matplotlib renderings of reports, written next to the delimited outputs.

All figures are rendered headlessly to PNG with fixed parameters and no
software metadata, so rerunning a command reproduces the files byte for byte.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def estimate_figure(estimates, path: str | Path) -> None:
    """Point estimates with confidence whiskers, one column per estimator."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    xs = np.arange(len(estimates))
    values = [e.value * 100 for e in estimates]
    lows = [(e.value - e.ci[0]) * 100 for e in estimates]
    highs = [(e.ci[1] - e.value) * 100 for e in estimates]
    ax.errorbar(xs, values, yerr=[lows, highs], fmt="o", capsize=4, color="C0")
    ax.set_xticks(xs)
    ax.set_xticklabels([e.estimator for e in estimates])
    ax.set_ylabel("metric (%)")
    levels = {e.level for e in estimates}
    level_text = f"{min(levels):g}" if len(levels) == 1 else "mixed"
    ax.set_title(f"Estimates with {level_text} confidence intervals")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def sampling_figure(report, path: str | Path) -> None:
    """Overlaid per-trial estimate histograms with the pool truth marked."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    all_values = np.concatenate(
        [np.asarray(s.estimates) * 100 for s in report.estimators.values()]
    )
    edges = np.histogram_bin_edges(all_values, bins=min(30, max(10, report.trials // 4)))
    for name, summary in report.estimators.items():
        ax.hist(np.asarray(summary.estimates) * 100, bins=edges, alpha=0.45, label=name)
    ax.axvline(report.truth * 100, color="black", linestyle="--", linewidth=1.2, label="truth")
    ax.set_xlabel("estimate (%)")
    ax.set_ylabel("trials")
    ax.set_title(f"Sampling distributions (n={report.n}, N={report.N}, {report.trials} trials)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def ablation_figure(reports, path: str | Path) -> None:
    """Std-error against unlabeled pool size, one line per estimator."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    sizes = [r.N for r in reports]
    names = list(reports[0].estimators)
    for name in names:
        ses = [r.estimators[name].std_error for r in reports]
        ax.plot(sizes, ses, marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("unlabeled queries")
    ax.set_ylabel("std error (points)")
    ax.set_title(f"Unlabeled-size ablation (n={reports[0].n}, {reports[0].trials} trials)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def calibration_figure(diagnostics, path: str | Path) -> None:
    """Label-split histogram of raw annotator scores."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    los = np.array([b[0] for b in diagnostics.bins])
    tp = np.array([b[2] for b in diagnostics.bins])
    tn = np.array([b[3] for b in diagnostics.bins])
    width = diagnostics.bin_width
    ax.bar(los + width * 0.25, tp, width=width * 0.4, label="relevant", color="C0")
    ax.bar(los + width * 0.65, tn, width=width * 0.4, label="irrelevant", color="C3")
    ax.set_xlabel("raw score")
    ax.set_ylabel("documents")
    parts = []
    if diagnostics.frac_positive_high is not None:
        parts.append(f"P(score>=0.5 | rel)={diagnostics.frac_positive_high:.2f}")
    if diagnostics.frac_negative_low is not None:
        parts.append(f"P(score<=0.4 | irr)={diagnostics.frac_negative_low:.2f}")
    ax.set_title("Score separation by gold label" + (": " + ", ".join(parts) if parts else ""))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
