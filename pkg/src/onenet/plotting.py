"""Report figures rendered to PNG files with the non-interactive backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METRIC_LABELS = {"domain_acc": "domain acc (%)", "intent_acc": "intent acc (%)", "slot_f1": "slot F1"}


def _save(fig, path):
    fig.tight_layout()
    # no version stamp, so identical figures are identical files
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_training_log(logs: dict, path) -> None:
    """Tuning metrics per epoch for every trained network, one panel per metric."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    for ax, metric in zip(axes, METRIC_LABELS):
        for name, entries in logs.items():
            ys = [e.get(metric) for e in entries]
            if all(y is None for y in ys):
                continue
            xs = np.arange(1, len(ys) + 1)
            ax.plot(xs, [np.nan if y is None else y for y in ys], marker="o", ms=3, label=name)
        ax.set_title(METRIC_LABELS[metric])
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
    handles, labels = axes[0].get_legend_handles_labels()
    for ax in axes[1:]:
        h, l = ax.get_legend_handles_labels()
        for hh, ll in zip(h, l):
            if ll not in labels:
                handles.append(hh)
                labels.append(ll)
    if handles:
        fig.legend(handles, labels, loc="lower center", ncol=min(len(labels), 6), fontsize=8,
                   bbox_to_anchor=(0.5, -0.02))
        fig.subplots_adjust(bottom=0.25)
    _save(fig, path)


def plot_variant_comparison(reports: dict, path) -> None:
    """Grouped bars of the overall metrics for each variant."""
    names = list(reports)
    metrics = list(METRIC_LABELS)
    width = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(8, 4))
    xs = np.arange(len(metrics))
    for k, name in enumerate(names):
        r = reports[name]
        vals = [getattr(r, m) if getattr(r, m) is not None else 0.0 for m in metrics]
        ax.bar(xs + (k - (len(names) - 1) / 2) * width, vals, width, label=name)
    ax.set_xticks(xs)
    ax.set_xticklabels([METRIC_LABELS[m] for m in metrics])
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def plot_per_domain(reports: dict, metric: str, path) -> None:
    """Bars of ``metric`` per gold domain for each variant."""
    names = list(reports)
    domains = sorted({d for r in reports.values() for d in r.per_domain})
    width = 0.8 / max(len(names), 1)
    fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(domains)), 4))
    xs = np.arange(len(domains))
    for k, name in enumerate(names):
        rows = reports[name].per_domain
        vals = [getattr(rows[d], metric) if d in rows and getattr(rows[d], metric) is not None else 0.0
                for d in domains]
        ax.bar(xs + (k - (len(names) - 1) / 2) * width, vals, width, label=name)
    ax.set_xticks(xs)
    ax.set_xticklabels(domains)
    ax.set_ylabel(METRIC_LABELS.get(metric, metric))
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    _save(fig, path)


def plot_gradcheck(report, path) -> None:
    """Maximum relative error per parameter tensor against the tolerance."""
    names = list(report.max_error)
    errs = [max(report.max_error[n], 1e-16) for n in names]
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(names) + 1.5))
    colors = ["tab:green" if e < report.tolerance else "tab:red" for e in report.max_error.values()]
    ax.barh(np.arange(len(names)), errs, color=colors)
    ax.axvline(report.tolerance, color="black", ls="--", lw=1, label=f"tolerance {report.tolerance:g}")
    ax.set_xscale("log")
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels(names, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("max relative error")
    ax.legend(fontsize=8)
    _save(fig, path)
