"""Figures written next to the tab-separated reports."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "savefig.dpi": 120,
}


def _figure(width=6.0, height=None):
    if height is None:
        height = width * (math.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height))


def _save(fig, path):
    fig.tight_layout()
    # no Software/date metadata, so reruns produce identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_precision_curve(report, path):
    """P@k against k, one line per topic plus the mean over topics."""
    ks = [int(c[2:]) for c in report.columns if c.startswith("P@")]
    cols = [f"P@{k}" for k in ks]
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for topic, vals in report.per_topic.items():
            ax.plot(ks, [vals[c] for c in cols], color="0.7", lw=1, marker=".")
        ax.plot(ks, [report.aggregate[c] for c in cols], color="C0", lw=2, marker="o",
                label=f"mean (mAP {report.aggregate['AP']:.4f})")
        ax.set_xlabel("k")
        ax.set_ylabel("precision@k")
        ax.set_ylim(0, 1.05)
        ax.set_xticks(ks)
        ax.legend(loc="lower left")
        _save(fig, path)


def plot_history(history, path):
    epochs = [r.epoch for r in history.epochs]
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        ax1.plot(epochs, [r.train_loss for r in history.epochs], marker="o", label="train")
        ax1.plot(epochs, [r.val_loss for r in history.epochs], marker="s", label="validation")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("cross-entropy")
        ax1.legend()
        ax2.plot(epochs, [r.pos_f1 for r in history.epochs], marker="o", label="positive F1")
        ax2.plot(epochs, [r.neg_f1 for r in history.epochs], marker="s", label="negative F1")
        ax2.plot(epochs, [r.val_acc for r in history.epochs], ls="--", color="0.5", label="accuracy")
        ax2.set_xlabel("epoch")
        ax2.set_ylim(0, 1.05)
        ax2.legend(loc="lower right")
        _save(fig, path)


def plot_score_distribution(scored, qrels, path, bins=20):
    """Histogram of check-worthiness scores split by gold label."""
    pos, neg, other = [], [], []
    for s in scored:
        rel = qrels.get(s.topic_id, {}).get(s.tweet_id) if qrels else None
        (pos if rel == 1 else neg if rel == 0 else other).append(s.score)
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        edges = [-1 + 2 * i / bins for i in range(bins + 1)]
        if pos:
            ax.hist(pos, bins=edges, alpha=0.6, label="check-worthy")
        if neg:
            ax.hist(neg, bins=edges, alpha=0.6, label="not check-worthy")
        if other:
            ax.hist(other, bins=edges, alpha=0.6, label="unjudged")
        ax.set_xlabel("score (p_positive - p_negative)")
        ax.set_ylabel("tweets")
        ax.set_xlim(-1, 1)
        ax.legend()
        _save(fig, path)
