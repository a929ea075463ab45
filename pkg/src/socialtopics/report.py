"""Matplotlib report figures rendered to files alongside the delimited
metrics output of the train and evaluate commands."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["plot_train_metrics", "plot_cv_accuracies"]


def plot_train_metrics(history, path):
    """Log-likelihood trace plus hyperparameter traces over iterations."""
    iters = [rec["iteration"] for rec in history]
    fig, (ax_ll, ax_hyp) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax_ll.plot(iters, [rec["log_likelihood"] for rec in history], lw=1.5)
    ax_ll.set_ylabel("joint log-likelihood")
    ax_ll.grid(alpha=0.3)
    for name in ("alpha", "eta", "delta"):
        ax_hyp.plot(iters, [rec[name] for rec in history], lw=1.2, label=name)
    ax_hyp.set_xlabel("iteration")
    ax_hyp.set_ylabel("value")
    ax_hyp.legend(loc="best", fontsize=8)
    ax_hyp.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cv_accuracies(fold_acc_bow, fold_acc_both, path):
    """Per-fold paired accuracies for the two feature sets."""
    folds = range(1, len(fold_acc_bow) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(folds, fold_acc_bow, "o-", label="BoW")
    ax.plot(folds, fold_acc_both, "s-", label="BoW + topic features")
    ax.axhline(sum(fold_acc_bow) / len(fold_acc_bow), color="C0", ls=":", lw=1)
    ax.axhline(sum(fold_acc_both) / len(fold_acc_both), color="C1", ls=":", lw=1)
    ax.set_xlabel("fold")
    ax.set_ylabel("accuracy")
    ax.set_xticks(list(folds))
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
