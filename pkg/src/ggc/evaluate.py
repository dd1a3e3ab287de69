"""ROC curves, AUC, and the k-fold test protocol with mean/std reporting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import EvalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RocCurve:
    """Operating points swept over descending score thresholds.

    Points start at (0, 0), end at (1, 1), and are monotone nondecreasing in
    both coordinates; auc is the trapezoid-rule area under the curve.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        fpr.setflags(write=False)
        tpr.setflags(write=False)
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)
        object.__setattr__(self, "auc", float(self.auc))


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve and AUC for binary labels under a continuous score.

    Equal scores collapse into a single threshold step, so ties contribute
    diagonal segments whose trapezoid area matches the half-credit
    convention.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if scores.shape != labels.shape:
        raise EvalError("scores and labels differ in length")
    if scores.size == 0:
        raise EvalError("cannot compute a ROC curve without samples")
    if not np.all(np.isfinite(scores)):
        raise EvalError("scores must be finite")
    positives = int(np.sum(labels == 1))
    negatives = int(np.sum(labels == 0))
    if positives + negatives != labels.size:
        raise EvalError("labels must be 0 or 1")
    if positives == 0 or negatives == 0:
        raise EvalError("cannot compute a ROC curve from a single class")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each tied group of equal scores
    group_ends = np.append(np.nonzero(np.diff(sorted_scores))[0], scores.size - 1)
    tp = np.cumsum(sorted_labels)[group_ends]
    fp = np.cumsum(1 - sorted_labels)[group_ends]
    tpr = np.concatenate([[0.0], tp / positives])
    fpr = np.concatenate([[0.0], fp / negatives])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) * 0.5))
    return RocCurve(fpr, tpr, auc)


@dataclass(frozen=True)
class KfoldResult:
    """Per-fold AUCs with their mean and sample standard deviation."""

    fold_aucs: tuple
    mean: float
    std: float
    excluded: tuple
    degenerate: bool


def kfold_auc(scores, labels, k=5, seed=42) -> KfoldResult:
    """AUC mean and sample std over k contiguous folds of a seeded shuffle.

    The first (n mod k) folds take one extra sample. Folds missing a class
    are excluded with a warning; with fewer than two usable folds the std is
    reported as 0 and the result is flagged degenerate.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if scores.shape != labels.shape:
        raise EvalError("scores and labels differ in length")
    k = int(k)
    if k < 1 or k > scores.size:
        raise EvalError(f"fold count {k} must lie in [1, {scores.size}]")
    perm = np.random.default_rng(seed).permutation(scores.size)

    base, extra = divmod(scores.size, k)
    fold_aucs = []
    excluded = []
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        idx = perm[start : start + size]
        start += size
        try:
            fold_aucs.append(roc_auc(scores[idx], labels[idx]).auc)
        except EvalError:
            excluded.append(fold)
            log.warning("fold %d lacks a class and was excluded", fold)
    if not fold_aucs:
        raise EvalError("every fold lacks a class")
    degenerate = len(fold_aucs) < 2
    mean = float(np.mean(fold_aucs))
    std = 0.0 if degenerate else float(np.std(fold_aucs, ddof=1))
    return KfoldResult(tuple(fold_aucs), mean, std, tuple(excluded), degenerate)


def write_roc_csv(path, curve: RocCurve):
    """Write ROC operating points as a two-column CSV."""
    lines = ["fpr,tpr"]
    for f, t in zip(curve.fpr.tolist(), curve.tpr.tolist()):
        lines.append(f"{f!r},{t!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def plot_roc_svg(path, curves):
    """Plot named ROC curves plus the random-classifier diagonal to an SVG.

    curves maps a legend label to a RocCurve.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    for name, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, label=f"{name} (AUC={curve.auc:.3f})")
    ax.plot([0.0, 1.0], [0.0, 1.0], "k--", linewidth=0.8, label="random")
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


SUMMARY_FIELDS = ("paradigm", "autoencoder", "classifier", "mean_auc", "std_auc")


def write_summary_csv(path, rows):
    """Write one summary row per evaluated model configuration.

    Each row maps the SUMMARY_FIELDS keys to values; floats are written with
    repr so a rerun produces byte-identical output.
    """
    lines = [",".join(SUMMARY_FIELDS)]
    for row in rows:
        cells = []
        for field in SUMMARY_FIELDS:
            value = row[field]
            cells.append(repr(float(value)) if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
