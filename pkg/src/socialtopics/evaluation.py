"""Label-prediction validation harness: bag-of-words features, an
L2-regularized logistic-loss linear classifier, and seeded k-fold
cross-validation with a paired design.

The classifier is a deliberately plain deterministic full-batch
gradient-descent solver (Armijo backtracking), so the objective decreases
monotonically and the gradient can be checked by finite differences.
Accuracy deltas between feature sets, not absolute parity with any
particular SVM solver, are what the harness is for.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .corpus import Dataset
from .errors import DataError
from .rng import CV_SHUFFLE, substream

__all__ = [
    "bow_features",
    "bow_matrix",
    "concat_features",
    "LinearClassifier",
    "train_linear_classifier",
    "CVResult",
    "cross_validate",
]


def bow_features(dataset: Dataset, p: int) -> np.ndarray:
    """Normalized word frequencies over all of user p's documents; the zero
    vector when the user has no words."""
    V = dataset.n_tokens
    vec = np.zeros(V)
    for doc in dataset.users[p].docs:
        for w in doc:
            vec[w] += 1.0
    total = vec.sum()
    if total > 0:
        vec /= total
    return vec


def bow_matrix(dataset: Dataset) -> np.ndarray:
    return np.stack([bow_features(dataset, p) for p in range(dataset.n_users)])


def concat_features(bow: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """BoW block first, topic block second; works on vectors or matrices."""
    bow = np.asarray(bow, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if bow.ndim != theta.ndim:
        raise DataError(
            f"dimension mismatch: bow is {bow.ndim}-d, theta is {theta.ndim}-d"
        )
    axis = bow.ndim - 1
    if bow.ndim == 2 and bow.shape[0] != theta.shape[0]:
        raise DataError(
            f"row mismatch: {bow.shape[0]} bow rows vs {theta.shape[0]} theta rows"
        )
    return np.concatenate([bow, theta], axis=axis)


@dataclass
class LinearClassifier:
    w: np.ndarray
    b: float
    n_iter: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list, repr=False)

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.w + self.b

    def predict(self, X: np.ndarray) -> np.ndarray:
        # ties at exactly zero go to +1
        return np.where(self.decision(X) >= 0, 1, -1)


def _objective(X, y, w, b, reg):
    margins = y * (X @ w + b)
    return float(np.logaddexp(0.0, -margins).sum() + 0.5 * reg * (w @ w))


def _gradient(X, y, w, b, reg):
    margins = y * (X @ w + b)
    coef = -y * expit(-margins)
    gw = X.T @ coef + reg * w
    gb = float(coef.sum())
    return gw, gb


def train_linear_classifier(
    X: np.ndarray,
    y: np.ndarray,
    reg: float = 1.0,
    tol: float = 1e-6,
    max_iters: int = 10_000,
) -> LinearClassifier:
    """Fit sum logistic loss + (reg/2)||w||^2 (bias unregularized) by
    backtracking gradient descent from zero until the gradient norm drops
    to tol or max_iters is hit. Convex with reg > 0, so the optimum is
    unique and the run is deterministic."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    classes = np.unique(y)
    if not np.all(np.isin(classes, (-1.0, 1.0))):
        raise DataError(f"labels must be +1/-1, got {classes}")
    if len(classes) < 2:
        raise DataError("need at least one example of each class")

    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    step = 1.0
    obj = _objective(X, y, w, b, reg)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        gw, gb = _gradient(X, y, w, b, reg)
        gnorm2 = float(gw @ gw) + gb * gb
        if gnorm2 <= tol * tol:
            converged = True
            break
        step = min(step * 2.0, 1e6)
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            obj_new = _objective(X, y, w_new, b_new, reg)
            # Armijo: enough decrease or shrink the step
            if obj_new <= obj - 0.5 * step * gnorm2 or step < 1e-18:
                break
            step *= 0.5
        w, b, obj = w_new, b_new, obj_new
        trace.append(obj)
    return LinearClassifier(
        w=w, b=b, n_iter=it, converged=converged, objective_trace=trace
    )


@dataclass
class CVResult:
    fold_accuracies: list[float]
    mean_accuracy: float
    correct: int
    total: int
    # predictions and truths for all labeled users, in labeled-user order,
    # so two runs with the same seed can be compared pair by pair
    predictions: np.ndarray
    y_true: np.ndarray
    fold_sizes: list[int]


def _fit_fold(args):
    X_train, y_train, X_test, reg = args
    clf = train_linear_classifier(X_train, y_train, reg=reg)
    return clf.predict(X_test)


def cross_validate(
    dataset: Dataset,
    features: np.ndarray,
    folds: int,
    seed: int,
    reg: float = 1.0,
    threads: int = 1,
) -> CVResult:
    """Seeded shuffled k-fold CV over the labeled users.

    The shuffle depends only on (seed, labeled-user count), so runs on
    different feature sets with the same seed use identical folds -- a
    paired design whose per-user predictions line up one to one. Folds are
    independent and train in parallel when threads > 1; results are
    identical either way.
    """
    if folds < 2:
        raise DataError(f"folds must be >= 2, got {folds}")
    labeled = [i for i, u in enumerate(dataset.users) if u.label is not None]
    n = len(labeled)
    if n < folds:
        raise DataError(f"insufficient labeled users: {n} < {folds} folds")
    features = np.asarray(features, dtype=float)
    y_all = np.array([float(dataset.users[i].label) for i in labeled])
    X_all = features[labeled]

    order = np.arange(n)
    substream(seed, CV_SHUFFLE).shuffle(order)
    bounds = np.linspace(0, n, folds + 1).astype(int)

    splits = []
    for fi in range(folds):
        test_idx = order[bounds[fi] : bounds[fi + 1]]
        train_idx = np.concatenate([order[: bounds[fi]], order[bounds[fi + 1] :]])
        splits.append((train_idx, test_idx))
    tasks = [
        (X_all[tr], y_all[tr], X_all[te], reg) for tr, te in splits
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            fold_preds = list(pool.map(_fit_fold, tasks))
    else:
        fold_preds = [_fit_fold(t) for t in tasks]

    predictions = np.zeros(n)
    fold_acc = []
    fold_sizes = []
    for (_, test_idx), pred in zip(splits, fold_preds):
        predictions[test_idx] = pred
        fold_acc.append(float(np.mean(pred == y_all[test_idx])))
        fold_sizes.append(len(test_idx))
    correct = int(np.sum(predictions == y_all))
    return CVResult(
        fold_accuracies=fold_acc,
        mean_accuracy=float(np.mean(fold_acc)),
        correct=correct,
        total=n,
        predictions=predictions,
        y_true=y_all,
        fold_sizes=fold_sizes,
    )
