"""Accuracy / average F-measure and the ten-fold cross-validation protocol."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset, apply_normalizer, fit_normalizer

log = logging.getLogger(__name__)


def _check_pair(preds, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.int64).reshape(-1)
    t = np.asarray(truth, dtype=np.int64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError("predictions and truth differ in length")
    if p.size == 0:
        raise ValueError("no predictions to score")
    return p, t


def confusion_matrix(preds, truth, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    p, t = _check_pair(preds, truth)
    if max(p.max(), t.max()) >= n_classes or min(p.min(), t.min()) < 0:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def generalization_accuracy(preds, truth) -> float:
    p, t = _check_pair(preds, truth)
    return 100.0 * np.count_nonzero(p == t) / p.size


def accuracy_from_confusion(cm) -> float:
    cm = np.asarray(cm)
    return 100.0 * np.trace(cm) / cm.sum()


def f_measure_from_confusion(cm, average: str = "macro") -> float:
    """Per-class F1 averaged over all classes (0 where undefined).

    ``average="micro"`` pools counts before computing one F1, which for
    single-label data equals accuracy.
    """
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    if average == "micro":
        tp, fp, fn = tp.sum(keepdims=True), fp.sum(keepdims=True), fn.sum(keepdims=True)
    elif average != "macro":
        raise ValueError(f"unknown average {average!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        rec = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    return 100.0 * float(f1.mean())


def avg_f_measure(preds, truth, n_classes: int, average: str = "macro") -> float:
    return f_measure_from_confusion(confusion_matrix(preds, truth, n_classes), average)


# -------------------------------------------------------------------------- folds


def stratified_folds(labels, n_folds: int = 10, seed: int = 0) -> tuple[np.ndarray, bool]:
    """Fold id per sample.  Falls back to plain shuffled folds (second value
    False) when a class has fewer samples than folds."""
    y = np.asarray(labels, dtype=np.int64)
    if len(y) < n_folds:
        raise ValueError(f"need at least {n_folds} samples for {n_folds}-fold CV")
    rng = np.random.default_rng(seed)
    counts = np.bincount(y)
    present = counts[counts > 0]
    fold = np.empty(len(y), dtype=np.int64)
    if present.min() < n_folds:
        fold[rng.permutation(len(y))] = np.arange(len(y)) % n_folds
        return fold, False
    offset = 0
    for c in np.flatnonzero(counts):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = (offset + np.arange(len(idx))) % n_folds
        offset += len(idx)
    return fold, True


@dataclass
class FoldResult:
    fold: int
    ga: float
    avg_fm: float
    confusion: list
    test_indices: list
    train_stats: dict = field(default_factory=dict)


@dataclass
class EvalReport:
    per_fold: list[FoldResult]
    mean_ga: float
    mean_avg_fm: float
    config_echo: dict
    stratified: bool = True
    seed: int = 0

    @property
    def std_ga(self) -> float:
        return float(np.std([f.ga for f in self.per_fold]))

    def to_dict(self) -> dict:
        return {
            "mean_ga": self.mean_ga,
            "mean_avg_fm": self.mean_avg_fm,
            "stratified": self.stratified,
            "seed": self.seed,
            "config": self.config_echo,
            "folds": [asdict(f) for f in self.per_fold],
        }

    def csv_rows(self, dataset: str, method: str) -> list[dict]:
        return [{"dataset": dataset, "method": method, "fold": f.fold, "ga": f.ga, "avg_fm": f.avg_fm}
                for f in self.per_fold]


def _config_dict(cfg) -> dict:
    if hasattr(cfg, "to_dict"):
        return cfg.to_dict()
    if cfg is None:
        return {}
    return dict(cfg)


def _run_fold(data: Dataset, fold_ids: np.ndarray, k: int, cfg, trainer, normalizer_kind: str | None) -> FoldResult:
    test_idx = np.flatnonzero(fold_ids == k)
    train = data.subset(np.flatnonzero(fold_ids != k))
    test = data.subset(test_idx)
    stats = {}
    if normalizer_kind:
        norm = fit_normalizer(train, normalizer_kind)
        train, test = apply_normalizer(train, norm), apply_normalizer(test, norm)
        stats = norm.to_dict()
    model = trainer(train, cfg)
    preds = np.asarray(model.predict(test.features))
    cm = confusion_matrix(preds, test.labels, data.n_classes)
    return FoldResult(k, accuracy_from_confusion(cm), f_measure_from_confusion(cm),
                      cm.tolist(), test_idx.tolist(), stats)


def ten_fold_cv(data: Dataset, cfg, trainer: Callable, n_folds: int = 10, seed: int = 0,
                normalizer_kind: str | None = "minmax", jobs: int = 1) -> EvalReport:
    """Seeded stratified k-fold CV with per-fold normalization.

    ``trainer(train_dataset, cfg)`` must return an object whose
    ``predict(X)`` gives class ids.  Normalization statistics come from the
    training split only.
    """
    counts = data.class_counts()
    if np.any(counts == 0):
        raise ValueError(f"classes {np.flatnonzero(counts == 0).tolist()} have no samples")
    fold_ids, stratified = stratified_folds(data.labels, n_folds, seed)
    if not stratified:
        warnings.warn("a class has fewer samples than folds; using unstratified folds", RuntimeWarning)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_fold, data, fold_ids, k, cfg, trainer, normalizer_kind)
                       for k in range(n_folds)]
            folds = [f.result() for f in futures]
    else:
        folds = [_run_fold(data, fold_ids, k, cfg, trainer, normalizer_kind) for k in range(n_folds)]
    folds.sort(key=lambda f: f.fold)
    return EvalReport(folds, float(np.mean([f.ga for f in folds])), float(np.mean([f.avg_fm for f in folds])),
                      _config_dict(cfg), stratified, seed)
