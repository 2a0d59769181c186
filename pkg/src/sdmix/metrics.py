"""Accuracy, per-class precision/recall/F1 and confusion matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    count: int


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """``cm[i, j]`` counts samples of true class i predicted as j."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def metrics_from_confusion(cm: np.ndarray) -> Metrics:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    if total == 0:
        raise ValueError("cannot score an empty prediction set")
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    actual = cm.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(actual > 0, tp / actual, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return Metrics(float(tp.sum() / total), precision, recall, f1, float(f1.mean()), total)


def evaluate(net, dataset) -> tuple[Metrics, np.ndarray]:
    """Argmax-of-logits metrics of ``net`` on a :class:`DomainDataset`."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    X, y = dataset.arrays()
    C = net.arch.num_classes
    if int(y.max()) >= C:
        raise ValueError(f"dataset has class {int(y.max())} but the network scores {C} classes")
    cm = confusion_matrix(y, net.predict(X), C)
    return metrics_from_confusion(cm), cm
