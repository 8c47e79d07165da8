"""Evaluation metrics and the per-dataset evaluation report."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int | None = None) -> np.ndarray:
    """Rows index the true class, columns the predicted class."""
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def per_class_recall(cm: np.ndarray) -> np.ndarray:
    totals = cm.sum(axis=1)
    if (totals == 0).any():
        raise ValueError("every true class must have at least one instance")
    return np.diag(cm) / totals


def balanced_accuracy(y_true, y_pred) -> float:
    """Unweighted mean of per-class recall over the classes present in y_true."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("cannot score an empty prediction set")
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    recalls = [float((y_pred[y_true == cls] == cls).mean())
               for cls in np.unique(y_true)]
    return float(np.mean(recalls))


@dataclass
class EvalReport:
    balanced_accuracy: float
    confusion_matrix: np.ndarray
    per_class_recall: np.ndarray
    n_instances: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON-ready form; recall is None for classes absent from y_true
        (NaN is not valid JSON)."""
        return {
            "balanced_accuracy": self.balanced_accuracy,
            "confusion_matrix": self.confusion_matrix.tolist(),
            "per_class_recall": [None if np.isnan(r) else float(r)
                                 for r in self.per_class_recall],
            "n_instances": self.n_instances,
            "meta": dict(self.meta),
        }


def evaluate(model, dataset, meta: dict | None = None) -> EvalReport:
    """Score ``model.predict`` on a dataset; fails if shapes are incompatible.

    The report proper is a pure function of (model, dataset); volatile
    context like timestamps belongs in ``meta``.
    """
    predictions = np.asarray(model.predict(dataset.images))
    n_classes = max(dataset.n_classes, int(predictions.max()) + 1)
    cm = confusion_matrix(dataset.labels, predictions, n_classes)
    totals = cm.sum(axis=1)
    recall = np.where(totals > 0, np.diag(cm) / np.maximum(totals, 1), np.nan)
    return EvalReport(
        balanced_accuracy=balanced_accuracy(dataset.labels, predictions),
        confusion_matrix=cm,
        per_class_recall=recall,
        n_instances=len(dataset),
        meta=meta or {},
    )
