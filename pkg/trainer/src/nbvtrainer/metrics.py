"""Classification metrics: confusion matrix, per-class recall, macro
precision/recall/F1, and their CSV serializations.

Every reported number is derived from the integer confusion matrix, so
recomputing from the dumped matrix reproduces the report exactly.
"""

import csv

import numpy as np

from .data import LABELS


def confusion_matrix(y_true, y_pred, n_classes=len(LABELS)):
    """Rows are true classes, columns predicted classes."""
    y_true = np.asarray(y_true, np.int64)
    y_pred = np.asarray(y_pred, np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label/prediction length mismatch")
    cm = np.zeros((n_classes, n_classes), np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def metrics_from_confusion(cm):
    """Per-class recall plus macro precision/recall/F1 and accuracy."""
    cm = np.asarray(cm, np.int64)
    diag = np.diag(cm).astype(np.float64)
    row = cm.sum(axis=1).astype(np.float64)
    col = cm.sum(axis=0).astype(np.float64)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    pr = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr,
                   out=np.zeros_like(diag), where=pr > 0)
    total = float(cm.sum())
    out = {"count": int(total),
           "accuracy": float(diag.sum() / total) if total else 0.0,
           "precision": float(precision.mean()),
           "recall": float(recall.mean()),
           "f1": float(f1.mean())}
    for i, label in enumerate(LABELS):
        out[f"recall_{label.lower()}"] = float(recall[i])
    return out


METRIC_COLUMNS = ("count", "accuracy",
                  *(f"recall_{label.lower()}" for label in LABELS),
                  "precision", "recall", "f1")


def write_metrics_csv(path, rows):
    """Write Table-style rows: one per (variant, split) evaluation."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("variant", "split", *METRIC_COLUMNS))
        for variant, split, metrics in rows:
            writer.writerow((variant, split, metrics["count"],
                             *(f"{metrics[c]:.9f}"
                               for c in METRIC_COLUMNS[1:])))


def write_confusion_csv(path, cm):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("true\\pred", *LABELS))
        for label, counts in zip(LABELS, np.asarray(cm)):
            writer.writerow((label, *(int(c) for c in counts)))


def read_confusion_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if [r[0] for r in rows[1:]] != list(LABELS) or rows[0][1:] != list(LABELS):
        raise ValueError("confusion matrix CSV has unexpected labels")
    return np.array([[int(v) for v in r[1:]] for r in rows[1:]], np.int64)
