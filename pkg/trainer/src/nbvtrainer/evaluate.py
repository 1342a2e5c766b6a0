"""Evaluation of exported weights on a dataset split: per-direction
recall plus macro precision/recall/F1, written as CSV alongside the
confusion matrix they derive from.
"""

from pathlib import Path

import torch

from .data import RecordDataset, load_manifest, load_splits
from .exhw import read_exhw
from .metrics import (confusion_matrix, metrics_from_confusion,
                      write_confusion_csv, write_metrics_csv)
from .model import folded_module


def _split_entry_list(dataset_dir, split):
    if split == "all":
        return sorted(load_manifest(dataset_dir), key=lambda e: e["id"])
    try:
        splits = load_splits(dataset_dir)
    except FileNotFoundError:
        splits = {}
    if split not in splits:
        raise ValueError(f"dataset defines no {split!r} split")
    return splits[split]


def predict(net, data, batch_size=64):
    loader = torch.utils.data.DataLoader(data, batch_size=batch_size)
    net.eval()
    y_true = []
    y_pred = []
    with torch.no_grad():
        for x, y in loader:
            y_pred.extend(net(x).argmax(dim=1).tolist())
            y_true.extend(y.tolist())
    return y_true, y_pred


def evaluate(weights_path, dataset_dir, split, out_dir=None):
    """Run the weights over a split; returns (metrics dict, confusion
    matrix) and, when ``out_dir`` is given, writes both as CSV."""
    variant, _, layers = read_exhw(weights_path)
    entries = _split_entry_list(dataset_dir, split)
    if not entries:
        raise ValueError(f"split {split!r} is empty")
    data = RecordDataset(dataset_dir, entries, variant)
    y_true, y_pred = predict(folded_module(layers), data)
    cm = confusion_matrix(y_true, y_pred)
    metrics = metrics_from_confusion(cm)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out_dir / "metrics.csv",
                          [(variant, split, metrics)])
        write_confusion_csv(out_dir / "confusion.csv", cm)
    return metrics, cm
