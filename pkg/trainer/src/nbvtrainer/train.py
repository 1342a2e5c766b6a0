"""Training loop: SGD with momentum on cross-entropy, checkpointed at
validation-loss saturation, exported as a folded EXHW weight file.

Batch normalization and dropout are active during training only; at
export the batch-norm statistics are folded into the convolution
weights and dropout is dropped, so the exported network is the plain
conv/pool/fc stack the inference side expects.
"""

import csv
import dataclasses
import random
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import VARIANT_CHANNELS, RecordDataset, load_manifest, load_splits
from .exhw import write_exhw
from .model import ReferenceNet, export_layers, folded_module

# A 5-epoch moving average of validation loss must improve on its best
# value by more than 0.1% or training is declared saturated.
MA_WINDOW = 5
MIN_IMPROVEMENT = 1e-3


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    dataset_dir: str
    variant: str
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANT_CHANNELS:
            raise ValueError(f"unknown input variant {self.variant!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch size must be positive")


def _seed_everything(seed):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def saturation_epoch(val_losses, window=MA_WINDOW,
                     min_improvement=MIN_IMPROVEMENT):
    """Earliest 1-based epoch whose moving-average validation loss fails
    to improve on the best average so far by more than `min_improvement`;
    None while training should continue."""
    best = None
    for i in range(window, len(val_losses) + 1):
        ma = sum(val_losses[i - window:i]) / window
        if best is not None and ma > best * (1 - min_improvement):
            return i
        if best is None or ma < best:
            best = ma
    return None


def _split_entries(dataset_dir, seed):
    """Resolve train/val entry lists, synthesizing an 80/20 split when
    the dataset ships no split assignment."""
    try:
        splits = load_splits(dataset_dir)
    except FileNotFoundError:
        splits = {}
    train = splits.get("train", [])
    val = splits.get("val") or splits.get("test") or []
    if train and val:
        return train, val
    entries = sorted(load_manifest(dataset_dir), key=lambda e: e["id"])
    if len(entries) < 2:
        raise ValueError("dataset is too small to split for validation")
    rng = random.Random(seed)
    rng.shuffle(entries)
    cut = min(max(1, int(round(len(entries) * 0.8))), len(entries) - 1)
    return entries[:cut], entries[cut:]


def _run_epoch(net, loader, optimizer=None):
    training = optimizer is not None
    net.train(training)
    loss_sum = 0.0
    correct = 0
    count = 0
    with torch.set_grad_enabled(training):
        for x, y in loader:
            logits = net(x)
            loss = F.cross_entropy(logits, y)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            loss_sum += float(loss.detach()) * len(y)
            correct += int((logits.argmax(dim=1) == y).sum())
            count += len(y)
    return loss_sum / count, correct / count


def train(config, out_dir):
    """Train on the configured dataset; write ``weights.exhw`` and
    ``training_log.csv`` under ``out_dir`` and return a summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)
    _seed_everything(config.seed)

    train_entries, val_entries = _split_entries(config.dataset_dir,
                                                config.seed)
    if not train_entries:
        raise ValueError("dataset has no training entries")
    train_data = RecordDataset(config.dataset_dir, train_entries,
                               config.variant)
    val_data = RecordDataset(config.dataset_dir, val_entries, config.variant)
    channels = VARIANT_CHANNELS[config.variant]
    if train_data[0][0].shape[0] != channels:
        raise ValueError(
            f"dataset yields {train_data[0][0].shape[0]} channels but "
            f"variant {config.variant} expects {channels}")

    loader_rng = torch.Generator().manual_seed(config.seed)
    train_loader = torch.utils.data.DataLoader(
        train_data, batch_size=config.batch_size, shuffle=True,
        generator=loader_rng)
    val_loader = torch.utils.data.DataLoader(
        val_data, batch_size=config.batch_size)

    net = ReferenceNet(channels)
    optimizer = torch.optim.SGD(net.parameters(), lr=config.learning_rate,
                                momentum=config.momentum)

    log_rows = []
    val_losses = []
    checkpoint_epoch = None
    for epoch in range(1, config.epochs + 1):
        train_loss, train_acc = _run_epoch(net, train_loader, optimizer)
        val_loss, val_acc = _run_epoch(net, val_loader)
        val_losses.append(val_loss)
        ma = (sum(val_losses[-MA_WINDOW:]) / MA_WINDOW
              if len(val_losses) >= MA_WINDOW else None)
        log_rows.append((epoch, train_loss, train_acc, val_loss, val_acc, ma))
        checkpoint_epoch = saturation_epoch(val_losses)
        if checkpoint_epoch is not None:
            break
    if checkpoint_epoch is None:
        checkpoint_epoch = log_rows[-1][0]

    with open(out_dir / "training_log.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("epoch", "train_loss", "train_acc",
                         "val_loss", "val_acc", "val_loss_ma5"))
        for epoch, *values in log_rows:
            ma = values[-1]
            writer.writerow((epoch,
                             *(f"{v:.9f}" for v in values[:-1]),
                             "" if ma is None else f"{ma:.9f}"))

    layers = export_layers(net)
    weights_path = write_exhw(out_dir / "weights.exhw", config.variant,
                              layers)
    _check_folding(net, folded_module(layers), val_data or train_data)
    last = log_rows[-1]
    return {"weights": weights_path,
            "log": out_dir / "training_log.csv",
            "checkpoint_epoch": checkpoint_epoch,
            "epochs_run": last[0],
            "train_loss": last[1], "train_acc": last[2],
            "val_loss": last[3], "val_acc": last[4]}


def _check_folding(net, folded, data, tolerance=1e-4):
    """Folding batch norm must not move logits by more than tolerance."""
    net.eval()
    folded.eval()
    x = torch.stack([data[i][0] for i in range(min(4, len(data)))])
    with torch.no_grad():
        err = float((net(x) - folded(x)).abs().max())
    if err > tolerance:
        raise AssertionError(
            f"batch-norm folding moved logits by {err:.3e} > {tolerance:.1e}")
