"""Forward-pass fixture export: a raw input tensor, the reference
logits the exported weights produce on it, and a JSON sidecar naming
all three files.  The inference side's ``nn-check`` replays the
fixture and must match the logits within 1e-4.
"""

import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np
import torch

from .exhw import read_exhw
from .model import folded_module


def _write_atomic(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def export_fixture(weights_path, out_dir, seed=0, sample=None):
    """Write ``input.f32``, ``logits.f32`` and ``fixture.json`` next to
    a copy of the weights; returns the fixture JSON path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    variant, input_shape, layers = read_exhw(weights_path)
    if sample is None:
        rng = np.random.default_rng(seed)
        sample = rng.random(input_shape, np.float32)
    else:
        sample = np.ascontiguousarray(sample, np.float32)
        if sample.shape != input_shape:
            raise ValueError(
                f"sample shape {sample.shape} does not match weights input "
                f"shape {input_shape}")
    net = folded_module(layers)
    net.eval()
    with torch.no_grad():
        logits = net(torch.from_numpy(sample)[None])[0].numpy()

    weights_name = Path(weights_path).name
    if Path(weights_path).resolve() != (out_dir / weights_name).resolve():
        shutil.copyfile(weights_path, out_dir / weights_name)
    _write_atomic(out_dir / "input.f32",
                  sample.astype("<f4").tobytes())
    _write_atomic(out_dir / "logits.f32",
                  logits.astype("<f4").tobytes())
    doc = {"variant": variant,
           "input_shape": list(input_shape),
           "weights_file": weights_name,
           "input_file": "input.f32",
           "logits_file": "logits.f32"}
    return _write_atomic(out_dir / "fixture.json",
                         json.dumps(doc, indent=2).encode("utf-8"))
