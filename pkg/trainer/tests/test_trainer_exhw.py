"""EXHW weight-file writing, reading, and validation."""

import json
import struct

import numpy as np
import pytest
import torch

from nbvtrainer.exhw import MAGIC, VERSION, read_exhw, write_exhw
from nbvtrainer.model import ReferenceNet, export_layers


@pytest.fixture(scope="module")
def small_layers():
    rng = np.random.default_rng(11)
    return [
        ({"kind": "conv", "in_ch": 2, "out_ch": 3, "relu": True},
         rng.standard_normal((3, 2, 3, 3)).astype(np.float32),
         rng.standard_normal(3).astype(np.float32)),
        ({"kind": "maxpool"}, None, None),
        ({"kind": "flatten"}, None, None),
        ({"kind": "fc", "in_features": 3072, "out_features": 4,
          "relu": False},
         rng.standard_normal((4, 3072)).astype(np.float32),
         rng.standard_normal(4).astype(np.float32)),
    ]


def test_write_read_round_trip(tmp_path, small_layers):
    path = write_exhw(tmp_path / "w.exhw", "2D", small_layers)
    variant, input_shape, layers = read_exhw(path)
    assert variant == "2D"
    assert input_shape == (2, 64, 64)
    assert [d for d, _, _ in layers] == [d for d, _, _ in small_layers]
    for (_, w1, b1), (_, w2, b2) in zip(small_layers, layers):
        if w1 is None:
            assert w2 is None and b2 is None
        else:
            assert np.array_equal(w1, w2)
            assert np.array_equal(b1, b2)


def test_header_layout(tmp_path, small_layers):
    path = write_exhw(tmp_path / "w.exhw", "2D", small_layers)
    blob = path.read_bytes()
    assert blob[:4] == MAGIC == b"EXHW"
    version, header_len = struct.unpack("<II", blob[4:12])
    assert version == VERSION == 1
    manifest = json.loads(blob[12:12 + header_len])
    assert manifest["variant"] == "2D"
    assert manifest["input_shape"] == [2, 64, 64]
    assert [layer["kind"] for layer in manifest["layers"]] == \
        ["conv", "maxpool", "flatten", "fc"]
    n_floats = 3 * 2 * 9 + 3 + 4 * 3072 + 4
    assert len(blob) == 12 + header_len + 4 * n_floats


def test_write_leaves_no_temp_files(tmp_path, small_layers):
    write_exhw(tmp_path / "w.exhw", "2D", small_layers)
    assert [p.name for p in tmp_path.iterdir()] == ["w.exhw"]


def test_write_rejects_unknown_variant(tmp_path, small_layers):
    with pytest.raises(ValueError, match="variant"):
        write_exhw(tmp_path / "w.exhw", "6D", small_layers)


def test_write_rejects_channel_mismatch(tmp_path, small_layers):
    with pytest.raises(ValueError, match="channels"):
        write_exhw(tmp_path / "w.exhw", "5D", small_layers)


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.exhw"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        read_exhw(path)


def test_read_rejects_unknown_version(tmp_path, small_layers):
    path = write_exhw(tmp_path / "w.exhw", "2D", small_layers)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    path.write_bytes(blob)
    with pytest.raises(ValueError, match="version 9"):
        read_exhw(path)


def test_read_rejects_truncated_payload(tmp_path, small_layers):
    path = write_exhw(tmp_path / "w.exhw", "2D", small_layers)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(ValueError, match="payload"):
        read_exhw(path)


def test_reference_net_export_round_trip(tmp_path):
    torch.manual_seed(7)
    net = ReferenceNet(4)
    path = write_exhw(tmp_path / "ref.exhw", "4D", export_layers(net))
    variant, input_shape, layers = read_exhw(path)
    assert variant == "4D"
    assert input_shape == (4, 64, 64)
    kinds = [d["kind"] for d, _, _ in layers]
    assert kinds == ["conv", "maxpool", "conv", "maxpool", "conv",
                     "maxpool", "flatten", "fc", "fc"]
    convs = [(d, w, b) for d, w, b in layers if d["kind"] == "conv"]
    assert [(d["in_ch"], d["out_ch"]) for d, _, _ in convs] == \
        [(4, 16), (16, 32), (32, 64)]
    assert all(w.shape == (d["out_ch"], d["in_ch"], 3, 3) and d["relu"]
               for d, w, _ in convs)
    fcs = [(d, w, b) for d, w, b in layers if d["kind"] == "fc"]
    assert [(d["in_features"], d["out_features"]) for d, _, _ in fcs] == \
        [(4096, 256), (256, 4)]
    assert fcs[0][0]["relu"] and not fcs[1][0]["relu"]
