"""EXHW weight-file writing (and reading, for self-checks).

Layout: 4-byte magic ``EXHW``, little-endian uint32 version (1) and
header length, a JSON header (input variant, input shape, ordered
layer descriptors), then the raw little-endian float32 parameters of
every parameterized layer in order, weight block then bias block.
"""

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .data import INPUT_SIZE, VARIANT_CHANNELS

MAGIC = b"EXHW"
VERSION = 1


def write_exhw(path, variant, layers, input_shape=None):
    """Write exported (descriptor, weight, bias) layers atomically."""
    if variant not in VARIANT_CHANNELS:
        raise ValueError(f"unknown input variant {variant!r}")
    if input_shape is None:
        input_shape = (VARIANT_CHANNELS[variant], INPUT_SIZE, INPUT_SIZE)
    if layers and layers[0][0]["kind"] == "conv" \
            and layers[0][0]["in_ch"] != input_shape[0]:
        raise ValueError(
            f"first conv takes {layers[0][0]['in_ch']} channels but variant "
            f"{variant} supplies {input_shape[0]}")
    header = json.dumps({
        "variant": variant,
        "input_shape": list(input_shape),
        "layers": [desc for desc, _, _ in layers],
    }).encode("utf-8")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", VERSION, len(header)))
            f.write(header)
            for _, weight, bias in layers:
                if weight is not None:
                    f.write(np.ascontiguousarray(weight, "<f4").tobytes())
                    f.write(np.ascontiguousarray(bias, "<f4").tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_exhw(path):
    """Parse an EXHW file back into (variant, input_shape, layers)."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError("not an EXHW weight file (bad magic)")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != VERSION:
        raise ValueError(f"unsupported EXHW version {version}")
    manifest = json.loads(blob[12:12 + header_len].decode("utf-8"))
    params = np.frombuffer(blob[12 + header_len:], "<f4")
    layers = []
    pos = 0
    for desc in manifest["layers"]:
        kind = desc["kind"]
        if kind == "conv":
            n = desc["out_ch"] * desc["in_ch"] * 9
            weight = params[pos:pos + n].reshape(desc["out_ch"],
                                                 desc["in_ch"], 3, 3)
            pos += n
            bias = params[pos:pos + desc["out_ch"]]
            pos += desc["out_ch"]
        elif kind == "fc":
            n = desc["out_features"] * desc["in_features"]
            weight = params[pos:pos + n].reshape(desc["out_features"],
                                                 desc["in_features"])
            pos += n
            bias = params[pos:pos + desc["out_features"]]
            pos += desc["out_features"]
        else:
            weight = bias = None
        layers.append((desc, weight, bias))
    if pos != params.size:
        raise ValueError(
            f"weight payload size mismatch: expected {pos} floats, "
            f"got {params.size}")
    return manifest["variant"], tuple(manifest["input_shape"]), layers
