"""CNN input assembly and a from-scratch forward pass over exported
weight files.

The direction classifier consumes 64x64 tensors built from the current
depth frame and the traced utility map in six channel layouts (depth
only, utility only, stacked, FoV-scaled stack, partitioned utility, and
depth plus partitioned utility).  Weights live in a self-describing
binary format ("EXHW"): a JSON layer manifest followed by raw float32
parameter blocks, so training and inference cannot drift apart.
"""

import json
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .occmap import PartitionScheme, partition_utility

WEIGHTS_MAGIC = b"EXHW"
WEIGHTS_VERSION = 1

INPUT_SIZE = 64


class InputVariant(Enum):
    DEPTH = "Depth"
    UTILITY = "Utility"
    TWO_D = "2D"
    TWO_D_SCALED = "2DScaled"
    FOUR_D = "4D"
    FIVE_D = "5D"

    @property
    def channels(self):
        return _VARIANT_CHANNELS[self]

    @classmethod
    def parse(cls, text):
        for v in cls:
            if v.value == text:
                return v
        names = ", ".join(v.value for v in cls)
        raise ValueError(f"unknown input variant {text!r} (expected one of {names})")


_VARIANT_CHANNELS = {
    InputVariant.DEPTH: 1,
    InputVariant.UTILITY: 1,
    InputVariant.TWO_D: 2,
    InputVariant.TWO_D_SCALED: 2,
    InputVariant.FOUR_D: 4,
    InputVariant.FIVE_D: 5,
}


def resize_nearest(img, out_h, out_w):
    """Nearest-neighbor resize with pixel-center sampling.

    Source index for destination index d is ((2d+1)*src)//(2*dst) — pure
    integer arithmetic, so results are bit-reproducible everywhere.
    """
    src_h, src_w = img.shape
    rows = ((2 * np.arange(out_h, dtype=np.int64) + 1) * src_h) // (2 * out_h)
    cols = ((2 * np.arange(out_w, dtype=np.int64) + 1) * src_w) // (2 * out_w)
    return img[rows[:, None], cols[None, :]]


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def scaled_patch_size(sensor_fov_deg, utility_fov_deg, size=INPUT_SIZE):
    """Pixel extent of the sensor FoV inside the utility FoV raster."""
    num = np.tan(np.radians(sensor_fov_deg) / 2.0)
    den = np.tan(np.radians(utility_fov_deg) / 2.0)
    return _round_half_up(size * num / den)


def assemble_input(variant, depth, umap, sensor_fov_deg=(60.0, 45.0),
                   utility_fov_deg=None, max_range_m=10.0):
    """Build the (C, 64, 64) float32 input tensor for a variant.

    Depth is normalized by max range (the 0.0 no-return sentinel stays
    0) and utility bits stay {0, 1}; both are resized to 64x64 by
    nearest-neighbor sampling.  The scaled variant shrinks the depth to
    the patch its FoV covers inside the utility FoV and centers it on a
    zero canvas.  Partitioned variants use the triangular scheme.
    """
    if utility_fov_deg is None:
        utility_fov_deg = umap.fov_deg
    s = INPUT_SIZE

    def depth_channel():
        d = resize_nearest(depth.values, s, s).astype(np.float32)
        return d / np.float32(max_range_m)

    def utility_channel():
        return resize_nearest(umap.bits, s, s).astype(np.float32)

    def partition_channels():
        maps, _ = partition_utility(umap, PartitionScheme.TRIANGULAR)
        return [resize_nearest(m.bits, s, s).astype(np.float32) for m in maps]

    if variant == InputVariant.DEPTH:
        channels = [depth_channel()]
    elif variant == InputVariant.UTILITY:
        channels = [utility_channel()]
    elif variant == InputVariant.TWO_D:
        channels = [depth_channel(), utility_channel()]
    elif variant == InputVariant.TWO_D_SCALED:
        if (utility_fov_deg[0] < sensor_fov_deg[0]
                or utility_fov_deg[1] < sensor_fov_deg[1]):
            raise ValueError("utility FoV must be >= sensor FoV for 2DScaled")
        pw = scaled_patch_size(sensor_fov_deg[0], utility_fov_deg[0])
        ph = scaled_patch_size(sensor_fov_deg[1], utility_fov_deg[1])
        patch = resize_nearest(depth.values, ph, pw).astype(np.float32)
        patch = patch / np.float32(max_range_m)
        canvas = np.zeros((s, s), np.float32)
        r0 = (s - ph) // 2
        c0 = (s - pw) // 2
        canvas[r0:r0 + ph, c0:c0 + pw] = patch
        channels = [canvas, utility_channel()]
    elif variant == InputVariant.FOUR_D:
        channels = partition_channels()
    elif variant == InputVariant.FIVE_D:
        channels = [depth_channel()] + partition_channels()
    else:
        raise ValueError(f"unknown input variant {variant!r}")
    return np.stack(channels).astype(np.float32)


@dataclass(frozen=True)
class ConvLayer:
    """3x3 convolution (cross-correlation), stride 1, zero padding 1."""

    in_ch: int
    out_ch: int
    relu: bool = True
    weight: np.ndarray = None      # (out_ch, in_ch, 3, 3)
    bias: np.ndarray = None        # (out_ch,)
    kind = "conv"

    def describe(self):
        return {"kind": "conv", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kernel": 3, "stride": 1, "padding": 1, "relu": self.relu}

    @property
    def param_count(self):
        return self.out_ch * self.in_ch * 9 + self.out_ch


@dataclass(frozen=True)
class MaxPoolLayer:
    """2x2 max pooling, stride 2."""

    kind = "maxpool"

    def describe(self):
        return {"kind": "maxpool", "size": 2, "stride": 2}

    param_count = 0


@dataclass(frozen=True)
class FlattenLayer:
    kind = "flatten"

    def describe(self):
        return {"kind": "flatten"}

    param_count = 0


@dataclass(frozen=True)
class FcLayer:
    in_features: int
    out_features: int
    relu: bool = False
    weight: np.ndarray = None      # (out_features, in_features)
    bias: np.ndarray = None        # (out_features,)
    kind = "fc"

    def describe(self):
        return {"kind": "fc", "in_features": self.in_features,
                "out_features": self.out_features, "relu": self.relu}

    @property
    def param_count(self):
        return self.out_features * self.in_features + self.out_features


@dataclass
class CnnWeights:
    """Ordered layer list with parameters, plus the input contract."""

    variant: InputVariant
    layers: list
    input_shape: tuple = None

    def __post_init__(self):
        if self.input_shape is None:
            self.input_shape = (self.variant.channels, INPUT_SIZE, INPUT_SIZE)
        self.input_shape = tuple(int(v) for v in self.input_shape)
        _validate_layers(self.layers, self.input_shape)


def _validate_layers(layers, input_shape):
    """Shape-check the layer chain and parameter blocks."""
    if not layers:
        raise ValueError("layer list is empty")
    shape = tuple(input_shape)     # (C, H, W) or (features,)
    for i, layer in enumerate(layers):
        if layer.kind == "conv":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: conv applied to flat input")
            if shape[0] != layer.in_ch:
                raise ValueError(
                    f"layer {i}: conv expects {layer.in_ch} channels, "
                    f"input has {shape[0]}"
                )
            if layer.weight is not None:
                if layer.weight.shape != (layer.out_ch, layer.in_ch, 3, 3):
                    raise ValueError(f"layer {i}: conv kernel shape mismatch")
                if layer.bias.shape != (layer.out_ch,):
                    raise ValueError(f"layer {i}: conv bias shape mismatch")
            shape = (layer.out_ch, shape[1], shape[2])
        elif layer.kind == "maxpool":
            if len(shape) != 3 or shape[1] % 2 or shape[2] % 2:
                raise ValueError(f"layer {i}: maxpool needs even spatial dims")
            shape = (shape[0], shape[1] // 2, shape[2] // 2)
        elif layer.kind == "flatten":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: flatten applied to flat input")
            shape = (shape[0] * shape[1] * shape[2],)
        elif layer.kind == "fc":
            if len(shape) != 1:
                raise ValueError(f"layer {i}: fc applied to non-flat input")
            if shape[0] != layer.in_features:
                raise ValueError(
                    f"layer {i}: fc expects {layer.in_features} features, "
                    f"input has {shape[0]}"
                )
            if layer.weight is not None:
                if layer.weight.shape != (layer.out_features, layer.in_features):
                    raise ValueError(f"layer {i}: fc weight shape mismatch")
                if layer.bias.shape != (layer.out_features,):
                    raise ValueError(f"layer {i}: fc bias shape mismatch")
            shape = (layer.out_features,)
        else:
            raise ValueError(f"layer {i}: unknown kind {layer.kind!r}")
    if shape != (4,):
        raise ValueError(f"network must end with 4 outputs, ends with {shape}")


def reference_layers(channels):
    """The reference architecture's layer chain, parameters unset."""
    return [
        ConvLayer(channels, 16), MaxPoolLayer(),
        ConvLayer(16, 32), MaxPoolLayer(),
        ConvLayer(32, 64), MaxPoolLayer(),
        FlattenLayer(),
        FcLayer(64 * 8 * 8, 256, relu=True),
        FcLayer(256, 4, relu=False),
    ]


def init_weights(variant, rng=None):
    """Reference-architecture CnnWeights, zero or seeded-He parameters."""
    layers = []
    for layer in reference_layers(variant.channels):
        if layer.kind == "conv":
            n = layer.out_ch * layer.in_ch * 9
            if rng is None:
                w = np.zeros((layer.out_ch, layer.in_ch, 3, 3), np.float32)
            else:
                std = np.sqrt(2.0 / (layer.in_ch * 9))
                w = rng.normal(0.0, std, (layer.out_ch, layer.in_ch, 3, 3))
                w = w.astype(np.float32)
            layers.append(ConvLayer(layer.in_ch, layer.out_ch, layer.relu,
                                    w, np.zeros(layer.out_ch, np.float32)))
        elif layer.kind == "fc":
            if rng is None:
                w = np.zeros((layer.out_features, layer.in_features), np.float32)
            else:
                std = np.sqrt(2.0 / layer.in_features)
                w = rng.normal(0.0, std, (layer.out_features, layer.in_features))
                w = w.astype(np.float32)
            layers.append(FcLayer(layer.in_features, layer.out_features,
                                  layer.relu, w,
                                  np.zeros(layer.out_features, np.float32)))
        else:
            layers.append(layer)
    return CnnWeights(variant=variant, layers=layers)


def forward(weights, x):
    """Run the network on a (C, 64, 64) input; returns 4 float32 logits.

    Each layer accumulates in float64 and materializes float32
    activations, which keeps logits within ~1e-6 of any float32
    framework evaluating the same parameters.
    """
    x = np.asarray(x, np.float32)
    if x.shape != weights.input_shape:
        raise ValueError(
            f"input shape {x.shape} does not match weights "
            f"{weights.input_shape}"
        )
    for i, layer in enumerate(weights.layers):
        if layer.kind == "conv":
            if x.ndim != 3 or x.shape[0] != layer.in_ch:
                raise ValueError(f"layer {i}: activation shape mismatch")
            xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
            win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3),
                                                           axis=(1, 2))
            out = np.einsum("chwkl,ockl->ohw", win, layer.weight,
                            dtype=np.float64)
            out += layer.bias[:, None, None].astype(np.float64)
            x = out.astype(np.float32)
            if layer.relu:
                np.maximum(x, 0.0, out=x)
        elif layer.kind == "maxpool":
            c, h, w = x.shape
            x = x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))
        elif layer.kind == "flatten":
            x = x.reshape(-1)
        elif layer.kind == "fc":
            if x.ndim != 1 or x.shape[0] != layer.in_features:
                raise ValueError(f"layer {i}: activation shape mismatch")
            out = layer.weight.astype(np.float64) @ x.astype(np.float64)
            out += layer.bias.astype(np.float64)
            x = out.astype(np.float32)
            if layer.relu:
                np.maximum(x, 0.0, out=x)
    return x


def save_weights(weights, path):
    """Write the EXHW weight file (see load_weights for the layout)."""
    manifest = {
        "variant": weights.variant.value,
        "input_shape": list(weights.input_shape),
        "layers": [layer.describe() for layer in weights.layers],
    }
    header = json.dumps(manifest).encode("utf-8")
    blocks = []
    for layer in weights.layers:
        if layer.param_count:
            blocks.append(np.ascontiguousarray(layer.weight, "<f4").tobytes())
            blocks.append(np.ascontiguousarray(layer.bias, "<f4").tobytes())
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<II", WEIGHTS_VERSION, len(header)))
        f.write(header)
        for block in blocks:
            f.write(block)


def _layer_from_descriptor(desc):
    kind = desc.get("kind")
    if kind == "conv":
        if desc.get("kernel", 3) != 3 or desc.get("stride", 1) != 1 \
                or desc.get("padding", 1) != 1:
            raise ValueError("conv layers are fixed at kernel 3, stride 1, padding 1")
        return ConvLayer(int(desc["in_ch"]), int(desc["out_ch"]),
                         bool(desc.get("relu", True)))
    if kind == "maxpool":
        return MaxPoolLayer()
    if kind == "flatten":
        return FlattenLayer()
    if kind == "fc":
        return FcLayer(int(desc["in_features"]), int(desc["out_features"]),
                       bool(desc.get("relu", False)))
    raise ValueError(f"unknown layer kind {kind!r}")


def load_weights(path):
    """Load an EXHW weight file.

    Layout: magic "EXHW", u32 version, u32 JSON header length, the JSON
    layer manifest, then each parameterized layer's raw little-endian
    float32 blocks in order (conv: kernel (out,in,3,3) then bias; fc:
    weight (out,in) then bias).
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != WEIGHTS_MAGIC:
        raise ValueError("not an EXHW weight file (bad magic)")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != WEIGHTS_VERSION:
        raise ValueError(f"unsupported EXHW version {version}")
    manifest = json.loads(blob[12:12 + header_len].decode("utf-8"))
    variant = InputVariant.parse(manifest["variant"])
    input_shape = tuple(manifest["input_shape"])
    if input_shape[0] != variant.channels:
        raise ValueError(
            f"header channel count {input_shape[0]} does not match "
            f"variant {variant.value} ({variant.channels} channels)"
        )
    skeleton = [_layer_from_descriptor(d) for d in manifest["layers"]]

    params = np.frombuffer(blob[12 + header_len:], "<f4")
    expected = sum(layer.param_count for layer in skeleton)
    if params.size != expected:
        raise ValueError(
            f"weight payload size mismatch: expected {expected} floats, "
            f"got {params.size}"
        )
    layers = []
    pos = 0
    for layer in skeleton:
        if layer.kind == "conv":
            n = layer.out_ch * layer.in_ch * 9
            w = params[pos:pos + n].reshape(layer.out_ch, layer.in_ch, 3, 3)
            pos += n
            b = params[pos:pos + layer.out_ch]
            pos += layer.out_ch
            layers.append(ConvLayer(layer.in_ch, layer.out_ch, layer.relu,
                                    w.copy(), b.copy()))
        elif layer.kind == "fc":
            n = layer.out_features * layer.in_features
            w = params[pos:pos + n].reshape(layer.out_features,
                                            layer.in_features)
            pos += n
            b = params[pos:pos + layer.out_features]
            pos += layer.out_features
            layers.append(FcLayer(layer.in_features, layer.out_features,
                                  layer.relu, w.copy(), b.copy()))
        else:
            layers.append(layer)
    return CnnWeights(variant=variant, layers=layers,
                      input_shape=input_shape)


def basegain_equivalent_weights():
    """Weights that reproduce the triangular-partition-sum policy.

    Variant 4D (the four triangular utility partitions); a single fc
    layer copies each channel's bit sum into the matching logit.  Sums
    are integers well below 2**24, so float32 evaluation is exact and
    the argmax equals the partition-sum argmax, ties included.
    """
    n = INPUT_SIZE * INPUT_SIZE
    w = np.zeros((4, 4 * n), np.float32)
    for m in range(4):
        w[m, m * n:(m + 1) * n] = 1.0
    layers = [FlattenLayer(),
              FcLayer(4 * n, 4, relu=False, weight=w,
                      bias=np.zeros(4, np.float32))]
    return CnnWeights(variant=InputVariant.FOUR_D, layers=layers)
