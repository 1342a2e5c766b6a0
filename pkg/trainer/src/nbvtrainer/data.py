"""Dataset-directory reading and network input assembly.

A dataset directory (as written by the simulator) holds
``dataset.json`` (generation parameters incl. camera FoV and dome
geometry), ``manifest.jsonl`` (one JSON record per line with payload
file names, CRC32 checksums, and the direction label), ``splits.json``
(record ids per train/val/test split), and two raw payload files per
record: 64x64 range-normalized depth as little-endian float32 and
64x64 utility bits as bytes, both row-major.

Input variants assemble those payloads into (C, 64, 64) float32
stacks: Depth (1ch), Utility (1ch), 2D (depth+utility), 2DScaled
(FoV-rescaled depth patch + utility), 4D (four triangular utility
partitions), 5D (depth + the four partitions).
"""

import json
import math
import zlib
from pathlib import Path

import numpy as np
import torch

INPUT_SIZE = 64
LABELS = ("UP", "DOWN", "LEFT", "RIGHT")

VARIANT_CHANNELS = {
    "Depth": 1, "Utility": 1, "2D": 2, "2DScaled": 2, "4D": 4, "5D": 5,
}


def load_manifest(dataset_dir):
    path = Path(dataset_dir) / "manifest.jsonl"
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def load_meta(dataset_dir):
    path = Path(dataset_dir) / "dataset.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def load_splits(dataset_dir):
    """Split name -> manifest entries, resolved through record ids."""
    doc = json.loads((Path(dataset_dir) / "splits.json").read_text())
    by_id = {entry["id"]: entry for entry in load_manifest(dataset_dir)}
    return {name: [by_id[rid] for rid in ids] for name, ids in doc.items()}


def read_payloads(dataset_dir, entry):
    """(depth float32 (64,64), utility uint8 (64,64)), checksum-verified."""
    base = Path(dataset_dir)
    h, w = entry["dims"]

    def payload(key, expected, crc_key):
        raw = (base / entry[key]).read_bytes()
        if len(raw) != expected:
            raise ValueError(
                f"record {entry['id']}: {key} has {len(raw)} bytes, "
                f"expected {expected}")
        if zlib.crc32(raw) != entry[crc_key]:
            raise ValueError(f"record {entry['id']}: {key} checksum mismatch")
        return raw

    depth = np.frombuffer(payload("depth_file", h * w * 4, "depth_crc32"),
                          "<f4").reshape(h, w)
    utility = np.frombuffer(payload("utility_file", h * w, "utility_crc32"),
                            np.uint8).reshape(h, w)
    return depth, utility


def triangle_masks(height, width):
    """Four boolean quadrant masks cut by the image diagonals.

    A cell belongs to the quadrant its center falls in; cells exactly
    on a diagonal join the vertical (up/down) quadrants, so the four
    masks partition the image.
    """
    r = np.arange(height)[:, None]
    c = np.arange(width)[None, :]
    a = (2 * r + 1) * width - (2 * c + 1) * height
    b = (2 * r + 1) * width + (2 * c + 1) * height - 2 * width * height
    up = (a <= 0) & (b <= 0)
    down = (a >= 0) & (b >= 0) & ~up
    left = (a > 0) & (b < 0) & ~up & ~down
    right = ~(up | down | left)
    return up, down, left, right


def enlarged_fov(sensor_fov_deg, neighbor_radius_m=0.05, dome_radius_m=0.2,
                 steps=2):
    """Sensor FoV padded by the angle subtended by `steps` dome moves."""
    delta = 2.0 * math.asin(neighbor_radius_m / (2.0 * dome_radius_m))
    pad = 2.0 * steps * math.degrees(delta)
    return sensor_fov_deg[0] + pad, sensor_fov_deg[1] + pad


def scaled_patch_size(sensor_fov_deg, utility_fov_deg, size=INPUT_SIZE):
    """Pixels the sensor FoV spans inside the utility FoV at `size` px."""
    ratio = math.tan(math.radians(sensor_fov_deg) / 2.0) \
        / math.tan(math.radians(utility_fov_deg) / 2.0)
    return int(math.floor(size * ratio + 0.5))


def resize_nearest(img, out_h, out_w):
    """Nearest-neighbor resize sampling source pixel centers."""
    src_h, src_w = img.shape
    rows = ((2 * np.arange(out_h) + 1) * src_h) // (2 * out_h)
    cols = ((2 * np.arange(out_w) + 1) * src_w) // (2 * out_w)
    return img[rows[:, None], cols[None, :]]


def assemble(variant, depth, utility, sensor_fov_deg=None,
             utility_fov_deg=None):
    """Stack one record's payloads into the variant's input channels.

    `depth` is the stored range-normalized 64x64 float32 image,
    `utility` the stored 64x64 bits.  The FoV pairs are only needed for
    the 2DScaled variant.
    """
    if variant not in VARIANT_CHANNELS:
        raise ValueError(f"unknown input variant {variant!r}")
    depth = np.asarray(depth, np.float32)
    bits = np.asarray(utility, np.float32)
    channels = []
    if variant in ("Depth", "2D", "5D"):
        channels.append(depth)
    elif variant == "2DScaled":
        if sensor_fov_deg is None or utility_fov_deg is None:
            raise ValueError("2DScaled needs sensor and utility FoVs")
        if (utility_fov_deg[0] < sensor_fov_deg[0]
                or utility_fov_deg[1] < sensor_fov_deg[1]):
            raise ValueError("utility FoV must contain the sensor FoV")
        pw = scaled_patch_size(sensor_fov_deg[0], utility_fov_deg[0])
        ph = scaled_patch_size(sensor_fov_deg[1], utility_fov_deg[1])
        canvas = np.zeros((INPUT_SIZE, INPUT_SIZE), np.float32)
        r0 = (INPUT_SIZE - ph) // 2
        c0 = (INPUT_SIZE - pw) // 2
        canvas[r0:r0 + ph, c0:c0 + pw] = resize_nearest(depth, ph, pw)
        channels.append(canvas)
    if variant in ("Utility", "2D", "2DScaled"):
        channels.append(bits)
    if variant in ("4D", "5D"):
        for mask in triangle_masks(*bits.shape):
            channels.append(np.where(mask, bits, 0.0).astype(np.float32))
    return np.stack(channels)


class RecordDataset(torch.utils.data.Dataset):
    """Manifest entries of one split as (input stack, class index) pairs."""

    def __init__(self, dataset_dir, entries, variant):
        self.dataset_dir = Path(dataset_dir)
        self.entries = list(entries)
        self.variant = variant
        if not self.entries:
            raise ValueError("empty split")
        meta = load_meta(dataset_dir)
        self.sensor_fov = None
        self.utility_fov = None
        if meta is not None:
            intr = meta["config"]["intrinsics"]
            dome = meta["dome"]
            self.sensor_fov = (intr["hfov_deg"], intr["vfov_deg"])
            self.utility_fov = enlarged_fov(
                self.sensor_fov, dome["neighbor_radius_m"],
                dome["dome_radius_m"])

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, index):
        entry = self.entries[index]
        depth, utility = read_payloads(self.dataset_dir, entry)
        x = assemble(self.variant, depth, utility,
                     sensor_fov_deg=self.sensor_fov,
                     utility_fov_deg=self.utility_fov)
        return torch.from_numpy(x), LABELS.index(entry["label"])
