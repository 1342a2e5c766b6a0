"""Training-set generation: neighborhood reconstruction states, utility
maps, and two-step lookahead labels, plus balancing/splitting and the
on-disk layout.

A dataset directory holds `dataset.json` (generation parameters and the
embedded scenes — enough to re-derive every label), `manifest.jsonl`
(one JSON object per record), `splits.json` (record ids per split), and
two raw payload files per record: the 64x64 normalized depth as
little-endian float32 and the 64x64 utility bits as bytes, both
row-major.
"""

import itertools
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Direction, build_dome
from .nn import INPUT_SIZE, resize_nearest
from .occmap import MapParams, OccupancyMap, integrate_depth, \
    trace_utility_map
from .policies import ExplorationContext, oracle_decide, utility_intrinsics
from .scene import CameraIntrinsics, Scene, render_depth

DATASET_SCHEMA = "nbvsim-dataset"
DATASET_VERSION = 1

DEFAULT_LEVELS = (0, 20, 40, 60, 80, 100)


@dataclass(frozen=True)
class DatasetConfig:
    """Knobs for generation; everything needed to replay labels."""

    levels: tuple = DEFAULT_LEVELS
    max_combos: int = 10
    seed: int = 0
    max_viewpoints: int = None     # evenly strided subsample when set
    max_range_m: float = 10.0
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    map_params: MapParams = field(default_factory=MapParams)

    def __post_init__(self):
        for lv in self.levels:
            if not 0 <= lv <= 100:
                raise ValueError(f"reconstruction level {lv} outside 0..100")
        if self.max_combos < 1:
            raise ValueError("max_combos must be >= 1")

    def to_json_dict(self):
        i = self.intrinsics
        m = self.map_params
        return {
            "levels": list(self.levels),
            "max_combos": self.max_combos,
            "seed": self.seed,
            "max_viewpoints": self.max_viewpoints,
            "max_range_m": self.max_range_m,
            "intrinsics": {"width": i.width, "height": i.height,
                           "hfov_deg": i.hfov_deg, "vfov_deg": i.vfov_deg},
            "map_params": {"resolution_m": m.resolution_m, "p_hit": m.p_hit,
                           "p_miss": m.p_miss, "l_min": m.l_min,
                           "l_max": m.l_max, "p_occ": m.p_occ,
                           "p_free": m.p_free},
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            levels=tuple(doc["levels"]),
            max_combos=int(doc["max_combos"]),
            seed=int(doc["seed"]),
            max_viewpoints=doc.get("max_viewpoints"),
            max_range_m=float(doc["max_range_m"]),
            intrinsics=CameraIntrinsics(**doc["intrinsics"]),
            map_params=MapParams(**doc["map_params"]),
        )


@dataclass
class DatasetRecord:
    """One training sample: inputs, provenance, and the oracle label."""

    id: str
    scene_id: int
    viewpoint: int
    level: int
    combo: int
    subset: tuple                  # dome vertex indices integrated
    label: Direction
    depth: np.ndarray              # (64, 64) float32, range-normalized
    utility: np.ndarray            # (64, 64) uint8 bits


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _draw_subsets(n, k, max_combos, rng):
    """Up to max_combos distinct sorted index subsets of size k.

    When few enough exist, all of them (lexicographic); otherwise
    seeded rejection sampling of distinct subsets.
    """
    total = math.comb(n, k)
    if total <= max_combos:
        return [tuple(c) for c in itertools.combinations(range(n), k)]
    seen = {}
    attempts = 0
    while len(seen) < max_combos and attempts < 1000 * max_combos:
        pick = tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))
        seen.setdefault(pick, None)
        attempts += 1
    return list(seen)


def _select_viewpoints(count, max_viewpoints):
    if max_viewpoints is None or max_viewpoints >= count:
        return list(range(count))
    idx = np.linspace(0, count - 1, max_viewpoints)
    return sorted(set(int(round(v)) for v in idx))


def _label_for_map(scene, dome, omap, viewpoint, depth, intrinsics,
                   utility_intrinsics, max_range_m):
    """Two-step lookahead label for a viewpoint over a given map."""
    neighbors = dome.adjacency[viewpoint]
    if neighbors.size == 0:
        return Direction.UP        # every branch stops: four-way tie
    ctx = ExplorationContext(
        dome=dome, map=omap, current_index=viewpoint,
        current_pose=dome.pose(viewpoint), current_depth=depth,
        candidates=neighbors, rng=np.random.default_rng(0),
        intrinsics=intrinsics, utility_intrinsics=utility_intrinsics,
        scene=scene, max_range_m=max_range_m)
    return oracle_decide(ctx, steps=2).direction


def generate_records(scene, dome, config=None):
    """Yield every record for one scene, deterministically per seed.

    Per viewpoint v and reconstruction level l, up to max_combos
    distinct seeded subsets of round(l * |N(v)|) neighbors are
    integrated into a fresh map; the record holds the normalized depth
    at v, the utility map traced over that reconstruction state, and
    the two-step lookahead direction.
    """
    config = config or DatasetConfig()
    intr = config.intrinsics
    uintr = utility_intrinsics(dome, intr)
    depth_cache = {}

    def cached_depth(vertex):
        if vertex not in depth_cache:
            depth_cache[vertex] = render_depth(
                scene, dome.pose(vertex), intr, config.max_range_m)
        return depth_cache[vertex]

    for v in _select_viewpoints(len(dome.positions), config.max_viewpoints):
        neighbors = dome.adjacency[v]
        depth_v = cached_depth(v)
        depth_rec = resize_nearest(depth_v.values, INPUT_SIZE, INPUT_SIZE)
        depth_rec = (depth_rec / np.float32(config.max_range_m)).astype(np.float32)
        for li, level in enumerate(config.levels):
            if neighbors.size == 0 and level != 0:
                continue
            k = _round_half_up(level / 100.0 * neighbors.size)
            rng = np.random.default_rng([config.seed, v, li])
            subsets = _draw_subsets(neighbors.size, k, config.max_combos, rng)
            for combo, subset in enumerate(subsets):
                vertices = tuple(int(neighbors[j]) for j in subset)
                omap = OccupancyMap.for_room(scene.room_min, scene.room_max,
                                             config.map_params)
                for vertex in vertices:
                    integrate_depth(omap, cached_depth(vertex),
                                    dome.pose(vertex), intr,
                                    config.max_range_m)
                umap = trace_utility_map(omap, dome.pose(v), uintr,
                                         config.max_range_m)
                label = _label_for_map(scene, dome, omap, v, depth_v, intr,
                                       uintr, config.max_range_m)
                yield DatasetRecord(
                    id=f"s{scene.seed}-v{v:04d}-l{level:03d}-c{combo:02d}",
                    scene_id=scene.seed, viewpoint=v, level=level,
                    combo=combo, subset=vertices, label=label,
                    depth=depth_rec, utility=umap.bits)


def write_record(out_dir, record):
    """Write payload files; return the record's manifest entry."""
    out = Path(out_dir)
    depth_file = f"{record.id}.depth.f32"
    utility_file = f"{record.id}.util.u8"
    depth_bytes = np.ascontiguousarray(record.depth, "<f4").tobytes()
    utility_bytes = np.ascontiguousarray(record.utility, np.uint8).tobytes()
    (out / depth_file).write_bytes(depth_bytes)
    (out / utility_file).write_bytes(utility_bytes)
    return {
        "id": record.id,
        "scene": record.scene_id,
        "viewpoint": record.viewpoint,
        "level": record.level,
        "combo": record.combo,
        "subset": list(record.subset),
        "label": record.label.name,
        "depth_file": depth_file,
        "utility_file": utility_file,
        "dims": list(record.depth.shape),
        "depth_crc32": zlib.crc32(depth_bytes),
        "utility_crc32": zlib.crc32(utility_bytes),
    }


def read_record(dataset_dir, entry):
    """Load a record back from its manifest entry, verifying payloads."""
    out = Path(dataset_dir)
    rid = entry["id"]
    h, w = entry["dims"]

    def payload(name, expected_bytes, crc_key):
        raw = (out / entry[name]).read_bytes()
        if len(raw) != expected_bytes:
            raise ValueError(
                f"record {rid}: {name} has {len(raw)} bytes, "
                f"expected {expected_bytes}"
            )
        if zlib.crc32(raw) != entry[crc_key]:
            raise ValueError(f"record {rid}: {name} checksum mismatch")
        return raw

    depth = np.frombuffer(
        payload("depth_file", h * w * 4, "depth_crc32"), "<f4"
    ).reshape(h, w)
    utility = np.frombuffer(
        payload("utility_file", h * w, "utility_crc32"), np.uint8
    ).reshape(h, w)
    return DatasetRecord(
        id=rid, scene_id=entry["scene"], viewpoint=entry["viewpoint"],
        level=entry["level"], combo=entry["combo"],
        subset=tuple(entry["subset"]), label=Direction[entry["label"]],
        depth=depth, utility=utility)


def generate_dataset(scenes, dome, out_dir, config=None):
    """Generate and write a full dataset directory; returns the manifest."""
    config = config or DatasetConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema": DATASET_SCHEMA,
        "version": DATASET_VERSION,
        "config": config.to_json_dict(),
        "dome": {"subdivisions": dome.subdivisions,
                 "dome_radius_m": dome.dome_radius_m,
                 "center_height_m": float(dome.dome_center[2]),
                 "neighbor_radius_m": dome.neighbor_radius_m},
        "scenes": [scene.to_json_dict() for scene in scenes],
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2))
    entries = []
    with open(out / "manifest.jsonl", "w") as mf:
        for scene in scenes:
            for record in generate_records(scene, dome, config):
                entry = write_record(out, record)
                mf.write(json.dumps(entry) + "\n")
                entries.append(entry)
    return entries


def load_manifest(dataset_dir):
    with open(Path(dataset_dir) / "manifest.jsonl") as f:
        return [json.loads(line) for line in f if line.strip()]


def load_meta(dataset_dir):
    meta = json.loads((Path(dataset_dir) / "dataset.json").read_text())
    if meta.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"not a {DATASET_SCHEMA} directory")
    if meta.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {meta.get('version')}")
    return meta


def open_dataset(dataset_dir):
    """Rebuild (scenes by id, dome, config) from a dataset directory."""
    meta = load_meta(dataset_dir)
    config = DatasetConfig.from_json_dict(meta["config"])
    d = meta["dome"]
    dome = build_dome(d["subdivisions"], d["dome_radius_m"],
                      d["center_height_m"], d["neighbor_radius_m"])
    scenes = {}
    for doc in meta["scenes"]:
        scene = Scene.from_json_dict(doc)
        scenes[scene.seed] = scene
    return scenes, dome, config


def rederive_label(scene, dome, entry, config):
    """Recompute a record's label from manifest metadata alone.

    Rebuilds the reconstruction state by integrating the stored subset
    vertices into a fresh map and re-runs the two-step lookahead —
    independent of the payload files.
    """
    intr = config.intrinsics
    uintr = utility_intrinsics(dome, intr)
    omap = OccupancyMap.for_room(scene.room_min, scene.room_max,
                                 config.map_params)
    for vertex in entry["subset"]:
        integrate_depth(omap, render_depth(scene, dome.pose(vertex), intr,
                                           config.max_range_m),
                        dome.pose(vertex), intr, config.max_range_m)
    v = entry["viewpoint"]
    depth_v = render_depth(scene, dome.pose(v), intr, config.max_range_m)
    return _label_for_map(scene, dome, omap, v, depth_v, intr, uintr,
                          config.max_range_m)


SPLIT_NAMES = ("train", "val", "test")


def balance_and_split(entries, per_class_cap=25000, ratios=(0.7, 0.15, 0.15),
                      seed=0):
    """Cap each class, then stratify into train/val/test by ratios.

    Per class: seeded shuffle, keep at most per_class_cap, then cut by
    the ratios using largest-remainder quotas (leftover slots go to the
    split with the largest fractional quota, ties to the split furthest
    below its overall target), so every split is balanced within one
    record per class.
    """
    if len(ratios) != len(SPLIT_NAMES):
        raise ValueError(f"need {len(SPLIT_NAMES)} ratios")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios {ratios} do not sum to 1")
    by_class = {d: [] for d in Direction}
    for entry in entries:
        by_class[Direction[entry["label"]]].append(entry)
    empty = [d.name for d in Direction if not by_class[d]]
    if empty:
        raise ValueError(f"no samples for class(es): {', '.join(empty)}")

    rng = np.random.default_rng(seed)
    kept = {}
    for d in Direction:
        group = by_class[d]
        order = rng.permutation(len(group))
        kept[d] = [group[i] for i in order[:min(per_class_cap, len(group))]]

    grand = sum(len(g) for g in kept.values())
    splits = {name: [] for name in SPLIT_NAMES}
    totals = [0] * len(SPLIT_NAMES)
    for d in Direction:
        group = kept[d]
        n = len(group)
        quota = [n * r for r in ratios]
        counts = [int(math.floor(q)) for q in quota]
        for s, c in enumerate(counts):
            totals[s] += c
        fracs = [q - c for q, c in zip(quota, counts)]
        for _ in range(n - sum(counts)):
            deficits = [ratios[s] * grand - totals[s]
                        for s in range(len(SPLIT_NAMES))]
            s = max(range(len(SPLIT_NAMES)),
                    key=lambda s: (fracs[s], deficits[s], -s))
            counts[s] += 1
            totals[s] += 1
            fracs[s] = -1.0
        pos = 0
        for s, name in enumerate(SPLIT_NAMES):
            splits[name].extend(group[pos:pos + counts[s]])
            pos += counts[s]
    return splits


def write_splits(dataset_dir, splits):
    doc = {name: [entry["id"] for entry in group]
           for name, group in splits.items()}
    (Path(dataset_dir) / "splits.json").write_text(json.dumps(doc))


def read_splits(dataset_dir):
    """Split name -> list of manifest entries, resolved through ids."""
    doc = json.loads((Path(dataset_dir) / "splits.json").read_text())
    by_id = {entry["id"]: entry for entry in load_manifest(dataset_dir)}
    return {name: [by_id[rid] for rid in ids] for name, ids in doc.items()}
