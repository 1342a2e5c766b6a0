"""Procedural ground-truth rooms and the pinhole depth renderer.

Scenes are axis-aligned box rooms (a shell plus box obstacles) centered
on the origin in x and y with the floor at z = 0, so the viewpoint dome
at (0, 0, center height) sits inside every generated room.  The renderer
is the simulated depth sensor and also the oracle policies' ground-truth
frame source: per-pixel slab tests against the shell interior and all
obstacle boxes, storing z-depth (distance along the optical axis) with
0.0 as the no-return sentinel beyond max range.
"""

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .geometry import CameraPose

DEFAULT_MAX_RANGE_M = 10.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Centered pinhole model defined by image size and per-axis FoV."""

    width: int = 160
    height: int = 120
    hfov_deg: float = 60.0
    vfov_deg: float = 45.0

    def __post_init__(self):
        if not self.hfov_deg > self.vfov_deg > 0:
            raise ValueError("require hfov_deg > vfov_deg > 0")
        if self.width < 8 or self.height < 8:
            raise ValueError("image dimensions must be >= 8")

    @property
    def fx(self):
        return (self.width / 2.0) / np.tan(np.radians(self.hfov_deg) / 2.0)

    @property
    def fy(self):
        return (self.height / 2.0) / np.tan(np.radians(self.vfov_deg) / 2.0)

    @property
    def cx(self):
        return self.width / 2.0

    @property
    def cy(self):
        return self.height / 2.0

    def ray_grid(self):
        """Camera-frame ray directions and their norms, one per pixel.

        Directions are unnormalized with z = 1 (+z optical axis, +x image
        right, +y image up), so a z-depth z means Euclidean ray length
        z * norm.  Returns ((H, W, 3) float64, (H, W) float64).
        """
        return _ray_grid_cached(self.width, self.height,
                                self.hfov_deg, self.vfov_deg)


@lru_cache(maxsize=32)
def _ray_grid_cached(width, height, hfov_deg, vfov_deg):
    intr = CameraIntrinsics(width, height, hfov_deg, vfov_deg)
    u = np.arange(width, dtype=np.float64)
    v = np.arange(height, dtype=np.float64)
    x = (u + 0.5 - intr.cx) / intr.fx
    y = (intr.cy - (v + 0.5)) / intr.fy
    dirs = np.empty((height, width, 3), np.float64)
    dirs[:, :, 0] = x[None, :]
    dirs[:, :, 1] = y[:, None]
    dirs[:, :, 2] = 1.0
    norms = np.sqrt(dirs[:, :, 0] ** 2 + dirs[:, :, 1] ** 2 + 1.0)
    dirs.setflags(write=False)
    norms.setflags(write=False)
    return dirs, norms


@dataclass(frozen=True)
class DepthImage:
    """Row-major z-depth frame in meters; 0.0 marks no return in range."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, np.float32)
        if vals.ndim != 2:
            raise ValueError("depth values must be a 2-D array")
        if not np.all(np.isfinite(vals)) or vals.min() < 0.0:
            raise ValueError("depth values must be finite and >= 0")
        object.__setattr__(self, "values", vals)

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class RoomParams:
    """Generator ranges; all (lo, hi) with lo <= hi, sizes positive."""

    floor_size_m: tuple = (3.0, 6.0)       # x and y extent range
    height_m: tuple = (2.2, 3.2)           # >= 2.2 keeps the dome inside
    obstacle_count: tuple = (2, 6)
    obstacle_size_m: tuple = (0.2, 1.2)    # per-axis box extent range
    dome_center_height_m: float = 1.5
    dome_clearance_m: float = 0.3          # dome radius 0.2 + 0.1 margin

    def __post_init__(self):
        for name in ("floor_size_m", "height_m", "obstacle_size_m"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} range must be positive and ordered")
        lo, hi = self.obstacle_count
        if not (0 <= lo <= hi):
            raise ValueError("obstacle_count range must be ordered and >= 0")
        if self.height_m[0] < 2.2:
            raise ValueError("room height must be >= 2.2 m")


@dataclass
class Scene:
    """Axis-aligned room shell plus box obstacles."""

    room_min: np.ndarray
    room_max: np.ndarray
    obstacles: np.ndarray          # (N, 6): xmin,ymin,zmin,xmax,ymax,zmax
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.room_min = np.asarray(self.room_min, np.float64).reshape(3)
        self.room_max = np.asarray(self.room_max, np.float64).reshape(3)
        obs = np.asarray(self.obstacles, np.float64).reshape(-1, 6)
        self.obstacles = obs
        if not np.all(self.room_max > self.room_min):
            raise ValueError("room_max must exceed room_min")

    @property
    def shell(self):
        """(6,) bounds vector for the ray kernels."""
        return np.concatenate([self.room_min, self.room_max])

    def validate(self, dome_center, dome_radius_m, clearance_m=0.1):
        """Containment and dome-clearance checks (run on load)."""
        for box in self.obstacles:
            if np.any(box[:3] < self.room_min) or np.any(box[3:] > self.room_max):
                raise ValueError("obstacle extends outside the room shell")
            if np.any(box[:3] >= box[3:]):
                raise ValueError("degenerate obstacle box")
        center = np.asarray(dome_center, np.float64)
        reach = dome_radius_m + clearance_m
        if np.any(center - reach < self.room_min) or np.any(
            center + reach > self.room_max
        ):
            raise ValueError("dome sphere does not fit inside the room")
        for box in self.obstacles:
            if _sphere_box_gap(center, reach, box) <= 0.0:
                raise ValueError("obstacle intersects the dome clearance sphere")

    def to_json_dict(self):
        return {
            "format": "nbvsim-scene",
            "version": 1,
            "seed": int(self.seed),
            "room_min": [float(v) for v in self.room_min],
            "room_max": [float(v) for v in self.room_max],
            "obstacles": [[float(v) for v in box] for box in self.obstacles],
            "params": self.params,
        }

    @classmethod
    def from_json_dict(cls, doc):
        if doc.get("format") != "nbvsim-scene":
            raise ValueError("not a scene document")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported scene version {doc.get('version')}")
        return cls(
            room_min=np.array(doc["room_min"], np.float64),
            room_max=np.array(doc["room_max"], np.float64),
            obstacles=np.array(doc["obstacles"], np.float64).reshape(-1, 6),
            seed=int(doc["seed"]),
            params=doc.get("params", {}),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load(cls, path, dome_center=(0.0, 0.0, 1.5), dome_radius_m=0.2):
        with open(path) as f:
            scene = cls.from_json_dict(json.load(f))
        scene.validate(dome_center, dome_radius_m)
        return scene


def _sphere_box_gap(center, radius, box):
    """Signed gap between a sphere and a box (<= 0 means intersecting)."""
    closest = np.minimum(np.maximum(center, box[:3]), box[3:])
    return float(np.linalg.norm(center - closest)) - radius


_MAX_REJECTION_ATTEMPTS = 1000


def generate_room(seed, params=None):
    """Deterministically generate a room scene for a seed.

    Obstacles are rejection-sampled until each is contained in the shell
    and clear of the dome sphere; fails after a bounded number of
    attempts for pathological parameter ranges.
    """
    params = params or RoomParams()
    rng = np.random.default_rng(seed)

    sx = rng.uniform(*params.floor_size_m)
    sy = rng.uniform(*params.floor_size_m)
    sz = rng.uniform(*params.height_m)
    room_min = np.array([-sx / 2.0, -sy / 2.0, 0.0])
    room_max = np.array([sx / 2.0, sy / 2.0, sz])

    dome_center = np.array([0.0, 0.0, params.dome_center_height_m])
    n_obstacles = int(rng.integers(params.obstacle_count[0],
                                   params.obstacle_count[1] + 1))

    boxes = []
    for _ in range(n_obstacles):
        for attempt in range(_MAX_REJECTION_ATTEMPTS):
            size = rng.uniform(params.obstacle_size_m[0],
                               params.obstacle_size_m[1], size=3)
            lo = np.array([
                rng.uniform(room_min[0], room_max[0] - size[0]),
                rng.uniform(room_min[1], room_max[1] - size[1]),
                0.0,  # obstacles stand on the floor
            ])
            box = np.concatenate([lo, lo + size])
            if _sphere_box_gap(dome_center, params.dome_clearance_m, box) > 0.0:
                boxes.append(box)
                break
        else:
            raise RuntimeError(
                f"obstacle placement failed after {_MAX_REJECTION_ATTEMPTS} attempts"
            )

    scene = Scene(
        room_min=room_min,
        room_max=room_max,
        obstacles=np.array(boxes).reshape(-1, 6),
        seed=int(seed),
        params={
            "floor_size_m": list(params.floor_size_m),
            "height_m": list(params.height_m),
            "obstacle_count": list(params.obstacle_count),
            "obstacle_size_m": list(params.obstacle_size_m),
        },
    )
    scene.validate(dome_center, params.dome_clearance_m - 0.1)
    return scene


def render_depth(scene, pose, intrinsics, max_range_m=DEFAULT_MAX_RANGE_M):
    """Render the z-depth frame seen from a pose.

    Nearest positive slab-test hit against the shell interior and all
    obstacle boxes per pixel-center ray; 0.0 where the z-depth exceeds
    max_range_m.
    """
    origin = np.asarray(pose.position, np.float64)
    if np.any(origin <= scene.room_min) or np.any(origin >= scene.room_max):
        raise ValueError("camera pose is outside the room")
    for box in scene.obstacles:
        if np.all(origin > box[:3]) and np.all(origin < box[3:]):
            raise ValueError("camera pose is inside an obstacle")

    dirs, norms = intrinsics.ray_grid()
    world_dirs = dirs @ pose.orientation.T
    values = kernels.render_depth(origin, world_dirs, norms, scene.shell,
                                  scene.obstacles, float(max_range_m))
    return DepthImage(values)


def full_coverage_reference(scene, dome, intrinsics=None, map_params=None,
                            max_range_m=DEFAULT_MAX_RANGE_M):
    """Surface-voxel count after integrating every dome viewpoint.

    Defines the 100%-coverage denominator for coverage ratios.
    """
    from .occmap import OccupancyMap, integrate_depth

    intrinsics = intrinsics or CameraIntrinsics()
    omap = OccupancyMap.for_room(scene.room_min, scene.room_max, map_params)
    for i in range(len(dome)):
        pose = dome.pose(i)
        depth = render_depth(scene, pose, intrinsics, max_range_m)
        integrate_depth(omap, depth, pose, intrinsics, max_range_m)
    return omap.count_surface()
