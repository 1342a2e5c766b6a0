"""Volumetric reconstruction state: log-odds occupancy grid, depth
integration, utility-map ray tracing and utility-map partitioning.

The map is a dense voxel grid of log-odds values (0 = never touched =
Unknown).  Depth frames are integrated octomap-style: every voxel a
pixel ray traverses before its endpoint gets the miss update, the
endpoint voxel gets the hit update, and values are clamped.  Utility
maps record, for a grid of rays over an enlarged field of view, which
rays see only Unknown voxels — the unexplored directions around a pose.
"""

import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import kernels

_SNAPSHOT_MAGIC = b"NBVM"
_SNAPSHOT_VERSION = 1


class VoxelState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


@dataclass(frozen=True)
class MapParams:
    """Grid resolution, sensor model and state thresholds."""

    resolution_m: float = 0.05
    p_hit: float = 0.7
    p_miss: float = 0.4
    l_min: float = -2.0
    l_max: float = 3.5
    p_occ: float = 0.65
    p_free: float = 0.35

    def __post_init__(self):
        if not 0.5 < self.p_hit < 1.0:
            raise ValueError("p_hit must be in (0.5, 1)")
        if not 0.0 < self.p_miss < 0.5:
            raise ValueError("p_miss must be in (0, 0.5)")
        if not self.p_free < 0.5 < self.p_occ:
            raise ValueError("require p_free < 0.5 < p_occ")
        if self.resolution_m <= 0:
            raise ValueError("resolution must be positive")
        if self.l_min >= self.l_max:
            raise ValueError("require l_min < l_max")

    @property
    def l_hit(self):
        return float(np.log(self.p_hit / (1.0 - self.p_hit)))

    @property
    def l_miss(self):
        return float(np.log(self.p_miss / (1.0 - self.p_miss)))

    @property
    def l_occ(self):
        return float(np.log(self.p_occ / (1.0 - self.p_occ)))

    @property
    def l_free(self):
        return float(np.log(self.p_free / (1.0 - self.p_free)))


@dataclass
class OccupancyMap:
    """Dense log-odds occupancy grid, flat array indexed x-fastest."""

    origin: np.ndarray
    dims: tuple                    # (nx, ny, nz)
    params: MapParams = field(default_factory=MapParams)
    log_odds: np.ndarray = None
    surface_mask: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, np.float64).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if any(d <= 0 for d in self.dims):
            raise ValueError("grid dims must be positive")
        n = self.dims[0] * self.dims[1] * self.dims[2]
        if self.log_odds is None:
            self.log_odds = np.zeros(n, np.float64)
        else:
            self.log_odds = np.asarray(self.log_odds, np.float64).reshape(n)
        if self.surface_mask is None:
            self.surface_mask = (
                self.log_odds >= self.params.l_occ).astype(np.uint8)
        else:
            self.surface_mask = np.asarray(self.surface_mask,
                                           np.uint8).reshape(n)

    @classmethod
    def for_room(cls, room_min, room_max, params=None):
        """Grid covering a room shell, offset half a voxel so the wall
        planes land mid-voxel.

        Wall planes on voxel boundaries would let endpoint rounding
        scatter wall hits across two voxel layers, leaving Unknown holes
        in the wall crust; the half-voxel offset makes every wall hit
        land in the interior of a single voxel layer.
        """
        params = params or MapParams()
        room_min = np.asarray(room_min, np.float64)
        room_max = np.asarray(room_max, np.float64)
        res = params.resolution_m
        dims = np.ceil((room_max - room_min + res) / res - 1e-9).astype(int)
        return cls(origin=room_min - res / 2.0, dims=tuple(dims), params=params)

    def clone(self):
        return OccupancyMap(origin=self.origin.copy(), dims=self.dims,
                            params=self.params, log_odds=self.log_odds.copy(),
                            surface_mask=self.surface_mask.copy())

    def probabilities(self):
        return 1.0 / (1.0 + np.exp(-self.log_odds))

    def states(self):
        """Per-voxel VoxelState values (flat uint8 array)."""
        out = np.zeros(self.log_odds.shape, np.uint8)
        out[self.log_odds <= self.params.l_free] = VoxelState.FREE
        out[self.log_odds >= self.params.l_occ] = VoxelState.OCCUPIED
        return out

    def count_surface(self):
        """Number of voxels that have ever reached the Occupied state.

        Reconstructed surface stays counted even if later grazing rays
        (which legitimately pass through a corner of a surface voxel)
        erode its log-odds below the threshold again — otherwise
        coverage could tick backwards without the scene changing.
        """
        return int(np.count_nonzero(self.surface_mask))

    def voxel_index(self, point):
        """Flat index of the voxel containing a world point."""
        v = np.floor((np.asarray(point) - self.origin) /
                     self.params.resolution_m).astype(int)
        nx, ny, nz = self.dims
        if np.any(v < 0) or v[0] >= nx or v[1] >= ny or v[2] >= nz:
            raise IndexError("point outside the grid")
        return int(v[0] + nx * (v[1] + ny * v[2]))

    def save_snapshot(self, path):
        """Binary snapshot: magic, version, dims, resolution, origin, then
        raw little-endian float32 log-odds and the ever-occupied mask
        bytes, both x-fastest."""
        header = struct.pack(
            "<4sIIII d ddd", _SNAPSHOT_MAGIC, _SNAPSHOT_VERSION,
            *self.dims, self.params.resolution_m, *self.origin,
        )
        with open(path, "wb") as f:
            f.write(header)
            f.write(self.log_odds.astype("<f4").tobytes())
            f.write(self.surface_mask.tobytes())

    @classmethod
    def load_snapshot(cls, path, params=None):
        with open(path, "rb") as f:
            blob = f.read()
        head = struct.calcsize("<4sIIII d ddd")
        magic, version, nx, ny, nz, res, ox, oy, oz = struct.unpack(
            "<4sIIII d ddd", blob[:head]
        )
        if magic != _SNAPSHOT_MAGIC:
            raise ValueError("not a map snapshot")
        if version != _SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        params = params or MapParams()
        if abs(params.resolution_m - res) > 1e-12:
            params = MapParams(
                resolution_m=res, p_hit=params.p_hit, p_miss=params.p_miss,
                l_min=params.l_min, l_max=params.l_max,
                p_occ=params.p_occ, p_free=params.p_free,
            )
        n = nx * ny * nz
        if len(blob) - head != n * 4 + n:
            raise ValueError("snapshot payload size does not match dims")
        values = np.frombuffer(blob[head:head + n * 4], "<f4")
        mask = np.frombuffer(blob[head + n * 4:], np.uint8)
        return cls(origin=np.array([ox, oy, oz]), dims=(nx, ny, nz),
                   params=params, log_odds=values.astype(np.float64),
                   surface_mask=mask.copy())


def integrate_depth(omap, depth, pose, intrinsics, max_range_m=10.0):
    """Integrate one depth frame into the map (in place; returns the map).

    Every voxel a ray traverses strictly before its endpoint gets the
    miss update, the endpoint voxel the hit update; sentinel-0 pixels
    carve free space out to max_range with no hit.  A voxel crossed by
    several rays of the same frame is updated once per ray.  Log-odds
    are clamped after the frame's updates are accumulated — the updates
    are whole-frame sums of per-ray increments, so clamping inside the
    frame cannot reorder results between backends.
    """
    if (depth.height, depth.width) != (intrinsics.height, intrinsics.width):
        raise ValueError("depth dimensions do not match intrinsics")
    dirs, norms = intrinsics.ray_grid()
    world_dirs = dirs @ pose.orientation.T
    nx, ny, nz = omap.dims
    miss, hit = kernels.hit_miss_counts(
        nx, ny, nz, omap.origin, omap.params.resolution_m,
        np.asarray(pose.position, np.float64), world_dirs, norms,
        depth.values, float(max_range_m),
    )
    p = omap.params
    omap.log_odds += miss * p.l_miss + hit * p.l_hit
    np.clip(omap.log_odds, p.l_min, p.l_max, out=omap.log_odds)
    touched = np.flatnonzero(hit)  # only hit voxels can newly cross
    crossed = omap.log_odds[touched] >= p.l_occ
    omap.surface_mask[touched[crossed]] = 1
    return omap


@dataclass(frozen=True)
class UtilityMap:
    """Binary image over the enlarged FoV: 1 marks an unexplored ray."""

    bits: np.ndarray
    fov_deg: tuple                 # (hfov_deg, vfov_deg) used for tracing

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, np.uint8)
        if bits.ndim != 2 or not np.all((bits == 0) | (bits == 1)):
            raise ValueError("utility bits must be a 2-D 0/1 array")
        object.__setattr__(self, "bits", bits)

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def height(self):
        return self.bits.shape[0]


def enlarged_fov(fov_deg, neighbor_radius_m=0.05, dome_radius_m=0.2, steps=2):
    """Field of view widened by the angular reach of `steps` dome moves.

    One move displaces the viewpoint by at most the neighbor radius
    (a chord), i.e. an angle delta = 2*arcsin(r / (2*R)); the enlarged
    FoV adds `steps` deltas on each side of the axis.  Accepts a single
    angle or an (hfov, vfov) pair.
    """
    delta = 2.0 * np.arcsin(neighbor_radius_m / (2.0 * dome_radius_m))
    pad = 2.0 * steps * np.degrees(delta)
    if np.ndim(fov_deg) == 0:
        return float(fov_deg + pad)
    return tuple(float(f + pad) for f in fov_deg)


def trace_utility_map(omap, pose, utility_intrinsics, max_range_m=10.0):
    """Trace the binary utility map seen from a pose.

    One ray per pixel over the (already enlarged) utility FoV.  A ray
    traverses Free voxels — they are visited space — and its first
    non-Free voxel within max_range_m (Euclidean) decides the bit:
    Unknown marks the direction unexplored (1), Occupied marks it
    visited (0), as does running out of range or grid while still in
    Free space.  The pose's own voxel is exempt from evaluation: it is
    carved Free by the pose's own frame.
    """
    dirs, norms = utility_intrinsics.ray_grid()
    world_dirs = dirs @ pose.orientation.T
    nx, ny, nz = omap.dims
    p = omap.params
    bits = kernels.trace_unknown_bits(
        omap.log_odds, nx, ny, nz, omap.origin, p.resolution_m,
        np.asarray(pose.position, np.float64), world_dirs, norms,
        float(max_range_m), p.l_free, p.l_occ,
    )
    return UtilityMap(bits, (utility_intrinsics.hfov_deg,
                             utility_intrinsics.vfov_deg))


def count_unknown_voxels(omap, pose, intrinsics, max_range_m=10.0):
    """Count distinct Unknown voxels the pose's ray grid traverses.

    Same traversal rule as trace_utility_map — rays pass through Free
    voxels, stop at Occupied, and the pose's own voxel is exempt — but
    every Unknown voxel touched is counted once, not just the first per
    ray.
    """
    dirs, norms = intrinsics.ray_grid()
    world_dirs = dirs @ pose.orientation.T
    nx, ny, nz = omap.dims
    p = omap.params
    visited = np.zeros(omap.log_odds.size, np.uint8)
    return kernels.count_unknown_voxels(
        omap.log_odds, nx, ny, nz, omap.origin, p.resolution_m,
        np.asarray(pose.position, np.float64), world_dirs, norms,
        float(max_range_m), p.l_free, p.l_occ, visited,
    )


class PartitionScheme(Enum):
    TRIANGULAR = "triangular"      # non-overlapping diagonal quadrants
    RECTANGULAR = "rect"           # overlapping half-image rectangles


def _triangle_masks(height, width):
    """Boolean masks of the four diagonal quadrants, ordered U, D, L, R.

    Pixel centers are compared against the two image diagonals using the
    integer cross products A = (2r+1)W - (2c+1)H (main diagonal) and
    B = (2r+1)W + (2c+1)H - 2WH (anti-diagonal); centers exactly on a
    diagonal join the vertical (Up/Down) quadrants.
    """
    r = np.arange(height, dtype=np.int64)[:, None]
    c = np.arange(width, dtype=np.int64)[None, :]
    a = (2 * r + 1) * width - (2 * c + 1) * height
    b = (2 * r + 1) * width + (2 * c + 1) * height - 2 * width * height
    up = (a <= 0) & (b <= 0)
    down = ~up & (a >= 0) & (b >= 0)
    left = ~up & ~down & (a > 0) & (b < 0)
    right = ~(up | down | left)
    return up, down, left, right


def _rect_masks(height, width):
    """Top/bottom/left/right half-image masks, ordered U, D, L, R."""
    r = np.arange(height)[:, None] * np.ones((1, width), bool)
    c = np.ones((height, 1), bool) * np.arange(width)[None, :]
    up = r < (height + 1) // 2
    down = r >= height // 2
    left = c < (width + 1) // 2
    right = c >= width // 2
    return up, down, left, right


def partition_utility(umap, scheme):
    """Split a utility map into four direction regions (U, D, L, R).

    Returns (maps, sums): four UtilityMaps with out-of-region pixels
    zeroed, and the four region bit sums, in direction order.
    """
    if scheme == PartitionScheme.TRIANGULAR:
        masks = _triangle_masks(umap.height, umap.width)
    elif scheme == PartitionScheme.RECTANGULAR:
        masks = _rect_masks(umap.height, umap.width)
    else:
        raise ValueError(f"unknown partition scheme: {scheme!r}")
    maps = []
    sums = []
    for mask in masks:
        bits = np.where(mask, umap.bits, 0).astype(np.uint8)
        maps.append(UtilityMap(bits, umap.fov_deg))
        sums.append(int(bits.sum()))
    return maps, sums
