"""Depth-camera 3D exploration simulator with next-best-view policies.

A camera moves on a dome of viewpoints inside procedurally generated
rooms, integrating rendered depth into a log-odds occupancy grid.
Policies (random, utility-partition gains, unknown-voxel counts,
ground-truth lookahead oracles, and a CNN direction classifier) pick
the next view; the harness scores them by surface coverage over time.
"""

from .geometry import (CameraPose, Direction, DomeGraph, build_dome,
                       candidate_set, select_nbv_pose)
from .occmap import (MapParams, OccupancyMap, PartitionScheme, UtilityMap,
                     VoxelState, count_unknown_voxels, enlarged_fov,
                     integrate_depth, partition_utility, trace_utility_map)
from .scene import (CameraIntrinsics, DepthImage, RoomParams, Scene,
                    full_coverage_reference, generate_room, render_depth)

__all__ = [
    "CameraIntrinsics", "CameraPose", "DepthImage", "Direction", "DomeGraph",
    "MapParams", "OccupancyMap", "PartitionScheme", "RoomParams", "Scene",
    "UtilityMap", "VoxelState", "build_dome", "candidate_set",
    "count_unknown_voxels", "enlarged_fov", "full_coverage_reference",
    "generate_room", "integrate_depth", "partition_utility", "render_depth",
    "select_nbv_pose", "trace_utility_map",
]

__version__ = "0.1.0"
