"""Next-best-view decision policies.

Every policy is a pure function of an ExplorationContext: random
candidate choice, partitioned-utility gain (triangular or rectangular),
per-candidate unknown-voxel counts, ground-truth lookahead oracles, and
the CNN direction classifier.  Direction-valued decisions are resolved
to a dome vertex with geometry.select_nbv_pose; ties always break by
the fixed Up, Down, Left, Right order so replays are deterministic.
"""

from dataclasses import dataclass, field

import numpy as np

from .geometry import Direction, select_nbv_pose
from .occmap import (PartitionScheme, count_unknown_voxels, enlarged_fov,
                     integrate_depth, partition_utility, trace_utility_map)
from . import nn
from .scene import CameraIntrinsics, render_depth


def utility_intrinsics(dome, intrinsics, size=nn.INPUT_SIZE):
    """Square raster over the FoV enlarged by two moves on this dome."""
    hfov, vfov = enlarged_fov(
        (intrinsics.hfov_deg, intrinsics.vfov_deg),
        neighbor_radius_m=dome.neighbor_radius_m,
        dome_radius_m=dome.dome_radius_m)
    return CameraIntrinsics(size, size, hfov, vfov)


@dataclass(frozen=True)
class PolicyDecision:
    """Either a movement direction or a candidate index, never both."""

    direction: Direction = None
    pose_index: int = None

    def __post_init__(self):
        if (self.direction is None) == (self.pose_index is None):
            raise ValueError("set exactly one of direction / pose_index")


@dataclass
class ExplorationContext:
    """Everything a policy may consult when deciding the next view.

    `candidates` holds dome vertex indices (the current vertex's
    neighbors); `scene` is ground truth and only the oracle policies
    read it.  The utility map is traced lazily on first use so policies
    that never look at it do not pay for it.
    """

    dome: object
    map: object
    current_index: int
    current_pose: object
    current_depth: object
    candidates: np.ndarray
    rng: np.random.Generator
    intrinsics: object
    utility_intrinsics: object
    scene: object = None
    max_range_m: float = 10.0
    _utility_map: object = field(default=None, repr=False)

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, np.int64)
        if self.candidates.size == 0:
            raise ValueError("candidate set is empty")

    def candidate_poses(self):
        return [self.dome.pose(int(i)) for i in self.candidates]

    def utility_map(self):
        if self._utility_map is None:
            self._utility_map = trace_utility_map(
                self.map, self.current_pose, self.utility_intrinsics,
                self.max_range_m)
        return self._utility_map


def resolve_decision(ctx, decision):
    """Map a decision to the chosen dome vertex index."""
    if decision.direction is not None:
        j = select_nbv_pose(ctx.current_pose, decision.direction,
                            ctx.candidate_poses())
    else:
        j = decision.pose_index
        if not 0 <= j < ctx.candidates.size:
            raise ValueError(f"pose index {j} outside candidate set")
    return int(ctx.candidates[j])


def random_decide(ctx):
    """Uniform candidate choice from the context's rng stream."""
    return PolicyDecision(pose_index=int(ctx.rng.integers(ctx.candidates.size)))


def basegain_decide(ctx, scheme=PartitionScheme.TRIANGULAR):
    """Argmax direction over the partitioned utility-map bit sums."""
    _, sums = partition_utility(ctx.utility_map(), scheme)
    return PolicyDecision(direction=Direction(int(np.argmax(sums))))


def count_decide(ctx):
    """Argmax candidate by distinct Unknown voxels its sensor rays touch."""
    counts = [count_unknown_voxels(ctx.map, pose, ctx.intrinsics,
                                   ctx.max_range_m)
              for pose in ctx.candidate_poses()]
    return PolicyDecision(pose_index=int(np.argmax(counts)))


def oracle_decide(ctx, steps):
    """Ground-truth lookahead: best direction after `steps` straight moves.

    For each direction the camera repeatedly takes the furthest
    candidate along that same direction (re-derived from each reached
    pose), rendering and integrating the true depth at every reached
    vertex into a clone of the map; the direction whose clone exposes
    the most Occupied voxels wins.  A branch whose candidate set runs
    out is scored with what it integrated so far.
    """
    if steps not in (1, 2, 3):
        raise ValueError(f"lookahead steps must be 1, 2 or 3, got {steps}")
    if ctx.scene is None:
        raise ValueError("oracle policy needs the ground-truth scene")
    scores = []
    for direction in Direction:
        clone = ctx.map.clone()
        vertex = ctx.current_index
        for _ in range(steps):
            cand = ctx.dome.adjacency[vertex]
            if cand.size == 0:
                break
            poses = [ctx.dome.pose(int(i)) for i in cand]
            j = select_nbv_pose(ctx.dome.pose(vertex), direction, poses)
            vertex = int(cand[j])
            pose = ctx.dome.pose(vertex)
            depth = render_depth(ctx.scene, pose, ctx.intrinsics,
                                 ctx.max_range_m)
            integrate_depth(clone, depth, pose, ctx.intrinsics,
                            ctx.max_range_m)
        scores.append(clone.count_surface())
    return PolicyDecision(direction=Direction(int(np.argmax(scores))))


def cnn_decide(ctx, weights, variant=None):
    """Argmax logit of the direction classifier on the assembled input."""
    if variant is None:
        variant = weights.variant
    elif variant != weights.variant:
        raise ValueError(
            f"requested variant {variant.value} but weights are for "
            f"{weights.variant.value}"
        )
    umap = ctx.utility_map()
    x = nn.assemble_input(
        variant, ctx.current_depth, umap,
        sensor_fov_deg=(ctx.intrinsics.hfov_deg, ctx.intrinsics.vfov_deg),
        utility_fov_deg=umap.fov_deg, max_range_m=ctx.max_range_m)
    logits = nn.forward(weights, x)
    return PolicyDecision(direction=Direction(int(np.argmax(logits))))


@dataclass(frozen=True)
class Policy:
    """A named decision function (ctx -> PolicyDecision)."""

    name: str
    decide: object
    needs_scene: bool = False


def parse_policy(text):
    """Build a Policy from its selector string.

    Grammar: random | basegain | basegain-rect | count |
    oracle1 | oracle2 | oracle3 | cnn:<weights-path>:<variant>
    """
    if text == "random":
        return Policy("random", random_decide)
    if text == "basegain":
        return Policy("basegain", basegain_decide)
    if text == "basegain-rect":
        return Policy(
            "basegain-rect",
            lambda ctx: basegain_decide(ctx, PartitionScheme.RECTANGULAR))
    if text == "count":
        return Policy("count", count_decide)
    if text in ("oracle1", "oracle2", "oracle3"):
        steps = int(text[-1])
        return Policy(text, lambda ctx: oracle_decide(ctx, steps),
                      needs_scene=True)
    if text.startswith("cnn:"):
        parts = text.split(":")
        if len(parts) < 3:
            raise ValueError(
                f"bad cnn policy {text!r}: expected cnn:<weights-path>:<variant>")
        path = ":".join(parts[1:-1])
        variant = nn.InputVariant.parse(parts[-1])
        weights = nn.load_weights(path)
        if weights.variant != variant:
            raise ValueError(
                f"weights at {path} are for variant "
                f"{weights.variant.value}, not {variant.value}"
            )
        return Policy(text, lambda ctx: cnn_decide(ctx, weights, variant))
    raise ValueError(
        f"unknown policy {text!r}: expected random | basegain | "
        f"basegain-rect | count | oracle1 | oracle2 | oracle3 | "
        f"cnn:<weights-path>:<variant>"
    )
