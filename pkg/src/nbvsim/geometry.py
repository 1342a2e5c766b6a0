"""Camera poses, the spherical viewpoint dome and direction-based NBV
pose selection.

The action space of the explorer is a geodesic dome: an icosahedron
subdivided n times and projected onto a sphere, every vertex carrying an
outward-looking camera pose.  Moves go to a neighboring vertex (chord
distance <= neighbor_radius_m, which guarantees view overlap); a movement
direction (up/down/left/right in the current camera frame) is resolved to
the neighbor with the largest projection onto that direction.
"""

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

WORLD_UP = np.array([0.0, 0.0, 1.0])

_ORTHO_TOL = 1e-9


class Direction(IntEnum):
    """The four movement directions, in fixed tie-breaking order."""

    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3

    @property
    def vector(self):
        """Unit direction in the camera frame (+x right, +y up)."""
        return _DIRECTION_VECTORS[self.value]


_DIRECTION_VECTORS = np.array(
    [
        [0.0, 1.0, 0.0],   # up
        [0.0, -1.0, 0.0],  # down
        [-1.0, 0.0, 0.0],  # left
        [1.0, 0.0, 0.0],   # right
    ]
)
_DIRECTION_VECTORS.setflags(write=False)


@dataclass(frozen=True)
class CameraPose:
    """Rigid camera pose: position (m) and camera-to-world orientation.

    Camera convention: +z optical axis, +x image right, +y image up.
    """

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, np.float64).reshape(3)
        rot = np.asarray(self.orientation, np.float64).reshape(3, 3)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", rot)
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > _ORTHO_TOL or abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("orientation is not a proper orthonormal matrix")

    @property
    def optical_axis(self):
        return self.orientation[:, 2]


# icosahedron with vertices on the unit sphere; the 12 base vertices stay
# first in the subdivided vertex list, which keeps the pentavalent
# (5-neighbor) vertices identifiable by index < 12.
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def _subdivide(verts, faces):
    """Split every edge at its midpoint, deduplicated by edge key.

    Midpoints stay on the planar faces; the sphere projection happens
    once, after all subdivision levels.  This keeps the lattice finest
    near the twelve base vertices, where each vertex then sees its full
    two-ring (six edge neighbors plus six diagonal ones) inside the
    default 5 cm move radius.
    """
    verts = list(verts)
    midpoint = {}

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        idx = midpoint.get(key)
        if idx is None:
            verts.append((verts[i] + verts[j]) / 2.0)
            idx = len(verts) - 1
            midpoint[key] = idx
        return idx

    new_faces = []
    for a, b, c in faces:
        ab = mid(a, b)
        bc = mid(b, c)
        ca = mid(c, a)
        new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.array(verts), np.array(new_faces, dtype=np.int64)


def _outward_orientation(radial):
    """Camera-to-world orientation looking along the outward radial, roll
    fixed by projecting world up; falls back to world +x at the poles."""
    z = radial
    y = WORLD_UP - (WORLD_UP @ z) * z
    ny = np.linalg.norm(y)
    if ny < 1e-8:
        x_seed = np.array([1.0, 0.0, 0.0])
        y = x_seed - (x_seed @ z) * z
        ny = np.linalg.norm(y)
    y = y / ny
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


@dataclass
class DomeGraph:
    """Spherical viewpoint lattice with neighbor adjacency."""

    positions: np.ndarray          # (V, 3) vertex positions, meters
    orientations: np.ndarray          # (V, 3, 3) camera-to-world orientations
    adjacency: list                # per-vertex sorted neighbor index arrays
    dome_radius_m: float
    neighbor_radius_m: float
    dome_center: np.ndarray
    subdivisions: int
    _poses: list = field(default=None, repr=False)

    def __len__(self):
        return self.positions.shape[0]

    def pose(self, index):
        if self._poses is None:
            self._poses = [None] * len(self)
        cached = self._poses[index]
        if cached is None:
            cached = CameraPose(self.positions[index], self.orientations[index])
            self._poses[index] = cached
        return cached

    @property
    def viewpoints(self):
        return [self.pose(i) for i in range(len(self))]

    def to_json_dict(self):
        return {
            "format": "nbvsim-dome",
            "version": 1,
            "subdivisions": int(self.subdivisions),
            "dome_radius_m": float(self.dome_radius_m),
            "neighbor_radius_m": float(self.neighbor_radius_m),
            "dome_center": [float(v) for v in self.dome_center],
            "viewpoints": [
                {
                    "position": [float(v) for v in self.positions[i]],
                    "orientation": [float(v) for v in self.orientations[i].reshape(9)],
                }
                for i in range(len(self))
            ],
            "adjacency": [[int(j) for j in adj] for adj in self.adjacency],
        }

    @classmethod
    def from_json_dict(cls, doc):
        if doc.get("format") != "nbvsim-dome":
            raise ValueError("not a dome document")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported dome version {doc.get('version')}")
        vps = doc["viewpoints"]
        positions = np.array([v["position"] for v in vps], np.float64)
        orientations = np.array(
            [np.reshape(v["orientation"], (3, 3)) for v in vps], np.float64
        )
        adjacency = [np.array(a, np.int64) for a in doc["adjacency"]]
        return cls(
            positions=positions,
            orientations=orientations,
            adjacency=adjacency,
            dome_radius_m=float(doc["dome_radius_m"]),
            neighbor_radius_m=float(doc["neighbor_radius_m"]),
            dome_center=np.array(doc["dome_center"], np.float64),
            subdivisions=int(doc["subdivisions"]),
        )

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def build_dome(subdivisions, dome_radius_m=0.2, center_height_m=1.5,
               neighbor_radius_m=0.05):
    """Build the geodesic viewpoint dome.

    Vertex count is 10 * 4**subdivisions + 2.  Every pose looks radially
    outward from the dome center (0, 0, center_height_m); adjacency links
    vertices within chord distance neighbor_radius_m.
    """
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    if dome_radius_m <= 0 or neighbor_radius_m <= 0:
        raise ValueError("radii must be positive")

    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
    verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)

    center = np.array([0.0, 0.0, center_height_m])
    positions = verts * dome_radius_m + center[None, :]
    orientations = np.stack([_outward_orientation(v) for v in verts])

    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    close = dist <= neighbor_radius_m
    np.fill_diagonal(close, False)
    adjacency = [np.nonzero(row)[0] for row in close]

    return DomeGraph(
        positions=positions,
        orientations=orientations,
        adjacency=adjacency,
        dome_radius_m=float(dome_radius_m),
        neighbor_radius_m=float(neighbor_radius_m),
        dome_center=center,
        subdivisions=int(subdivisions),
    )


def candidate_set(dome, current):
    """Indices of viewpoints reachable from ``current`` (its adjacency)."""
    if not 0 <= current < len(dome):
        raise IndexError(f"viewpoint index {current} out of range")
    return dome.adjacency[current]


def select_nbv_pose(current, direction, candidates):
    """Pick the candidate with the largest projection onto ``direction``.

    The direction's camera-frame unit vector is rotated into the world
    frame by the current pose; each candidate is scored by the dot
    product of its offset from the current position with that vector.
    Ties break to the lowest candidate index; negative projections are
    admissible.
    """
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    e_world = current.orientation @ direction.vector
    offsets = np.stack([c.position for c in candidates]) - current.position
    scores = offsets @ e_world
    return int(np.argmax(scores))
