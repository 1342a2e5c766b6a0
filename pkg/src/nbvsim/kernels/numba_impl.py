"""Numba-compiled ray kernels.

Same call signatures and bit-identical results as ``numpy_impl``; the
backend is chosen in ``nbvsim.kernels`` via the NBVSIM_KERNELS env var.

Conventions shared by both backends:
  * ``world_dirs[r, c]`` is the unnormalized ray direction of pixel
    (row r, col c) in world coordinates; ``norms[r, c]`` is its length,
    computed from the camera-frame direction (z component 1), so
    Euclidean ray length t and z-depth z satisfy t = z * norm.
  * Voxel grids are flat float64 arrays indexed ix + nx*(iy + ny*iz).
  * The camera origin must lie strictly inside the room and inside the
    voxel grid (callers enforce this).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def render_depth(origin, world_dirs, norms, room, boxes, max_range):
    """Z-depth image from slab tests against the room shell and boxes.

    room and each row of boxes are (xmin, ymin, zmin, xmax, ymax, zmax).
    The camera is inside the room, so the room contributes its exit
    distance; boxes contribute their entry distance when positive.
    Returns float32 (H, W) with 0.0 where z-depth exceeds max_range.
    """
    h, w = world_dirs.shape[0], world_dirs.shape[1]
    nboxes = boxes.shape[0]
    depth = np.zeros((h, w), np.float32)
    for r in range(h):
        for c in range(w):
            n = norms[r, c]
            ux = world_dirs[r, c, 0] / n
            uy = world_dirs[r, c, 1] / n
            uz = world_dirs[r, c, 2] / n

            # room: farthest slab crossing per axis, then min over axes
            t1 = (room[0] - origin[0]) / ux
            t2 = (room[3] - origin[0]) / ux
            tx = t1 if t1 > t2 else t2
            t1 = (room[1] - origin[1]) / uy
            t2 = (room[4] - origin[1]) / uy
            ty = t1 if t1 > t2 else t2
            t1 = (room[2] - origin[2]) / uz
            t2 = (room[5] - origin[2]) / uz
            tz = t1 if t1 > t2 else t2
            tbest = tx
            if ty < tbest:
                tbest = ty
            if tz < tbest:
                tbest = tz

            for b in range(nboxes):
                t1 = (boxes[b, 0] - origin[0]) / ux
                t2 = (boxes[b, 3] - origin[0]) / ux
                lox = t1 if t1 < t2 else t2
                hix = t1 if t1 > t2 else t2
                t1 = (boxes[b, 1] - origin[1]) / uy
                t2 = (boxes[b, 4] - origin[1]) / uy
                loy = t1 if t1 < t2 else t2
                hiy = t1 if t1 > t2 else t2
                t1 = (boxes[b, 2] - origin[2]) / uz
                t2 = (boxes[b, 5] - origin[2]) / uz
                loz = t1 if t1 < t2 else t2
                hiz = t1 if t1 > t2 else t2
                entry = lox
                if loy > entry:
                    entry = loy
                if loz > entry:
                    entry = loz
                exit_ = hix
                if hiy < exit_:
                    exit_ = hiy
                if hiz < exit_:
                    exit_ = hiz
                if entry <= exit_ and entry > 0.0 and entry < tbest:
                    tbest = entry

            z = tbest / n
            if z <= max_range:
                depth[r, c] = np.float32(z)
    return depth


@njit(cache=True)
def hit_miss_counts(nx, ny, nz, map_origin, res, origin, world_dirs, norms,
                    depth, max_range):
    """Per-voxel hit/miss ray counts for one depth frame.

    Each pixel ray is walked by amortized grid traversal from the camera
    to its endpoint (the measured z-depth, or max_range for sentinel-0
    pixels).  Every traversed voxel except the endpoint voxel counts one
    miss per ray; the endpoint voxel of a non-sentinel ray counts one
    hit.  Returns (miss, hit) int64 flat arrays.
    """
    h, w = world_dirs.shape[0], world_dirs.shape[1]
    miss = np.zeros(nx * ny * nz, np.int64)
    hit = np.zeros(nx * ny * nz, np.int64)

    sx = int(np.floor((origin[0] - map_origin[0]) / res))
    sy = int(np.floor((origin[1] - map_origin[1]) / res))
    sz = int(np.floor((origin[2] - map_origin[2]) / res))

    for r in range(h):
        for c in range(w):
            n = norms[r, c]
            ux = world_dirs[r, c, 0] / n
            uy = world_dirs[r, c, 1] / n
            uz = world_dirs[r, c, 2] / n
            z = np.float64(depth[r, c])
            has_hit = z > 0.0
            if has_hit:
                t_end = z * n
            else:
                t_end = max_range * n

            ex = int(np.floor((origin[0] + ux * t_end - map_origin[0]) / res))
            ey = int(np.floor((origin[1] + uy * t_end - map_origin[1]) / res))
            ez = int(np.floor((origin[2] + uz * t_end - map_origin[2]) / res))

            vx, vy, vz = sx, sy, sz
            stx = 1 if ux > 0.0 else (-1 if ux < 0.0 else 0)
            sty = 1 if uy > 0.0 else (-1 if uy < 0.0 else 0)
            stz = 1 if uz > 0.0 else (-1 if uz < 0.0 else 0)
            if ux != 0.0:
                bx = 1 if stx > 0 else 0
                tmx = ((vx + bx) * res + map_origin[0] - origin[0]) / ux
                tdx = res / abs(ux)
            else:
                tmx = np.inf
                tdx = np.inf
            if uy != 0.0:
                by = 1 if sty > 0 else 0
                tmy = ((vy + by) * res + map_origin[1] - origin[1]) / uy
                tdy = res / abs(uy)
            else:
                tmy = np.inf
                tdy = np.inf
            if uz != 0.0:
                bz = 1 if stz > 0 else 0
                tmz = ((vz + bz) * res + map_origin[2] - origin[2]) / uz
                tdz = res / abs(uz)
            else:
                tmz = np.inf
                tdz = np.inf

            while True:
                if not (has_hit and vx == ex and vy == ey and vz == ez):
                    miss[vx + nx * (vy + ny * vz)] += 1
                a = 0
                tnext = tmx
                if tmy < tnext:
                    a = 1
                    tnext = tmy
                if tmz < tnext:
                    a = 2
                    tnext = tmz
                if tnext >= t_end:
                    break
                if a == 0:
                    vx += stx
                    if vx < 0 or vx >= nx:
                        break
                    tmx += tdx
                elif a == 1:
                    vy += sty
                    if vy < 0 or vy >= ny:
                        break
                    tmy += tdy
                else:
                    vz += stz
                    if vz < 0 or vz >= nz:
                        break
                    tmz += tdz

            if has_hit and 0 <= ex < nx and 0 <= ey < ny and 0 <= ez < nz:
                hit[ex + nx * (ey + ny * ez)] += 1
    return miss, hit


@njit(cache=True)
def trace_unknown_bits(log_odds, nx, ny, nz, map_origin, res, origin,
                       world_dirs, norms, max_range, l_free, l_occ):
    """Binary map of rays whose nearest unvisited voxel is Unknown.

    Rays traverse Free voxels (already-visited space); the first
    non-Free voxel within Euclidean max_range decides the bit: Unknown
    (l_free < l < l_occ) sets 1, Occupied (l >= l_occ) sets 0.  A ray
    that exhausts its range or leaves the grid while still in Free space
    found nothing unexplored and stays 0.  The origin voxel is never
    evaluated — it is the sensor's own location.
    """
    h, w = world_dirs.shape[0], world_dirs.shape[1]
    bits = np.zeros((h, w), np.uint8)

    sx = int(np.floor((origin[0] - map_origin[0]) / res))
    sy = int(np.floor((origin[1] - map_origin[1]) / res))
    sz = int(np.floor((origin[2] - map_origin[2]) / res))

    for r in range(h):
        for c in range(w):
            n = norms[r, c]
            ux = world_dirs[r, c, 0] / n
            uy = world_dirs[r, c, 1] / n
            uz = world_dirs[r, c, 2] / n
            t_end = max_range

            vx, vy, vz = sx, sy, sz
            stx = 1 if ux > 0.0 else (-1 if ux < 0.0 else 0)
            sty = 1 if uy > 0.0 else (-1 if uy < 0.0 else 0)
            stz = 1 if uz > 0.0 else (-1 if uz < 0.0 else 0)
            if ux != 0.0:
                bx = 1 if stx > 0 else 0
                tmx = ((vx + bx) * res + map_origin[0] - origin[0]) / ux
                tdx = res / abs(ux)
            else:
                tmx = np.inf
                tdx = np.inf
            if uy != 0.0:
                by = 1 if sty > 0 else 0
                tmy = ((vy + by) * res + map_origin[1] - origin[1]) / uy
                tdy = res / abs(uy)
            else:
                tmy = np.inf
                tdy = np.inf
            if uz != 0.0:
                bz = 1 if stz > 0 else 0
                tmz = ((vz + bz) * res + map_origin[2] - origin[2]) / uz
                tdz = res / abs(uz)
            else:
                tmz = np.inf
                tdz = np.inf

            while True:
                a = 0
                tnext = tmx
                if tmy < tnext:
                    a = 1
                    tnext = tmy
                if tmz < tnext:
                    a = 2
                    tnext = tmz
                if tnext >= t_end:
                    break
                if a == 0:
                    vx += stx
                    if vx < 0 or vx >= nx:
                        break
                    tmx += tdx
                elif a == 1:
                    vy += sty
                    if vy < 0 or vy >= ny:
                        break
                    tmy += tdy
                else:
                    vz += stz
                    if vz < 0 or vz >= nz:
                        break
                    tmz += tdz
                l = log_odds[vx + nx * (vy + ny * vz)]
                if l >= l_occ:
                    break
                if l > l_free:
                    bits[r, c] = 1
                    break
    return bits


@njit(cache=True)
def count_unknown_voxels(log_odds, nx, ny, nz, map_origin, res, origin,
                         world_dirs, norms, max_range, l_free, l_occ,
                         visited):
    """Distinct Unknown voxels traversed by the ray grid.

    Rays stop at the first Occupied voxel and pass through Free ones;
    as in trace_unknown_bits, the origin voxel is never evaluated.
    visited is a caller-provided uint8 scratch array (all zero, flat grid
    size); it is mutated.
    """
    h, w = world_dirs.shape[0], world_dirs.shape[1]
    count = 0

    sx = int(np.floor((origin[0] - map_origin[0]) / res))
    sy = int(np.floor((origin[1] - map_origin[1]) / res))
    sz = int(np.floor((origin[2] - map_origin[2]) / res))

    for r in range(h):
        for c in range(w):
            n = norms[r, c]
            ux = world_dirs[r, c, 0] / n
            uy = world_dirs[r, c, 1] / n
            uz = world_dirs[r, c, 2] / n
            t_end = max_range

            vx, vy, vz = sx, sy, sz
            stx = 1 if ux > 0.0 else (-1 if ux < 0.0 else 0)
            sty = 1 if uy > 0.0 else (-1 if uy < 0.0 else 0)
            stz = 1 if uz > 0.0 else (-1 if uz < 0.0 else 0)
            if ux != 0.0:
                bx = 1 if stx > 0 else 0
                tmx = ((vx + bx) * res + map_origin[0] - origin[0]) / ux
                tdx = res / abs(ux)
            else:
                tmx = np.inf
                tdx = np.inf
            if uy != 0.0:
                by = 1 if sty > 0 else 0
                tmy = ((vy + by) * res + map_origin[1] - origin[1]) / uy
                tdy = res / abs(uy)
            else:
                tmy = np.inf
                tdy = np.inf
            if uz != 0.0:
                bz = 1 if stz > 0 else 0
                tmz = ((vz + bz) * res + map_origin[2] - origin[2]) / uz
                tdz = res / abs(uz)
            else:
                tmz = np.inf
                tdz = np.inf

            while True:
                a = 0
                tnext = tmx
                if tmy < tnext:
                    a = 1
                    tnext = tmy
                if tmz < tnext:
                    a = 2
                    tnext = tmz
                if tnext >= t_end:
                    break
                if a == 0:
                    vx += stx
                    if vx < 0 or vx >= nx:
                        break
                    tmx += tdx
                elif a == 1:
                    vy += sty
                    if vy < 0 or vy >= ny:
                        break
                    tmy += tdy
                else:
                    vz += stz
                    if vz < 0 or vz >= nz:
                        break
                    tmz += tdz
                flat = vx + nx * (vy + ny * vz)
                l = log_odds[flat]
                if l >= l_occ:
                    break
                if l > l_free:
                    if visited[flat] == 0:
                        visited[flat] = 1
                        count += 1
    return count
