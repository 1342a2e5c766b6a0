"""Pure-numpy ray kernels (fallback backend).

Vectorized over rays but arithmetically identical to ``numba_impl``:
same expression order, same tie-breaking (lowest axis index on equal
boundary crossings), same float64 accumulation of the traversal
parameters.  Cross-backend bit equality is covered by tests.
"""

import numpy as np

_DIMS = None  # placeholder to keep module attrs minimal


def _ray_setup(origin, world_dirs, norms):
    h, w = world_dirs.shape[0], world_dirs.shape[1]
    p = h * w
    n = norms.reshape(p)
    u = world_dirs.reshape(p, 3) / n[:, None]
    return h, w, p, n, u


def _dda_init(u, origin, map_origin, res):
    p = u.shape[0]
    start = np.floor((origin - map_origin) / res).astype(np.int64)
    v = np.tile(start, (p, 1))
    step = np.zeros((p, 3), np.int64)
    step[u > 0.0] = 1
    step[u < 0.0] = -1
    b = (step > 0).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max = ((v + b) * res + map_origin[None, :] - origin[None, :]) / u
        t_delta = res / np.abs(u)
    zero = u == 0.0
    t_max[zero] = np.inf
    t_delta[zero] = np.inf
    return v, step, t_max, t_delta


def render_depth(origin, world_dirs, norms, room, boxes, max_range):
    """See numba_impl.render_depth."""
    h, w, p, n, u = _ray_setup(origin, world_dirs, norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (room[None, :3] - origin[None, :]) / u
        t2 = (room[None, 3:] - origin[None, :]) / u
        tbest = np.maximum(t1, t2).min(axis=1)
        if boxes.shape[0] > 0:
            bt1 = (boxes[None, :, :3] - origin[None, None, :]) / u[:, None, :]
            bt2 = (boxes[None, :, 3:] - origin[None, None, :]) / u[:, None, :]
            entry = np.minimum(bt1, bt2).max(axis=2)
            exit_ = np.maximum(bt1, bt2).min(axis=2)
            entry[~((entry <= exit_) & (entry > 0.0))] = np.inf
            tbest = np.minimum(tbest, entry.min(axis=1))
    z = tbest / n
    out = np.where(z <= max_range, z, 0.0).astype(np.float32)
    return out.reshape(h, w)


def hit_miss_counts(nx, ny, nz, map_origin, res, origin, world_dirs, norms,
                    depth, max_range):
    """See numba_impl.hit_miss_counts."""
    h, w, p, n, u = _ray_setup(origin, world_dirs, norms)
    miss = np.zeros(nx * ny * nz, np.int64)
    hit = np.zeros(nx * ny * nz, np.int64)

    z = depth.reshape(p).astype(np.float64)
    has_hit = z > 0.0
    t_end = np.where(has_hit, z * n, max_range * n)
    end = np.floor(
        (origin[None, :] + u * t_end[:, None] - map_origin[None, :]) / res
    ).astype(np.int64)

    v, step, t_max, t_delta = _dda_init(u, origin, map_origin, res)
    dims = np.array([nx, ny, nz], np.int64)
    active = np.ones(p, bool)
    while active.any():
        idx = np.nonzero(active)[0]
        vv = v[idx]
        flat = vv[:, 0] + nx * (vv[:, 1] + ny * vv[:, 2])
        at_end = has_hit[idx] & (vv == end[idx]).all(axis=1)
        np.add.at(miss, flat[~at_end], 1)

        tm = t_max[idx]
        a = np.argmin(tm, axis=1)
        tnext = tm[np.arange(len(idx)), a]
        cont = tnext < t_end[idx]
        active[idx[~cont]] = False
        go = idx[cont]
        ag = a[cont]
        v[go, ag] += step[go, ag]
        oob = (v[go, ag] < 0) | (v[go, ag] >= dims[ag])
        active[go[oob]] = False
        t_max[go, ag] += t_delta[go, ag]

    in_grid = ((end >= 0) & (end < dims[None, :])).all(axis=1)
    sel = has_hit & in_grid
    np.add.at(hit, end[sel, 0] + nx * (end[sel, 1] + ny * end[sel, 2]), 1)
    return miss, hit


def trace_unknown_bits(log_odds, nx, ny, nz, map_origin, res, origin,
                       world_dirs, norms, max_range, l_free, l_occ):
    """See numba_impl.trace_unknown_bits: rays traverse Free voxels and
    the first non-Free voxel decides the bit (origin voxel exempt)."""
    h, w, p, n, u = _ray_setup(origin, world_dirs, norms)
    bits = np.zeros(p, np.uint8)

    v, step, t_max, t_delta = _dda_init(u, origin, map_origin, res)
    dims = np.array([nx, ny, nz], np.int64)
    active = np.ones(p, bool)
    while active.any():
        idx = np.nonzero(active)[0]
        tm = t_max[idx]
        a = np.argmin(tm, axis=1)
        tnext = tm[np.arange(len(idx)), a]
        cont = tnext < max_range
        active[idx[~cont]] = False
        go = idx[cont]
        ag = a[cont]
        v[go, ag] += step[go, ag]
        oob = (v[go, ag] < 0) | (v[go, ag] >= dims[ag])
        active[go[oob]] = False
        t_max[go, ag] += t_delta[go, ag]

        ev = go[~oob]
        if ev.size == 0:
            continue
        vv = v[ev]
        flat = vv[:, 0] + nx * (vv[:, 1] + ny * vv[:, 2])
        l = log_odds[flat]
        occupied = l >= l_occ
        unknown = (~occupied) & (l > l_free)
        bits[ev[unknown]] = 1
        active[ev[occupied | unknown]] = False
    return bits.reshape(h, w)


def count_unknown_voxels(log_odds, nx, ny, nz, map_origin, res, origin,
                         world_dirs, norms, max_range, l_free, l_occ,
                         visited):
    """See numba_impl.count_unknown_voxels (origin voxel never evaluated)."""
    h, w, p, n, u = _ray_setup(origin, world_dirs, norms)

    v, step, t_max, t_delta = _dda_init(u, origin, map_origin, res)
    dims = np.array([nx, ny, nz], np.int64)
    active = np.ones(p, bool)
    while active.any():
        idx = np.nonzero(active)[0]
        tm = t_max[idx]
        a = np.argmin(tm, axis=1)
        tnext = tm[np.arange(len(idx)), a]
        cont = tnext < max_range
        active[idx[~cont]] = False
        go = idx[cont]
        ag = a[cont]
        v[go, ag] += step[go, ag]
        oob = (v[go, ag] < 0) | (v[go, ag] >= dims[ag])
        active[go[oob]] = False
        t_max[go, ag] += t_delta[go, ag]

        ev = go[~oob]
        if ev.size == 0:
            continue
        vv = v[ev]
        flat = vv[:, 0] + nx * (vv[:, 1] + ny * vv[:, 2])
        l = log_odds[flat]
        occupied = l >= l_occ
        active[ev[occupied]] = False
        unknown = (~occupied) & (l > l_free)
        visited[flat[unknown]] = 1
    return int(visited.sum())
