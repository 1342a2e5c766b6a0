"""Compare the numba and pure-numpy kernel backends on one workload.

Times each hot kernel on a representative scene (seeded room, dome
viewpoint, partially explored map) and reports median wall time per
call plus the speedup, verifying along the way that both backends
return bit-identical results.

Run:  python3 benchmarks/bench_kernels.py [--repeats N] [--width W]
"""

import argparse
import statistics
import time

import numpy as np

from nbvsim.geometry import build_dome
from nbvsim.kernels import get_backend
from nbvsim.occmap import MapParams, OccupancyMap, integrate_depth
from nbvsim.scene import CameraIntrinsics, generate_room, render_depth


def build_workload(width, height):
    """Inputs for every kernel, shaped like a mid-episode policy query."""
    scene = generate_room(1)
    dome = build_dome(3)
    intr = CameraIntrinsics(width, height)
    uintr = CameraIntrinsics(64, 64, 117.0, 102.0)
    params = MapParams()
    omap = OccupancyMap.for_room(scene.room_min, scene.room_max, params)
    for vertex in (0, 120, 300, 480, 600):
        pose = dome.pose(vertex)
        integrate_depth(omap, render_depth(scene, pose, intr, 10.0),
                        pose, intr, 10.0)

    pose = dome.pose(240)
    origin = np.asarray(pose.position, np.float64)
    dirs, norms = intr.ray_grid()
    world = dirs @ pose.orientation.T
    udirs, unorms = uintr.ray_grid()
    uworld = udirs @ pose.orientation.T
    depth = render_depth(scene, pose, intr, 10.0).values
    room = np.concatenate([scene.room_min, scene.room_max])
    nx, ny, nz = omap.dims

    return {
        "render_depth": (origin, world, norms, room, scene.obstacles, 10.0),
        "hit_miss_counts": (nx, ny, nz, omap.origin, params.resolution_m,
                            origin, world, norms, depth, 10.0),
        "trace_unknown_bits": (omap.log_odds, nx, ny, nz, omap.origin,
                               params.resolution_m, origin, uworld, unorms,
                               10.0, params.l_free, params.l_occ),
        "count_unknown_voxels": (omap.log_odds, nx, ny, nz, omap.origin,
                                 params.resolution_m, origin, world, norms,
                                 10.0, params.l_free, params.l_occ),
    }, nx * ny * nz


def run_kernel(impl, name, args, scratch_size):
    if name == "count_unknown_voxels":
        scratch = np.zeros(scratch_size, np.uint8)
        return impl.count_unknown_voxels(*args, scratch)
    return getattr(impl, name)(*args)


def time_kernel(impl, name, args, scratch_size, repeats):
    run_kernel(impl, name, args, scratch_size)          # warm up / JIT
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_kernel(impl, name, args, scratch_size)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def same_output(a, b):
    if isinstance(a, tuple):
        return all(same_output(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed calls per kernel (median reported)")
    parser.add_argument("--width", type=int, default=160,
                        help="sensor raster width (height follows 4:3)")
    args = parser.parse_args()

    numpy_impl = get_backend("numpy")
    try:
        numba_impl = get_backend("numba")
    except Exception as exc:                            # pragma: no cover
        numba_impl = None
        print(f"numba backend unavailable ({exc}); timing numpy only")

    workload, grid = build_workload(args.width, args.width * 3 // 4)
    print(f"workload: {args.width}x{args.width * 3 // 4} sensor raster, "
          f"{grid} voxel grid, median of {args.repeats}")
    header = f"{'kernel':<22}{'numpy ms':>10}{'numba ms':>10}" \
             f"{'speedup':>9}  identical"
    print(header)
    print("-" * len(header))
    for name, call_args in workload.items():
        t_np = time_kernel(numpy_impl, name, call_args, grid, args.repeats)
        if numba_impl is None:
            print(f"{name:<22}{t_np * 1e3:>10.2f}{'-':>10}{'-':>9}  -")
            continue
        t_nb = time_kernel(numba_impl, name, call_args, grid, args.repeats)
        match = same_output(run_kernel(numpy_impl, name, call_args, grid),
                            run_kernel(numba_impl, name, call_args, grid))
        print(f"{name:<22}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}"
              f"{t_np / t_nb:>8.1f}x  {'yes' if match else 'NO'}")


if __name__ == "__main__":
    main()
