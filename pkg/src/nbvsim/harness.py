"""Episode runner and evaluation aggregation.

An episode integrates the start view (step 0), then repeats: build the
decision context, time the policy call (utility tracing included),
resolve the decision to a dome vertex, move, render and integrate.
Coverage is the Occupied-voxel count over the all-viewpoints reference,
so curves are comparable across policies and end at most at 1.
"""

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import build_dome
from .occmap import MapParams, OccupancyMap, integrate_depth
from .policies import (ExplorationContext, Policy, parse_policy,
                       resolve_decision, utility_intrinsics)
from .scene import (CameraIntrinsics, Scene, full_coverage_reference,
                    render_depth)


@dataclass(frozen=True)
class StepRecord:
    step: int
    viewpoint: int
    latency_s: float
    surface: int
    coverage: float


@dataclass
class EpisodeResult:
    policy: str
    scene_id: int
    start: int
    seed: int
    records: list

    @property
    def final_coverage(self):
        return self.records[-1].coverage


def run_episode(scene, dome, policy, start, steps, seed, intrinsics=None,
                map_params=None, max_range_m=10.0, coverage_reference=None):
    """Run one exploration episode; returns steps+1 per-step records.

    Step 0 is the integration of the start view before any decision.
    Each later step's rng substream is derived from (seed, step), so a
    decision is a pure function of its context.  Pass the scene's
    coverage_reference when running many episodes to avoid recomputing
    it.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 <= start < len(dome.positions):
        raise ValueError(f"start viewpoint {start} outside dome")
    if isinstance(policy, str):
        policy = parse_policy(policy)
    intrinsics = intrinsics or CameraIntrinsics()
    uintr = utility_intrinsics(dome, intrinsics)
    if coverage_reference is None:
        coverage_reference = full_coverage_reference(
            scene, dome, intrinsics, map_params, max_range_m)

    omap = OccupancyMap.for_room(scene.room_min, scene.room_max, map_params)
    current = int(start)
    depth = render_depth(scene, dome.pose(current), intrinsics, max_range_m)
    integrate_depth(omap, depth, dome.pose(current), intrinsics, max_range_m)
    surface = omap.count_surface()
    records = [StepRecord(0, current, 0.0, surface,
                          surface / coverage_reference)]

    for k in range(1, steps + 1):
        candidates = dome.adjacency[current]
        assert candidates.size > 0, "dome vertex with no neighbors"
        ctx = ExplorationContext(
            dome=dome, map=omap, current_index=current,
            current_pose=dome.pose(current), current_depth=depth,
            candidates=candidates, rng=np.random.default_rng([seed, k]),
            intrinsics=intrinsics, utility_intrinsics=uintr,
            scene=scene if policy.needs_scene else None,
            max_range_m=max_range_m)
        t0 = time.perf_counter()
        decision = policy.decide(ctx)
        latency = time.perf_counter() - t0
        current = resolve_decision(ctx, decision)
        depth = render_depth(scene, dome.pose(current), intrinsics,
                             max_range_m)
        integrate_depth(omap, depth, dome.pose(current), intrinsics,
                        max_range_m)
        surface = omap.count_surface()
        records.append(StepRecord(k, current, latency, surface,
                                  surface / coverage_reference))
    return EpisodeResult(policy=policy.name, scene_id=scene.seed,
                         start=int(start), seed=int(seed), records=records)


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    step: int
    mean_coverage: float
    std_coverage: float
    mean_latency_s: float


def aggregate(results):
    """Per-policy, per-step mean/sample-stdev coverage and mean latency.

    Runs are weighted equally; policies keep first-appearance order.
    """
    if not results:
        raise ValueError("no episode results to aggregate")
    by_policy = {}
    for r in results:
        by_policy.setdefault(r.policy, []).append(r)
    rows = []
    for policy, runs in by_policy.items():
        lengths = {len(r.records) for r in runs}
        if len(lengths) != 1:
            raise ValueError(
                f"policy {policy}: mixed step counts {sorted(lengths)}")
        (n_steps,) = lengths
        for k in range(n_steps):
            cov = [r.records[k].coverage for r in runs]
            lat = [r.records[k].latency_s for r in runs]
            mean = float(np.mean(cov))
            std = float(np.std(cov, ddof=1)) if len(cov) > 1 else 0.0
            rows.append(SummaryRow(policy, k, mean, std, float(np.mean(lat))))
    return rows


STEP_CSV_HEADER = ("policy", "scene", "seed", "step", "viewpoint",
                   "latency_s", "surface", "coverage")
SUMMARY_CSV_HEADER = ("policy", "step", "mean_coverage", "std_coverage",
                      "mean_latency_s")


def write_steps_csv(path, results):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(STEP_CSV_HEADER)
        for r in results:
            for rec in r.records:
                w.writerow([r.policy, r.scene_id, r.seed, rec.step,
                            rec.viewpoint, f"{rec.latency_s:.6f}",
                            rec.surface, f"{rec.coverage:.9f}"])


def write_summary_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_CSV_HEADER)
        for row in rows:
            w.writerow([row.policy, row.step, f"{row.mean_coverage:.9f}",
                        f"{row.std_coverage:.9f}",
                        f"{row.mean_latency_s:.6f}"])


def plot_coverage_svg(path, rows):
    """Coverage-vs-step line plot; needs the optional matplotlib extra."""
    try:
        import matplotlib
    except ImportError:
        raise RuntimeError(
            "plotting needs matplotlib (install the 'plot' extra)")
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_policy = {}
    for row in rows:
        by_policy.setdefault(row.policy, []).append(row)
    for policy, series in by_policy.items():
        steps = [r.step for r in series]
        mean = np.array([r.mean_coverage for r in series])
        std = np.array([r.std_coverage for r in series])
        ax.plot(steps, mean, label=policy)
        ax.fill_between(steps, mean - std, mean + std, alpha=0.15)
    ax.set_xlabel("step")
    ax.set_ylabel("coverage ratio")
    ax.set_ylim(0.0, 1.05)
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def start_viewpoints(dome, scene_seed, runs, seed):
    """Seeded random start vertices: one per run, reproducible."""
    rng = np.random.default_rng([seed, scene_seed])
    return [int(v) for v in rng.integers(len(dome.positions), size=runs)]


def _episode_task(task):
    """Worker entry for parallel sweeps (built from plain values)."""
    scene = Scene.from_json_dict(task["scene"])
    dome = build_dome(**task["dome"])
    intr = CameraIntrinsics(**task["intrinsics"])
    mp = MapParams(**task["map_params"])
    return run_episode(
        scene, dome, task["policy"], task["start"], task["steps"],
        task["seed"], intrinsics=intr, map_params=mp,
        max_range_m=task["max_range_m"],
        coverage_reference=task["coverage_reference"])


def run_sweep(scenes, dome, policies, steps, runs_per_scene, seed,
              intrinsics=None, map_params=None, max_range_m=10.0, jobs=1,
              references=None):
    """Episodes for every (policy, scene, run) combination.

    Start vertices are seeded per scene and shared across policies so
    comparisons see identical conditions.  With jobs > 1 episodes fan
    out over a process pool; results come back in deterministic order
    either way.
    """
    intrinsics = intrinsics or CameraIntrinsics()
    map_params = map_params or MapParams()
    if references is None:
        references = {
            scene.seed: full_coverage_reference(scene, dome, intrinsics,
                                                map_params, max_range_m)
            for scene in scenes
        }
    tasks = []
    for policy in policies:
        for scene in scenes:
            starts = start_viewpoints(dome, scene.seed, runs_per_scene, seed)
            for run, start in enumerate(starts):
                tasks.append({
                    "scene": scene.to_json_dict(),
                    "dome": {"subdivisions": dome.subdivisions,
                             "dome_radius_m": dome.dome_radius_m,
                             "center_height_m": float(dome.dome_center[2]),
                             "neighbor_radius_m": dome.neighbor_radius_m},
                    "policy": policy, "start": start, "steps": steps,
                    "seed": seed + run,
                    "intrinsics": {"width": intrinsics.width,
                                   "height": intrinsics.height,
                                   "hfov_deg": intrinsics.hfov_deg,
                                   "vfov_deg": intrinsics.vfov_deg},
                    "map_params": {
                        "resolution_m": map_params.resolution_m,
                        "p_hit": map_params.p_hit, "p_miss": map_params.p_miss,
                        "l_min": map_params.l_min, "l_max": map_params.l_max,
                        "p_occ": map_params.p_occ, "p_free": map_params.p_free,
                    },
                    "max_range_m": max_range_m,
                    "coverage_reference": references[scene.seed],
                })
    if jobs > 1:
        import multiprocessing as mp_mod
        with mp_mod.Pool(jobs) as pool:
            results = pool.map(_episode_task, tasks)
    else:
        results = [_episode_task(t) for t in tasks]
    return results
