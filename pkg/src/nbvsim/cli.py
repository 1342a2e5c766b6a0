"""Command-line entry point.

Subcommands: gen-scene, gen-dataset, explore, eval, nn-check, dome-info.
Value resolution is flags over config file over defaults; every run
writes the resolved values as an effective-config JSON next to its
outputs, and re-running with that file reproduces the outputs
bit-for-bit apart from latency columns.  NBVSIM_OUT sets the default
output directory; NBVSIM_KERNELS selects the compute backend
(auto/numba/numpy).  Errors exit nonzero with a single
"nbvsim: error: ..." line on stderr.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .dataset import (DEFAULT_LEVELS, DatasetConfig, balance_and_split,
                      generate_dataset, write_splits)
from .geometry import build_dome
from .harness import (aggregate, plot_coverage_svg, run_episode, run_sweep,
                      start_viewpoints, write_steps_csv, write_summary_csv)
from .occmap import MapParams
from . import nn
from .policies import parse_policy
from .scene import CameraIntrinsics, RoomParams, Scene, generate_room


def _out_root():
    return Path(os.environ.get("NBVSIM_OUT", "."))


def _csv_list(cast):
    def parse(text):
        return [cast(part) for part in text.split(",") if part != ""]
    return parse


_LIST_KEYS = {
    "scene_seeds": int, "policies": str, "levels": int, "ratios": float,
}


def _merge(defaults, args):
    """Resolve values: explicit flags > config file > defaults."""
    explicit = {k: v for k, v in vars(args).items()
                if k in defaults and v is not argparse.SUPPRESS}
    effective = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        doc = json.loads(Path(config_path).read_text())
        for key, value in doc.items():
            if key not in defaults:
                continue
            if isinstance(value, str) and key in _LIST_KEYS:
                value = _csv_list(_LIST_KEYS[key])(value)
            effective[key] = value
    effective.update(explicit)
    return effective


def _write_effective_config(path, command, effective):
    doc = {"command": command}
    doc.update(effective)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _dome_from(eff):
    return build_dome(eff["subdivisions"], eff["dome_radius"],
                      eff["center_height"], eff["neighbor_radius"])


def _map_params_from(eff):
    return MapParams(resolution_m=eff["resolution"])


_DOME_DEFAULTS = {"subdivisions": 3, "dome_radius": 0.2,
                  "center_height": 1.5, "neighbor_radius": 0.05}

_CAMERA_DEFAULTS = {"width": 160, "height": 120, "hfov": 60.0, "vfov": 45.0}


def _intrinsics_from(eff):
    return CameraIntrinsics(width=eff["width"], height=eff["height"],
                            hfov_deg=eff["hfov"], vfov_deg=eff["vfov"])


def _add_dome_flags(sp):
    sp.add_argument("--subdivisions", type=int, help="icosphere subdivision level")
    sp.add_argument("--dome-radius", type=float, help="dome radius in meters")
    sp.add_argument("--center-height", type=float, help="dome center height in meters")
    sp.add_argument("--neighbor-radius", type=float, help="candidate chord radius in meters")


def _add_camera_flags(sp):
    sp.add_argument("--width", type=int, help="depth image width in pixels")
    sp.add_argument("--height", type=int, help="depth image height in pixels")
    sp.add_argument("--hfov", type=float, help="horizontal field of view in degrees")
    sp.add_argument("--vfov", type=float, help="vertical field of view in degrees")


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; flags override its values")
    sp.add_argument("--out", help="output path (default under NBVSIM_OUT)")


# ---------------------------------------------------------------- gen-scene

_GEN_SCENE_DEFAULTS = {
    "seed": None, "out": None,
    "floor_size": [3.0, 6.0], "height": [2.2, 3.2],
    "obstacles": [2, 6], "obstacle_size": [0.2, 1.2],
}


def cmd_gen_scene(args):
    eff = _merge(_GEN_SCENE_DEFAULTS, args)
    if eff["seed"] is None:
        raise ValueError("gen-scene needs --seed")
    params = RoomParams(
        floor_size_m=tuple(eff["floor_size"]), height_m=tuple(eff["height"]),
        obstacle_count=tuple(int(v) for v in eff["obstacles"]),
        obstacle_size_m=tuple(eff["obstacle_size"]))
    scene = generate_room(eff["seed"], params)
    out = Path(eff["out"]) if eff["out"] else \
        _out_root() / f"scene-{eff['seed']}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    scene.save(out)
    eff["out"] = str(out)
    _write_effective_config(str(out) + ".config.json", "gen-scene", eff)
    print(f"scene seed={eff['seed']} obstacles={len(scene.obstacles)} -> {out}")
    return 0


# -------------------------------------------------------------- gen-dataset

_GEN_DATASET_DEFAULTS = {
    "scene_seeds": None, "out": None,
    "levels": list(DEFAULT_LEVELS), "max_combos": 10, "seed": 0,
    "max_viewpoints": None, "max_range": 10.0, "resolution": 0.05,
    "per_class_cap": 25000, "ratios": [0.7, 0.15, 0.15], "split_seed": 0,
    **_DOME_DEFAULTS, **_CAMERA_DEFAULTS,
}


def cmd_gen_dataset(args):
    eff = _merge(_GEN_DATASET_DEFAULTS, args)
    if not eff["scene_seeds"]:
        raise ValueError("gen-dataset needs --scene-seeds")
    out = Path(eff["out"]) if eff["out"] else _out_root() / "dataset"
    eff["out"] = str(out)
    dome = _dome_from(eff)
    scenes = [generate_room(s) for s in eff["scene_seeds"]]
    config = DatasetConfig(
        levels=tuple(eff["levels"]), max_combos=eff["max_combos"],
        seed=eff["seed"], max_viewpoints=eff["max_viewpoints"],
        max_range_m=eff["max_range"], intrinsics=_intrinsics_from(eff),
        map_params=_map_params_from(eff))
    entries = generate_dataset(scenes, dome, out, config)
    splits = balance_and_split(entries, per_class_cap=eff["per_class_cap"],
                               ratios=tuple(eff["ratios"]),
                               seed=eff["split_seed"])
    write_splits(out, splits)
    _write_effective_config(out / "effective-config.json", "gen-dataset", eff)
    sizes = {name: len(group) for name, group in splits.items()}
    print(f"dataset: {len(entries)} records, splits {sizes} -> {out}")
    return 0


# ------------------------------------------------------------------ explore

_EXPLORE_DEFAULTS = {
    "scene_seed": None, "scene": None, "policy": None,
    "steps": 150, "seed": 0, "start": None, "out": None, "plot": False,
    "max_range": 10.0, "resolution": 0.05,
    **_DOME_DEFAULTS, **_CAMERA_DEFAULTS,
}


def _load_scene(eff, dome):
    if (eff["scene_seed"] is None) == (eff["scene"] is None):
        raise ValueError("need exactly one of --scene-seed or --scene")
    if eff["scene"] is not None:
        return Scene.load(eff["scene"], dome_center=tuple(dome.dome_center),
                          dome_radius_m=dome.dome_radius_m)
    return generate_room(eff["scene_seed"])


def cmd_explore(args):
    eff = _merge(_EXPLORE_DEFAULTS, args)
    if not eff["policy"]:
        raise ValueError("explore needs --policy")
    dome = _dome_from(eff)
    scene = _load_scene(eff, dome)
    policy = parse_policy(eff["policy"])
    start = eff["start"]
    if start is None:
        start = start_viewpoints(dome, scene.seed, 1, eff["seed"])[0]
        eff["start"] = start
    out = Path(eff["out"]) if eff["out"] else _out_root() / "explore"
    eff["out"] = str(out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_episode(scene, dome, policy, start, eff["steps"],
                         eff["seed"], intrinsics=_intrinsics_from(eff),
                         map_params=_map_params_from(eff),
                         max_range_m=eff["max_range"])
    write_steps_csv(out / "steps.csv", [result])
    _write_effective_config(out / "effective-config.json", "explore", eff)
    if eff["plot"]:
        plot_coverage_svg(out / "coverage.svg", aggregate([result]))
    print(f"explore {policy.name}: {eff['steps']} steps, "
          f"final coverage {result.final_coverage:.4f} -> {out}")
    return 0


# --------------------------------------------------------------------- eval

_EVAL_DEFAULTS = {
    "scene_seeds": None, "policies": None,
    "steps": 150, "runs": 5, "seed": 0, "jobs": 1, "out": None,
    "plot": False, "max_range": 10.0, "resolution": 0.05,
    **_DOME_DEFAULTS, **_CAMERA_DEFAULTS,
}


def cmd_eval(args):
    eff = _merge(_EVAL_DEFAULTS, args)
    if not eff["scene_seeds"]:
        raise ValueError("eval needs --scene-seeds")
    if not eff["policies"]:
        raise ValueError("eval needs --policies")
    for selector in eff["policies"]:
        parse_policy(selector)         # fail fast on bad selectors
    dome = _dome_from(eff)
    scenes = [generate_room(s) for s in eff["scene_seeds"]]
    out = Path(eff["out"]) if eff["out"] else _out_root() / "eval"
    eff["out"] = str(out)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(scenes, dome, eff["policies"], eff["steps"],
                        eff["runs"], eff["seed"],
                        intrinsics=_intrinsics_from(eff),
                        map_params=_map_params_from(eff),
                        max_range_m=eff["max_range"], jobs=eff["jobs"])
    rows = aggregate(results)
    write_steps_csv(out / "steps.csv", results)
    write_summary_csv(out / "summary.csv", rows)
    _write_effective_config(out / "effective-config.json", "eval", eff)
    if eff["plot"]:
        plot_coverage_svg(out / "coverage.svg", rows)
    last = eff["steps"]
    for row in rows:
        if row.step == last:
            print(f"eval {row.policy}: final coverage "
                  f"{row.mean_coverage:.4f} +/- {row.std_coverage:.4f}")
    print(f"eval: {len(results)} episodes -> {out}")
    return 0


# ----------------------------------------------------------------- nn-check

def cmd_nn_check(args):
    fixture_path = Path(args.fixture)
    doc = json.loads(fixture_path.read_text())
    base = fixture_path.parent
    weights_path = args.weights or doc.get("weights_file")
    if weights_path is None:
        raise ValueError("fixture names no weights_file and --weights not given")
    weights = nn.load_weights(base / weights_path
                              if not os.path.isabs(weights_path)
                              else weights_path)
    shape = tuple(doc["input_shape"])
    x = np.frombuffer((base / doc["input_file"]).read_bytes(), "<f4")
    if x.size != int(np.prod(shape)):
        raise ValueError(
            f"input payload has {x.size} floats, expected {np.prod(shape)}")
    expected = np.frombuffer((base / doc["logits_file"]).read_bytes(), "<f4")
    if expected.size != 4:
        raise ValueError(f"reference logits file has {expected.size} values")
    variant = nn.InputVariant.parse(doc["variant"])
    if variant != weights.variant:
        raise ValueError(
            f"fixture variant {variant.value} does not match weights "
            f"{weights.variant.value}")
    logits = nn.forward(weights, x.reshape(shape))
    err = float(np.max(np.abs(logits - expected)))
    if err > args.tolerance:
        raise ValueError(
            f"nn-check failed: max_abs_err={err:.3e} > "
            f"tolerance={args.tolerance:.1e}")
    print(f"nn-check: PASS max_abs_err={err:.3e} "
          f"tolerance={args.tolerance:.1e}")
    return 0


# ---------------------------------------------------------------- dome-info

def cmd_dome_info(args):
    eff = _merge(dict(_DOME_DEFAULTS), args)
    t0 = time.perf_counter()
    dome = _dome_from(eff)
    build_s = time.perf_counter() - t0
    degrees = np.array([a.size for a in dome.adjacency])
    chords = []
    for i, adj in enumerate(dome.adjacency):
        for j in adj:
            if j > i:
                chords.append(np.linalg.norm(dome.positions[j] -
                                             dome.positions[i]))
    chords = np.array(chords)
    info = {
        "subdivisions": dome.subdivisions,
        "viewpoints": len(dome.positions),
        "edges": int(degrees.sum()) // 2,
        "degree_min": int(degrees.min()), "degree_max": int(degrees.max()),
        "chord_min_m": float(chords.min()) if chords.size else None,
        "chord_max_m": float(chords.max()) if chords.size else None,
        "dome_radius_m": dome.dome_radius_m,
        "neighbor_radius_m": dome.neighbor_radius_m,
        "center": [float(v) for v in dome.dome_center],
        "build_s": round(build_s, 4),
    }
    if args.json:
        print(json.dumps(info))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="nbvsim",
        description="Depth-camera exploration simulator and NBV policy "
                    "evaluation",
        epilog="Environment: NBVSIM_OUT sets the default output directory; "
               "NBVSIM_KERNELS=auto|numba|numpy selects the compute backend.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-scene", help="generate a procedural room",
                        argument_default=argparse.SUPPRESS)
    _add_common(sp)
    sp.add_argument("--seed", type=int, help="scene seed")
    sp.add_argument("--floor-size", type=_csv_list(float), metavar="MIN,MAX")
    sp.add_argument("--height", type=_csv_list(float), metavar="MIN,MAX")
    sp.add_argument("--obstacles", type=_csv_list(int), metavar="MIN,MAX")
    sp.add_argument("--obstacle-size", type=_csv_list(float), metavar="MIN,MAX")
    sp.set_defaults(func=cmd_gen_scene)

    sp = sub.add_parser("gen-dataset", help="generate a labeled dataset",
                        argument_default=argparse.SUPPRESS)
    _add_common(sp)
    sp.add_argument("--scene-seeds", type=_csv_list(int), metavar="S1,S2,...")
    sp.add_argument("--levels", type=_csv_list(int), metavar="L1,L2,...")
    sp.add_argument("--max-combos", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-viewpoints", type=int)
    sp.add_argument("--max-range", type=float)
    sp.add_argument("--resolution", type=float)
    sp.add_argument("--per-class-cap", type=int)
    sp.add_argument("--ratios", type=_csv_list(float), metavar="TR,VA,TE")
    sp.add_argument("--split-seed", type=int)
    _add_camera_flags(sp)
    _add_dome_flags(sp)
    sp.set_defaults(func=cmd_gen_dataset)

    sp = sub.add_parser("explore", help="run one exploration episode",
                        argument_default=argparse.SUPPRESS)
    _add_common(sp)
    sp.add_argument("--scene-seed", type=int)
    sp.add_argument("--scene", help="scene JSON file")
    sp.add_argument("--policy", help="policy selector, e.g. oracle2 or "
                                     "cnn:weights.exhw:2D")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--start", type=int, help="start viewpoint index")
    sp.add_argument("--plot", action="store_true")
    sp.add_argument("--max-range", type=float)
    sp.add_argument("--resolution", type=float)
    _add_dome_flags(sp)
    _add_camera_flags(sp)
    sp.set_defaults(func=cmd_explore)

    sp = sub.add_parser("eval", help="multi-policy evaluation sweep",
                        argument_default=argparse.SUPPRESS)
    _add_common(sp)
    sp.add_argument("--scene-seeds", type=_csv_list(int), metavar="S1,S2,...")
    sp.add_argument("--policies", type=_csv_list(str), metavar="P1,P2,...")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--runs", type=int, help="episodes per scene")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int, help="parallel worker processes")
    sp.add_argument("--plot", action="store_true")
    sp.add_argument("--max-range", type=float)
    sp.add_argument("--resolution", type=float)
    _add_dome_flags(sp)
    _add_camera_flags(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("nn-check", help="verify a forward-pass fixture")
    sp.add_argument("fixture", help="fixture JSON file")
    sp.add_argument("--weights", help="override the fixture's weights file")
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.set_defaults(func=cmd_nn_check)

    sp = sub.add_parser("dome-info", help="dome geometry diagnostics",
                        argument_default=argparse.SUPPRESS)
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--json", action="store_true", default=False)
    _add_dome_flags(sp)
    sp.set_defaults(func=cmd_dome_info)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"nbvsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
