"""Shared fixtures: synthetic dataset directories and, for the
cross-component tests, datasets and episodes produced by the installed
`nbvsim` command-line tool (the only coupling to the simulator is
through its on-disk formats and CLI)."""

import json
import random
import shutil
import subprocess
import zlib
from pathlib import Path

import numpy as np
import pytest

SIZE = 64
LABELS = ("UP", "DOWN", "LEFT", "RIGHT")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(label): acceptance criterion verified by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup"
                                 and report.outcome != "passed"):
        _CRITERIA[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "trainer acceptance criteria")
    for label in sorted(_CRITERIA):
        outcome = _CRITERIA[label]
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome,
                                                        outcome.upper())
        terminalreporter.write_line(f"ACCEPTANCE {label}: {word}")


def reference_triangle_masks(height, width):
    """Quadrants cut by the two image diagonals, computed from pixel
    centers in float (independent of the package's integer rule).
    Centers on a diagonal join the vertical quadrants."""
    r = np.arange(height)[:, None] + 0.5
    c = np.arange(width)[None, :] + 0.5
    a = r * width - c * height
    b = r * width + c * height - width * height
    up = (a <= 0) & (b <= 0)
    down = (a >= 0) & (b >= 0) & ~up
    left = (a > 0) & (b < 0)
    right = ~(up | down | left)
    return np.stack([up, down, left, right])


def write_synthetic_dataset(out_dir, n_train, n_val, seed, bias=0.8):
    """Dataset directory whose labels equal the argmax of the triangular
    utility sums; one partition's bits are biased toward `bias` so the
    argmax has a wide margin."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    masks = reference_triangle_masks(SIZE, SIZE)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_train + n_val):
        p = np.where(masks[i % 4], bias, 1.0 - bias)
        bits = (rng.random((SIZE, SIZE)) < p).astype(np.uint8)
        sums = [int(bits[m].sum()) for m in masks]
        label = LABELS[int(np.argmax(sums))]
        depth = rng.random((SIZE, SIZE)).astype("<f4")
        rid = f"syn-{i:04d}"
        depth_bytes = depth.tobytes()
        bits_bytes = bits.tobytes()
        (out / f"{rid}.depth.f32").write_bytes(depth_bytes)
        (out / f"{rid}.util.u8").write_bytes(bits_bytes)
        entries.append({
            "id": rid, "scene": 0, "viewpoint": i, "level": 0, "combo": 0,
            "subset": [], "label": label,
            "depth_file": f"{rid}.depth.f32",
            "utility_file": f"{rid}.util.u8",
            "dims": [SIZE, SIZE],
            "depth_crc32": zlib.crc32(depth_bytes),
            "utility_crc32": zlib.crc32(bits_bytes),
        })
    meta = {
        "schema": "nbvsim-dataset", "version": 1,
        "config": {"intrinsics": {"hfov_deg": 60.0, "vfov_deg": 45.0}},
        "dome": {"subdivisions": 3, "dome_radius_m": 0.2,
                 "center_height_m": 1.5, "neighbor_radius_m": 0.05},
        "scenes": [],
    }
    (out / "dataset.json").write_text(json.dumps(meta, indent=2))
    with open(out / "manifest.jsonl", "w") as f:
        for entry in entries:
            f.write(json.dumps(entry) + "\n")
    ids = [entry["id"] for entry in entries]
    (out / "splits.json").write_text(json.dumps(
        {"train": ids[:n_train], "val": ids[n_train:]}))
    return out


def relabel_train_uniform(src, dst, seed):
    """Copy a dataset, redrawing every training label uniformly at
    random.  Unlike permuting the label multiset (which keeps ~1/4 of
    the labels correct), a fresh uniform draw makes the labels carry no
    information about the inputs; the validation split is untouched."""
    src, dst = Path(src), Path(dst)
    if dst.exists():
        shutil.rmtree(dst)
    shutil.copytree(src, dst)
    train_ids = set(json.loads((src / "splits.json").read_text())["train"])
    rng = random.Random(seed)
    with open(src / "manifest.jsonl") as f:
        entries = [json.loads(line) for line in f]
    for entry in entries:
        if entry["id"] in train_ids:
            entry["label"] = rng.choice(LABELS)
    with open(dst / "manifest.jsonl", "w") as f:
        for entry in entries:
            f.write(json.dumps(entry) + "\n")
    return dst


@pytest.fixture(scope="session")
def make_synthetic_dataset():
    return write_synthetic_dataset


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    return write_synthetic_dataset(
        tmp_path_factory.mktemp("tiny") / "ds", 12, 4, seed=5)


@pytest.fixture(scope="session")
def separable_dataset(tmp_path_factory):
    return write_synthetic_dataset(
        tmp_path_factory.mktemp("separable") / "ds", 200, 400, seed=99)


@pytest.fixture(scope="session")
def control_dataset(separable_dataset, tmp_path_factory):
    return relabel_train_uniform(
        separable_dataset,
        tmp_path_factory.mktemp("control") / "ds", seed=123)


@pytest.fixture(scope="session")
def nbvsim_cli():
    path = shutil.which("nbvsim")
    if path is None:
        pytest.fail("the nbvsim command-line tool must be installed for "
                    "cross-component tests")
    return path


def run_cli(cli, *args):
    proc = subprocess.run([cli, *map(str, args)], capture_output=True,
                          text=True)
    if proc.returncode != 0:
        raise AssertionError(
            f"{Path(cli).name} {' '.join(map(str, args))} failed "
            f"(rc {proc.returncode}):\n{proc.stdout}{proc.stderr}")
    return proc.stdout


@pytest.fixture(scope="session")
def cli_runner():
    return run_cli


@pytest.fixture(scope="session")
def procedural_dataset(nbvsim_cli, tmp_path_factory):
    """Desk-scale dataset over ten procedural rooms, generated by the
    simulator CLI, class-capped toward balance."""
    out = tmp_path_factory.mktemp("procedural") / "ds"
    run_cli(nbvsim_cli, "gen-dataset",
            "--scene-seeds", "1,2,3,4,5,6,7,8,9,10",
            "--max-viewpoints", 25, "--levels", "0,25,50,75,100",
            "--max-combos", 3, "--width", 48, "--height", 36,
            "--resolution", 0.1, "--seed", 5, "--split-seed", 5,
            "--per-class-cap", 400, "--out", out)
    return out


@pytest.fixture(scope="session")
def trained_2d(procedural_dataset, tmp_path_factory):
    """CNN2D trained on the procedural dataset; returns the run dir."""
    from nbvtrainer.train import TrainConfig, train
    out = tmp_path_factory.mktemp("trained2d") / "run"
    config = TrainConfig(dataset_dir=str(procedural_dataset), variant="2D",
                         epochs=40, seed=1)
    summary = train(config, out)
    assert (out / "weights.exhw").exists()
    return {"dir": out, "weights": out / "weights.exhw", "summary": summary}
