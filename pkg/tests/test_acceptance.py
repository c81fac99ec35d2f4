"""Acceptance criteria, one test per criterion, each reporting a PASS/FAIL line."""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from hilbertdepth.cli import main
from hilbertdepth.clustering import quick_means
from hilbertdepth.densify import densify_depth_image, project_sparse
from hilbertdepth.hilbert_map import TrainingConfig, generate_training_samples, train
from hilbertdepth.io_depth import read_depth_png, write_depth_png
from hilbertdepth.losses import loss_eigen, loss_gradient
from hilbertdepth.metrics import eval_metrics
from hilbertdepth.pointcloud import PointCloud, read_velodyne_bin
from hilbertdepth.synthetic import analytic_depth, load_scene, simulate_scan
from hilbertdepth.densify import DepthImage
from conftest import write_synthetic_calib_dir
from oracles import berhu_fixed_c, central_difference, eigen_scalar, metrics_loop, mse_scalar, random_pair

FIXTURE_ENV = "HILBERTDEPTH_KITTI_FIXTURES"
KITTI_DEPTH_VALID = 0.1571
KITTI_DENSIFIED_VALID = 0.6239
METRIC_KEYS = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


def test_criterion_1_loss_gradients(report):
    start = time.perf_counter()
    r = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        pred, gt = random_pair(r, 5, 6)
        m = gt > 0
        c = 0.2 * np.max(np.abs(pred[m] - gt[m]))
        cases = [("mse", 0.5, lambda y: mse_scalar(y.tolist(), gt.tolist()))]
        cases += [("eigen", lam, lambda y, lam=lam: eigen_scalar(y.tolist(), gt.tolist(), lam))
                  for lam in (0.0, 0.5, 1.0)]
        cases += [("berhu", 0.5, lambda y: berhu_fixed_c(y.tolist(), gt.tolist(), c))]
        for loss_id, lam, fn in cases:
            g = loss_gradient(loss_id, pred, gt, lam)
            for i, j in zip(*np.nonzero(m)):
                if loss_id == "berhu" and abs(abs(pred[i, j] - gt[i, j]) - c) < 1e-3:
                    continue
                fd = central_difference(fn, pred, i, j)
                worst = max(worst, abs(g[i, j] - fd) / max(abs(fd), 1e-8))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 5.0
    report(1, ok, f"max relative gradient error {worst:.2e} (< 1e-5), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_2_eigen_scale_invariance(report):
    r = np.random.default_rng(7)
    gt = r.uniform(1.0, 80.0, size=(16, 20))
    values = {c: loss_eigen(c * gt, gt, lam=1.0) for c in (0.5, 2.0, 10.0)}
    worst = max(values.values())
    report(2, worst < 1e-9, f"max loss over c in {{0.5, 2, 10}} = {worst:.2e} (< 1e-9)")
    assert worst < 1e-9


def test_criterion_3_metrics_oracle(report):
    start = time.perf_counter()
    r = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        pred, gt = random_pair(r, 10, 10)
        for cap in (50.0, 80.0):
            rep = eval_metrics(pred, gt, cap)
            expect = metrics_loop([pred.tolist()], [gt.tolist()], cap)
            assert rep.valid_count == expect["valid_count"]
            worst = max(worst, max(abs(getattr(rep, k) - expect[k]) for k in METRIC_KEYS))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 5.0
    report(3, ok, f"max deviation from per-pixel loop {worst:.2e} (<= 1e-9), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_4_occupancy_classification(report):
    start = time.perf_counter()
    cloud = simulate_scan(load_scene("street-mock"), beams=64, seed=0)
    samples = generate_training_samples(cloud, seed=0)
    cut = int(0.8 * len(samples))
    held_out = samples.take(np.arange(cut, len(samples)))
    model = train(samples.take(np.arange(cut)), quick_means(cloud, seed=0), TrainingConfig(seed=0))
    occupied = model.occupancy(held_out.x) > 0.5
    accuracy = float(np.mean(occupied == (held_out.y > 0)))
    elapsed = time.perf_counter() - start
    free = held_out.y < 0
    ok = accuracy >= 0.95 and elapsed < 60.0
    report(4, ok, f"held-out accuracy {accuracy:.4f} (>= 0.95; occupied {np.mean(occupied[~free]):.4f}, "
                  f"free {np.mean(~occupied[free]):.4f}), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_5_densification_fidelity(report, wall_scene, wall_cloud, synth_calib):
    start = time.perf_counter()
    result = densify_depth_image(wall_cloud, synth_calib, 160, 128)
    elapsed = time.perf_counter() - start
    truth = analytic_depth(wall_scene, synth_calib, 160, 128)
    dense = result.image
    wall = truth.valid
    both = wall & dense.valid
    rmse = float(np.sqrt(np.mean((dense.values[both] - truth.values[both]) ** 2)))
    wall_valid = float(np.mean(dense.valid[wall]))
    sparse = project_sparse(wall_cloud, synth_calib, 160, 128).valid_fraction()
    ok = rmse <= 0.3 and wall_valid >= 0.90 and sparse <= 0.20 and elapsed <= 120.0
    report(5, ok, f"RMSE {rmse:.3f} m (<= 0.3), wall valid {wall_valid:.3f} (>= 0.90), "
                  f"sparse valid {sparse:.3f} (<= 0.20), {elapsed:.1f} s (<= 120 s) at 160x128")
    assert ok


def _stats_average(directory, capsys):
    assert main(["stats", str(directory)]) == 0
    last = capsys.readouterr().out.strip().splitlines()[-1]
    return float(dict(kv.split("=") for kv in last.split()[1:])["valid_native"])


def test_criterion_6_sparsity_statistics(report, capsys):
    root = os.environ.get(FIXTURE_ENV)
    depth_dir = Path(root) / "depth" if root else None
    if not depth_dir or len(list(depth_dir.glob("*.png"))) < 5:
        report(6, "SKIP", f"real KITTI fixtures absent; set {FIXTURE_ENV} to a directory holding "
                          "depth/ (>= 5 ground-truth PNGs) and densified/ (outputs for the same scans)")
        pytest.skip(f"{FIXTURE_ENV} not set or fewer than 5 depth frames")
    sparse = _stats_average(depth_dir, capsys)
    dense_dir = Path(root) / "densified"
    dense = _stats_average(dense_dir, capsys) if any(dense_dir.glob("*.png")) else float("nan")
    ok = abs(sparse - KITTI_DEPTH_VALID) <= 0.05 and dense >= 0.55
    report(6, ok, f"KITTI Depth average valid {sparse:.4f} (reference {KITTI_DEPTH_VALID} +/- 0.05), "
                  f"densified {dense:.4f} (>= 0.55; dataset average {KITTI_DENSIFIED_VALID})")
    assert ok


def test_criterion_7_determinism(report, tmp_path, wall_cloud):
    from hilbertdepth.pointcloud import write_velodyne_bin

    write_velodyne_bin(wall_cloud, tmp_path / "scan.bin")
    calib = write_synthetic_calib_dir(tmp_path / "calib")
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}.png"
        code = main(["densify", str(tmp_path / "scan.bin"), "--calib", str(calib), "--out", str(out),
                     "--seed", "3", "--image-size", "160x128"])
        assert code == 0
        outputs.append(out.read_bytes())
    same = outputs[0] == outputs[1]
    report(7, same, f"two densify runs with seed 3 byte-identical: {same} ({len(outputs[0])} bytes)")
    assert same


def test_criterion_8_round_trips(report, tmp_path):
    r = np.random.default_rng(5)
    data = r.normal(0, 20, size=(5000, 4)).astype(np.float32)
    raw = data.tobytes()
    bin_ok = read_velodyne_bin(raw).to_bytes() == raw
    depth = r.uniform(0.5, 200.0, size=(64, 96)) * (r.random((64, 96)) > 0.7)
    write_depth_png(DepthImage(depth), tmp_path / "d.png")
    back = read_depth_png(tmp_path / "d.png").values
    mask_ok = np.array_equal(back > 0, depth > 0)
    err = float(np.max(np.abs(back - depth)))
    ok = bin_ok and mask_ok and err <= 1 / 512
    report(8, ok, f"bin bytes identical: {bin_ok}; PNG mask exact: {mask_ok}; "
                  f"max depth error {err:.5f} m (<= {1 / 512:.5f})")
    assert ok


def test_criterion_9_non_reproducibility_statement(report):
    readme = Path(__file__).resolve().parents[1] / "README.md"
    stated = readme.is_file() and "not reproducible" in " ".join(readme.read_text().split())
    report(9, stated, "network accuracy figures (e.g. RMSE 3.097 m at 0-50 m for the continuous-map "
                      "trained network) are not reproducible here: the depth-prediction network and its "
                      "training are out of scope; the loss, metric and densification suites stand in for them")
    assert stated
