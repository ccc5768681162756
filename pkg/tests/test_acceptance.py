"""End-to-end acceptance suite.

Each test pins one externally meaningful behavior of the full pipeline:
exact recovery on clean data, analytic Jacobians, accuracy versus the
GNSS-only baseline, convergence budget, and robustness to mounting
offsets, multipath, outages, sensor orientation, and outliers.
"""

import dataclasses
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from attfree._rotations import random_rotation
from attfree.evaluation import (
    compute_errors,
    fuse_data,
    gnss_only_errors,
    run_fault_experiment,
    run_lever_arm_sweep,
)
from attfree.geodesy import GnssData, ImuData
from attfree.graph import FusionConfig, build
from attfree.optimizer import solve
from attfree.simulator import FaultSchedule, ScenarioConfig, simulate_scenario
from attfree.state import initialize

from conftest import _simulate
from test_factors import fd_jacobian, make_factor_cases, stack_blocks

SEEDS = (0, 1, 2, 3, 4)
URBAN_DURATION = 300.0


@pytest.fixture(scope="module")
def urban_runs():
    """Default-configuration fusion on five urban scenarios (shared by tests)."""
    runs = []
    tic = time.perf_counter()
    for seed in SEEDS:
        truth, imu, gnss = _simulate("city_grid", URBAN_DURATION, seed, False)
        estimate, report, _ = fuse_data(imu, gnss)
        runs.append({
            "fused": compute_errors(estimate, truth, report),
            "gnss": gnss_only_errors(gnss, truth),
            "report": report,
        })
    elapsed = time.perf_counter() - tic
    return runs, elapsed


def test_01_zero_noise_consistency():
    """With every error source off, fusion reproduces truth from a bad start."""
    tic = time.perf_counter()
    cfg = ScenarioConfig(kind="stop_and_go", duration=300.0, seed=0)
    cfg = dataclasses.replace(cfg, sensors=cfg.sensors.noiseless())
    truth, imu, gnss = simulate_scenario(cfg)
    graph = build(gnss, imu)
    init = initialize(graph.fixes)
    rng = np.random.default_rng(99)
    init.pos += rng.normal(scale=2.0, size=init.pos.shape)
    init.vel += rng.normal(scale=0.5, size=init.vel.shape)
    estimate, report = solve(graph, init)
    elapsed = time.perf_counter() - tic

    errors = compute_errors(estimate, truth, report)
    assert errors.rms_3d < 1e-4
    assert report.final_cost < 1e-9
    assert report.iterations > 0  # the perturbation forced real work
    assert elapsed < 10.0


def test_02_jacobians_match_finite_differences():
    """1000 random configurations per factor, excluding degenerate zones."""
    tic = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        for build_eval, p0, keys_sizes in make_factor_cases(rng):
            analytic = stack_blocks(build_eval(p0), keys_sizes)
            numeric = fd_jacobian(build_eval, p0)
            scale = max(1.0, float(np.max(np.abs(numeric))))
            worst = max(worst, float(np.max(np.abs(analytic - numeric))) / scale)
            assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)
    elapsed = time.perf_counter() - tic
    assert worst < 1e-5
    assert elapsed < 30.0


def test_03_accuracy_versus_gnss_baseline(urban_runs):
    """Fused RMS clearly beats raw GNSS on urban-like driving, 5 seeds."""
    runs, elapsed = urban_runs
    gnss_rms = np.array([r["gnss"].rms_3d for r in runs])
    fused_rms = np.array([r["fused"].rms_3d for r in runs])
    # per-axis sigma 1 m on three axes puts the raw baseline near sqrt(3)
    assert abs(gnss_rms.mean() - 1.73) < 0.15
    assert fused_rms.mean() <= 0.65 * gnss_rms.mean()
    assert elapsed < 300.0


def test_04_iteration_budget(urban_runs):
    runs, _ = urban_runs
    iterations = [r["report"].iterations for r in runs]
    assert all(r["report"].converged for r in runs)
    assert max(iterations) <= 20


def test_05_lever_arm_robustness():
    """Accuracy holds as the IMU moves away from the rotation center."""
    tic = time.perf_counter()
    base = ScenarioConfig(kind="city_grid", duration=URBAN_DURATION, seed=0)
    points = run_lever_arm_sweep(base, (0.0, 0.6, 1.0, 2.0, 3.0))
    elapsed = time.perf_counter() - tic

    fused = np.array([p.fused_rms_3d for p in points])
    baseline = np.array([p.gnss_rms_3d for p in points])
    assert np.ptp(baseline) < 1e-9  # paired seeds: identical GNSS data
    assert (fused.max() - fused.min()) / fused.min() < 0.20
    assert elapsed < 600.0


def test_06_multipath_robustness():
    """Huber-weighted fusion suppresses a 60 s multipath burst, 5 seeds."""
    window = (120.0, 180.0, 10.0, 1.0)
    ratios = []
    for seed in SEEDS:
        cfg = ScenarioConfig(kind="city_grid", duration=URBAN_DURATION, seed=seed,
                             faults=FaultSchedule(multipath_windows=[window]))
        rep = run_fault_experiment(cfg)
        (w,) = rep.windows
        assert w.n_epochs == 60
        ratios.append(w.fused_rms_3d / w.gnss_rms_3d)
    assert float(np.mean(ratios)) < 0.40


def test_07_outage_bridging():
    """Three 5 s GNSS gaps are bridged with bounded drift at full IMU noise."""
    outages = [(60.0, 65.0), (150.0, 155.0), (240.0, 245.0)]
    for seed in SEEDS[:3]:
        cfg = ScenarioConfig(kind="city_grid", duration=URBAN_DURATION, seed=seed,
                             faults=FaultSchedule(outage_windows=outages))
        rep = run_fault_experiment(cfg)
        assert len(rep.windows) == 3
        for w in rep.windows:
            assert w.n_epochs == 5
            assert w.gnss_rms_3d is None
            assert w.fused_max_3d < 5.0


def test_08_attitude_invariance():
    """A rigid re-orientation of the inertial sensor changes nothing."""
    truth, imu, gnss = _simulate("city_grid", URBAN_DURATION, 0, False)
    rot = random_rotation(np.random.default_rng(7))
    imu_rot = ImuData(imu.t, imu.accel @ rot.T, imu.gyro @ rot.T)

    g_plain = build(gnss, imu)
    g_rot = build(gnss, imu_rot, g_plain.config)
    traj = initialize(g_plain.fixes)
    worst = 0.0
    for f_plain, f_rot in zip(g_plain.factors, g_rot.factors):
        name = type(f_plain).__name__
        if name not in ("AccelFactor", "GyroFactor"):
            continue
        r_plain = f_plain.evaluate(traj).residual[0]
        r_rot = f_rot.evaluate(traj).residual[0]
        worst = max(worst, abs(r_plain - r_rot))
    assert worst < 1e-9

    est_plain, rep_plain, _ = fuse_data(imu, gnss)
    est_rot, rep_rot, _ = fuse_data(imu_rot, gnss)
    rms_plain = compute_errors(est_plain, truth).rms_3d
    rms_rot = compute_errors(est_rot, truth).rms_3d
    assert abs(rms_rot - rms_plain) / rms_plain < 0.01


def test_09_huber_limits_outlier_influence():
    """One 50 m position outlier barely moves the robust estimate."""
    truth, imu, gnss = _simulate("city_grid", URBAN_DURATION, 0, False)
    k = len(gnss) // 2
    pos = gnss.pos.copy()
    pos[k, 0] += 50.0
    spiked = GnssData(gnss.t, pos, gnss.vel, gnss.pos_std, gnss.vel_std,
                      gnss.pos_valid, gnss.vel_valid)

    est_clean, _, _ = fuse_data(imu, gnss)
    est_huber, _, _ = fuse_data(imu, spiked)
    est_naive, _, _ = fuse_data(imu, spiked, FusionConfig(kernel="none"))

    moved_huber = float(np.linalg.norm(est_huber.pos[k] - est_clean.pos[k]))
    moved_naive = float(np.linalg.norm(est_naive.pos[k] - est_clean.pos[k]))
    assert moved_huber < 1.0
    assert moved_naive > 1.0
    assert moved_naive > 5.0 * moved_huber


def test_10_angle_formulations_equivalent():
    """atan2 and clamped-arccos formulations land on the same trajectory."""
    for seed in (0, 1):
        truth, imu, gnss = _simulate("city_grid", URBAN_DURATION, seed, False)
        est_atan, _, _ = fuse_data(imu, gnss, FusionConfig(angle_mode="atan2"))
        est_acos, _, _ = fuse_data(imu, gnss, FusionConfig(angle_mode="arccos"))
        rms_atan = compute_errors(est_atan, truth).rms_3d
        rms_acos = compute_errors(est_acos, truth).rms_3d
        assert abs(rms_atan - rms_acos) < 1e-6
