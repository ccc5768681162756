"""Graph assembly: factor counts, gating, outages, and the objective."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from attfree.backend import np_kernels
from attfree.errors import DataError
from attfree.geodesy import STANDARD_GRAVITY, GnssData, ImuData
from attfree.graph import FusionConfig, build, expand_to_grid, gating_speeds
from attfree.state import TrajectoryEstimate, initialize, layout

G = STANDARD_GRAVITY


def make_dataset(n_epochs=10, speed=5.0, rate=100.0, vel_scale=None, drop_rows=None,
                 pos_valid=None, vel_valid=None, imu_until=None):
    """Constant-velocity eastbound truth with exact, noise-free sensor data."""
    t_gnss = np.arange(1.0, n_epochs + 1.0)
    pos = np.column_stack([speed * t_gnss, np.zeros(n_epochs), np.zeros(n_epochs)])
    vel = np.tile([speed, 0.0, 0.0], (n_epochs, 1))
    if vel_scale is not None:
        vel = vel * np.asarray(vel_scale).reshape(-1, 1)
    gnss = GnssData(t_gnss, pos, vel, np.ones((n_epochs, 3)), 0.2 * np.ones((n_epochs, 3)),
                    pos_valid, vel_valid)
    if drop_rows is not None:
        keep = np.ones(n_epochs, dtype=bool)
        keep[list(drop_rows)] = False
        gnss = GnssData(t_gnss[keep], pos[keep], vel[keep],
                        np.ones((keep.sum(), 3)), 0.2 * np.ones((keep.sum(), 3)))
    t_end = imu_until if imu_until is not None else t_gnss[-1]
    n_imu = int(round(t_end * rate))
    t_imu = (np.arange(n_imu) + 1) / rate
    accel = np.tile([0.0, 0.0, G], (n_imu, 1))
    gyro = np.zeros((n_imu, 3))
    imu = ImuData(t_imu, accel, gyro)
    return gnss, imu


def truth_trajectory(gnss):
    n = len(gnss)
    return TrajectoryEstimate(gnss.t.copy(), gnss.pos.copy(), gnss.vel.copy(),
                              np.zeros(n), np.zeros(n))


class TestCounts:
    def test_ten_epoch_full_coverage(self):
        gnss, imu = make_dataset(10)
        g = build(gnss, imu)
        s = g.stats
        assert s.n_epochs == 10
        assert s.accel == 9
        assert s.gyro == 9
        assert s.motion == 9
        assert s.bias_acc == 9
        assert s.bias_gyro == 9
        assert s.gnss_pos == 10
        assert s.gnss_vel == 10
        assert s.priors == 2
        assert s.total_factors == 67 == len(g.factors)
        assert s.gyro_gated_out == 0
        assert s.intervals_without_imu == 0

    def test_stats_match_factor_list(self):
        gnss, imu = make_dataset(7)
        g = build(gnss, imu)
        by_type = {}
        for f in g.factors:
            by_type[type(f).__name__] = by_type.get(type(f).__name__, 0) + 1
        assert by_type["AccelFactor"] == g.stats.accel
        assert by_type["GyroFactor"] == g.stats.gyro
        assert by_type["MotionFactor"] == g.stats.motion
        assert by_type["BiasFactor"] == g.stats.bias_acc + g.stats.bias_gyro
        assert by_type["GnssPosFactor"] == g.stats.gnss_pos
        assert by_type["GnssVelFactor"] == g.stats.gnss_vel
        assert by_type["PriorFactor"] == g.stats.priors

    def test_factor_toggles(self):
        gnss, imu = make_dataset(6)
        g = build(gnss, imu, FusionConfig(use_accel_factors=False, use_gyro_factors=False))
        assert g.stats.accel == 0
        assert g.stats.gyro == 0
        assert g.stats.gyro_gated_out == 0
        assert g.stats.motion == 5


class TestGating:
    def test_slow_epoch_gates_adjacent_intervals(self):
        scale = np.ones(10)
        scale[3] = 0.1  # 0.5 m/s at epoch 3 with speed=5
        gnss, imu = make_dataset(10, vel_scale=scale)
        g = build(gnss, imu)
        assert g.stats.gyro == 7
        assert g.stats.gyro_gated_out == 2
        gated = {f.i for f in g.factors if type(f).__name__ == "GyroFactor"}
        assert 2 not in gated and 3 not in gated

    def test_gate_threshold_is_inclusive(self):
        scale = np.full(10, 0.2)  # exactly 1.0 m/s everywhere
        gnss, imu = make_dataset(10, vel_scale=scale)
        g = build(gnss, imu)
        assert g.stats.gyro == 9

    def test_gating_speeds_interpolate_outages(self):
        gnss, _ = make_dataset(5)
        flags = np.array([True, True, False, True, True])
        gnss2 = GnssData(gnss.t, gnss.pos, gnss.vel, gnss.pos_std, gnss.vel_std,
                         vel_valid=flags)
        speeds = gating_speeds(gnss2)
        assert speeds[2] == pytest.approx(5.0)


class TestOutages:
    def test_invalid_rows_drop_gnss_factors_only(self):
        flags = np.ones(10, dtype=bool)
        flags[3:8] = False  # 5 s outage
        gnss, imu = make_dataset(10, pos_valid=flags, vel_valid=flags)
        g = build(gnss, imu)
        assert g.stats.gnss_pos == 5
        assert g.stats.gnss_vel == 5
        # the chain through the outage is intact
        assert g.stats.motion == 9
        assert g.stats.bias_acc == 9
        assert g.stats.accel == 9

    def test_missing_rows_are_regridded(self):
        gnss, imu = make_dataset(10, drop_rows=[3, 4, 5])
        g = build(gnss, imu)
        assert g.n_epochs == 10
        assert g.stats.gnss_pos == 7
        assert g.stats.motion == 9

    def test_expand_to_grid_inserts_invalid_placeholders(self):
        gnss, _ = make_dataset(10, drop_rows=[4, 5])
        expanded = expand_to_grid(gnss)
        assert len(expanded) == 10
        assert_allclose(expanded.t, np.arange(1.0, 11.0))
        assert list(expanded.pos_valid) == [True] * 4 + [False] * 2 + [True] * 4

    def test_expand_to_grid_noop_without_gaps(self):
        gnss, _ = make_dataset(5)
        assert expand_to_grid(gnss) is gnss

    def test_partial_imu_coverage(self):
        gnss, imu = make_dataset(10, imu_until=5.0)
        g = build(gnss, imu)
        assert g.stats.intervals_without_imu == 5
        assert g.stats.accel == 4
        assert g.stats.motion == 9


class TestValidation:
    def test_needs_two_epochs(self):
        gnss, imu = make_dataset(2)
        one = GnssData(gnss.t[:1], gnss.pos[:1], gnss.vel[:1], gnss.pos_std[:1], gnss.vel_std[:1])
        with pytest.raises(DataError):
            build(one, imu)

    def test_needs_valid_position(self):
        gnss, imu = make_dataset(3, pos_valid=[False, False, False])
        with pytest.raises(DataError):
            build(gnss, imu)

    def test_rejects_disjoint_imu(self):
        gnss, _ = make_dataset(3)
        t_imu = np.arange(100.0, 110.0, 0.01)
        imu = ImuData(t_imu, np.zeros((len(t_imu), 3)), np.zeros((len(t_imu), 3)))
        with pytest.raises(DataError):
            build(gnss, imu)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FusionConfig(kernel="tukey")
        with pytest.raises(ValueError):
            FusionConfig(angle_mode="cordic")
        with pytest.raises(ValueError):
            FusionConfig(motion_sigma=0.0)

    def test_sigma_floor_applied(self):
        gnss, imu = make_dataset(4)
        tiny = GnssData(gnss.t, gnss.pos, gnss.vel,
                        np.full((4, 3), 1e-9), np.full((4, 3), 1e-9))
        g = build(tiny, imu)
        for f in g.factors:
            if type(f).__name__ in ("GnssPosFactor", "GnssVelFactor"):
                assert np.all(f.std >= 1e-3)
        assert np.isfinite(g.objective(truth_trajectory(gnss)))


class TestObjective:
    def test_zero_at_exact_truth(self):
        gnss, imu = make_dataset(10)
        g = build(gnss, imu)
        assert g.objective(truth_trajectory(gnss)) < 1e-9

    def test_zero_noise_scenario_truth_cost(self, scenario):
        truth, imu, gnss = scenario("stop_and_go", 40.0, 0, True)
        g = build(gnss, imu)
        idx = np.clip(np.searchsorted(truth.t, g.times), 0, truth.t.shape[0] - 1)
        traj = TrajectoryEstimate(g.times.copy(), truth.pos[idx], truth.vel[idx],
                                  np.zeros(len(idx)), np.zeros(len(idx)))
        assert g.objective(traj) < 1e-9

    def test_monotone_in_position_offset(self):
        gnss, imu = make_dataset(10)
        g = build(gnss, imu)
        costs = []
        for d in (0.0, 0.5, 1.0, 2.0):
            traj = truth_trajectory(gnss)
            traj.pos[:, 0] += d
            costs.append(g.objective(traj))
        assert costs == sorted(costs)
        assert costs[1] > costs[0]

    def test_matches_packed_backend_cost(self, scenario):
        truth, imu, gnss = scenario("city_grid", 40.0, 1, False)
        g = build(gnss, imu)
        traj = initialize(g.fixes)
        flat = layout(traj).flatten(traj)
        direct = g.objective(traj)
        packed = np_kernels.evaluate_cost(g.packed(), flat)
        assert packed == pytest.approx(direct, rel=1e-12)

    def test_invariant_under_factor_permutation(self, scenario):
        from attfree.graph import FactorGraph

        truth, imu, gnss = scenario("city_grid", 40.0, 1, False)
        g = build(gnss, imu)
        traj = initialize(g.fixes)
        rng = np.random.default_rng(3)
        shuffled = list(g.factors)
        rng.shuffle(shuffled)
        g2 = FactorGraph(g.times, shuffled, g.stats, g.fixes, g.config)
        assert g2.objective(traj) == pytest.approx(g.objective(traj), rel=1e-12)

    def test_arccos_mode_propagates(self):
        gnss, imu = make_dataset(5)
        g = build(gnss, imu, FusionConfig(angle_mode="arccos"))
        assert g.packed().angle_arccos == 1
        modes = {f.angle_mode for f in g.factors if type(f).__name__ == "GyroFactor"}
        assert modes == {"arccos"}

    def test_kernel_none_disables_robustifier(self):
        gnss, imu = make_dataset(5)
        g = build(gnss, imu, FusionConfig(kernel="none"))
        for f in g.factors:
            if type(f).__name__ in ("GnssPosFactor", "GnssVelFactor"):
                assert f.kernel is None
        assert g.packed().pos_k == np.inf
