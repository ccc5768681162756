"""Error metrics, CDFs, and the experiment drivers."""

import math

import numpy as np
import pytest

from attfree.errors import DataError
from attfree.evaluation import (
    compute_errors,
    fuse_data,
    gnss_only_errors,
    run_fault_experiment,
    run_lever_arm_sweep,
)
from attfree.simulator import FaultSchedule, ScenarioConfig
from attfree.state import TrajectoryEstimate


def offset_estimate(truth, step=100, offset=(0.0, 0.0, 0.0)):
    idx = np.arange(step - 1, truth.n_samples, step)
    n = idx.shape[0]
    return TrajectoryEstimate(truth.t[idx], truth.pos[idx] + np.asarray(offset),
                              truth.vel[idx], np.zeros(n), np.zeros(n))


class TestComputeErrors:
    def test_exact_estimate_zero_error(self, scenario):
        truth, imu, gnss = scenario("figure_eight", 30.0, 0, True)
        rep = compute_errors(offset_estimate(truth), truth)
        assert rep.rms_3d == 0.0
        assert rep.max_3d == 0.0
        assert rep.n_epochs == 30

    def test_constant_diagonal_offset(self, scenario):
        truth, _, _ = scenario("figure_eight", 30.0, 0, True)
        c = 1.0 / math.sqrt(3.0)
        rep = compute_errors(offset_estimate(truth, offset=(c, c, c)), truth)
        assert rep.rms_3d == pytest.approx(1.0)
        assert rep.rms_horizontal == pytest.approx(math.sqrt(2.0 / 3.0))
        assert rep.rms_east == pytest.approx(c)
        assert rep.max_3d == pytest.approx(1.0)

    def test_rms_pythagorean_identity(self, scenario):
        truth, imu, gnss = scenario("city_grid", 40.0, 0, False)
        rep = gnss_only_errors(gnss, truth)
        assert rep.rms_3d**2 == pytest.approx(rep.rms_east**2 + rep.rms_north**2 + rep.rms_up**2)
        assert rep.rms_horizontal**2 == pytest.approx(rep.rms_east**2 + rep.rms_north**2)
        assert rep.rms_3d == pytest.approx(float(np.sqrt((rep.error_3d() ** 2).mean())))

    def test_alignment_tolerates_sub_millisecond_jitter(self, scenario):
        truth, _, _ = scenario("figure_eight", 30.0, 0, True)
        est = offset_estimate(truth)
        jittered = TrajectoryEstimate(est.t + 5e-4, est.pos, est.vel, est.b_acc, est.b_gyro)
        rep = compute_errors(jittered, truth)
        assert rep.n_epochs == 30
        assert rep.rms_3d == 0.0

    def test_disjoint_times_fatal(self, scenario):
        truth, _, _ = scenario("figure_eight", 30.0, 0, True)
        est = offset_estimate(truth)
        shifted = TrajectoryEstimate(est.t + 1000.0, est.pos, est.vel, est.b_acc, est.b_gyro)
        with pytest.raises(DataError, match="no overlapping epochs"):
            compute_errors(shifted, truth)

    def test_summary_mentions_the_numbers(self, scenario):
        truth, _, _ = scenario("figure_eight", 30.0, 0, True)
        rep = compute_errors(offset_estimate(truth, offset=(3.0, 0.0, 4.0)), truth)
        text = rep.summary()
        assert "RMS 3D" in text and "5.0000" in text


class TestCdf:
    def test_cdf_properties(self, scenario):
        truth, imu, gnss = scenario("city_grid", 60.0, 0, False)
        rep = gnss_only_errors(gnss, truth)
        cdf = rep.cdf_3d
        assert np.all(np.diff(cdf) >= 0)
        assert cdf.shape[0] == rep.n_epochs
        assert rep.cdf_fraction(-1.0) == 0.0
        assert rep.cdf_fraction(float(cdf[-1])) == 1.0
        assert rep.cdf_fraction(float(np.median(cdf))) == pytest.approx(0.5, abs=0.05)

    def test_cdf_right_continuous_at_sample(self, scenario):
        truth, _, _ = scenario("figure_eight", 30.0, 0, True)
        rep = compute_errors(offset_estimate(truth, offset=(2.0, 0.0, 0.0)), truth)
        # every error equals 2.0; the CDF must include the value at its own threshold
        assert rep.cdf_fraction(2.0) == 1.0
        assert rep.cdf_fraction(2.0 - 1e-12) == 0.0


class TestGnssBaseline:
    def test_errors_only_on_valid_rows(self, scenario):
        truth, imu, gnss = scenario("city_grid", 40.0, 0, False)
        flags = gnss.pos_valid.copy()
        flags[5:10] = False
        from attfree.geodesy import GnssData

        masked = GnssData(gnss.t, gnss.pos, gnss.vel, gnss.pos_std, gnss.vel_std,
                          flags, gnss.vel_valid)
        rep = gnss_only_errors(masked, truth)
        assert rep.n_epochs == len(gnss) - 5

    def test_no_valid_rows_fatal(self, scenario):
        truth, imu, gnss = scenario("city_grid", 40.0, 0, False)
        from attfree.geodesy import GnssData

        dead = GnssData(gnss.t, gnss.pos, gnss.vel, gnss.pos_std, gnss.vel_std,
                        np.zeros(len(gnss), dtype=bool), gnss.vel_valid)
        with pytest.raises(DataError):
            gnss_only_errors(dead, truth)


class TestFuseData:
    def test_returns_estimate_report_graph(self, scenario):
        truth, imu, gnss = scenario("city_grid", 40.0, 0, False)
        estimate, report, graph = fuse_data(imu, gnss)
        assert estimate.n_epochs == len(gnss)
        assert report.converged
        assert graph.stats.n_epochs == len(gnss)
        fused = compute_errors(estimate, truth, report)
        baseline = gnss_only_errors(gnss, truth)
        assert fused.rms_3d < baseline.rms_3d
        assert fused.solve_report is report


class TestExperiments:
    def test_lever_sweep_pairs_seeds(self):
        base = ScenarioConfig(kind="city_grid", duration=40.0, seed=0)
        points = run_lever_arm_sweep(base, [0.0, 2.0])
        assert [p.arm for p in points] == [0.0, 2.0]
        # identical GNSS draws -> identical baseline RMS
        assert points[0].gnss_rms_3d == pytest.approx(points[1].gnss_rms_3d, rel=1e-12)
        assert all(p.iterations > 0 for p in points)

    def test_lever_sweep_rejects_negative_arm(self):
        base = ScenarioConfig(kind="city_grid", duration=40.0, seed=0)
        with pytest.raises(DataError):
            run_lever_arm_sweep(base, [-1.0])

    def test_fault_experiment_windows(self):
        cfg = ScenarioConfig(
            kind="city_grid", duration=60.0, seed=0,
            faults=FaultSchedule(multipath_windows=[(20.0, 30.0, 10.0, 1.0)],
                                 outage_windows=[(40.0, 45.0)]),
        )
        rep = run_fault_experiment(cfg)
        kinds = [w.kind for w in rep.windows]
        assert kinds == ["multipath", "outage"]
        mp, out = rep.windows
        assert mp.n_epochs == 10
        assert out.gnss_rms_3d is None  # no valid fixes inside an outage
        assert out.n_epochs == 5
        assert "GNSS-only" in rep.summary()

    def test_fault_window_must_fit_span(self):
        cfg = ScenarioConfig(
            kind="city_grid", duration=60.0, seed=0,
            faults=FaultSchedule(outage_windows=[(55.0, 70.0)]),
        )
        with pytest.raises(DataError):
            run_fault_experiment(cfg)
