"""State layout and GNSS-based initialization."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from attfree.errors import DataError
from attfree.geodesy import GnssData
from attfree.state import BLOCK, EpochState, StateLayout, TrajectoryEstimate, initialize, layout


def _fixes(t, pos, vel=None, pos_valid=None, vel_valid=None):
    t = np.asarray(t, dtype=float)
    n = len(t)
    pos = np.asarray(pos, dtype=float).reshape(n, 3)
    vel = np.zeros((n, 3)) if vel is None else np.asarray(vel, dtype=float).reshape(n, 3)
    return GnssData(t, pos, vel, np.ones((n, 3)), 0.2 * np.ones((n, 3)), pos_valid, vel_valid)


class TestLayout:
    def test_single_epoch_offsets(self):
        lay = layout(np.array([0.0]))
        assert lay.dim == BLOCK == 8
        assert [lay.offset(0, "x", c) for c in range(3)] == [0, 1, 2]
        assert [lay.offset(0, "v", c) for c in range(3)] == [3, 4, 5]
        assert lay.offset(0, "b_acc") == 6
        assert lay.offset(0, "b_gyro") == 7

    def test_third_epoch_velocity_north(self):
        lay = layout(np.array([0.0, 1.0, 2.0]))
        assert lay.offset(2, "v", 1) == 20
        assert lay.dim == 24

    def test_offset_bounds(self):
        lay = layout(np.array([0.0, 1.0]))
        with pytest.raises(IndexError):
            lay.offset(2, "x")
        with pytest.raises(IndexError):
            lay.offset(0, "b_acc", 1)
        with pytest.raises(KeyError):
            lay.offset(0, "attitude")

    def test_flatten_unflatten_roundtrip(self):
        rng = np.random.default_rng(0)
        t = np.arange(5, dtype=float)
        traj = TrajectoryEstimate(t, rng.normal(size=(5, 3)), rng.normal(size=(5, 3)),
                                  rng.normal(size=5), rng.normal(size=5))
        lay = layout(traj)
        flat = lay.flatten(traj)
        assert flat.shape == (40,)
        back = lay.unflatten(flat)
        assert_allclose(back.pos, traj.pos)
        assert_allclose(back.vel, traj.vel)
        assert_allclose(back.b_acc, traj.b_acc)
        assert_allclose(back.b_gyro, traj.b_gyro)

    def test_flat_indexing_matches_offsets(self):
        rng = np.random.default_rng(1)
        t = np.arange(4, dtype=float)
        traj = TrajectoryEstimate(t, rng.normal(size=(4, 3)), rng.normal(size=(4, 3)),
                                  rng.normal(size=4), rng.normal(size=4))
        lay = layout(traj)
        flat = lay.flatten(traj)
        assert flat[lay.offset(2, "v", 1)] == traj.vel[2, 1]
        assert flat[lay.offset(3, "b_gyro")] == traj.b_gyro[3]

    def test_duplicate_times_rejected(self):
        with pytest.raises(DataError):
            StateLayout(np.array([0.0, 1.0, 1.0]))

    def test_epoch_state_validates(self):
        with pytest.raises(ValueError):
            EpochState(np.array([np.nan, 0, 0]), np.zeros(3), 0.0, 0.0)


class TestTrajectoryEstimate:
    def test_shape_checks(self):
        with pytest.raises(ValueError):
            TrajectoryEstimate([0.0, 1.0], np.zeros((3, 3)), np.zeros((2, 3)), np.zeros(2), np.zeros(2))

    def test_state_accessor(self):
        traj = TrajectoryEstimate([0.0, 1.0], np.arange(6.0).reshape(2, 3),
                                  np.zeros((2, 3)), [0.1, 0.2], [0.3, 0.4])
        s = traj.state(1)
        assert_allclose(s.x, [3.0, 4.0, 5.0])
        assert s.b_gyro == 0.4

    def test_copy_is_independent(self):
        traj = TrajectoryEstimate([0.0, 1.0], np.zeros((2, 3)), np.zeros((2, 3)), np.zeros(2), np.zeros(2))
        dup = traj.copy()
        dup.pos[0, 0] = 9.0
        assert traj.pos[0, 0] == 0.0


class TestInitialize:
    def test_copies_valid_fixes_through(self):
        rng = np.random.default_rng(2)
        pos = rng.normal(size=(4, 3))
        vel = rng.normal(size=(4, 3))
        est = initialize(_fixes([1.0, 2.0, 3.0, 4.0], pos, vel))
        assert_allclose(est.pos, pos)
        assert_allclose(est.vel, vel)
        assert_allclose(est.b_acc, np.zeros(4))
        assert_allclose(est.b_gyro, np.zeros(4))

    def test_interpolates_gap_at_midpoint(self):
        pos = np.array([[0.0, 0.0, 0.0], [999.0, 999.0, 999.0], [2.0, 0.0, 0.0]])
        est = initialize(_fixes([0.0, 1.0, 2.0], pos, pos_valid=[True, False, True]))
        assert_allclose(est.pos[1], [1.0, 0.0, 0.0])

    def test_holds_ends_constant(self):
        pos = np.array([[77.0, 0.0, 0.0], [5.0, 1.0, 0.0], [6.0, 2.0, 0.0], [88.0, 0.0, 0.0]])
        valid = [False, True, True, False]
        est = initialize(_fixes([0.0, 1.0, 2.0, 3.0], pos, pos_valid=valid))
        assert_allclose(est.pos[0], [5.0, 1.0, 0.0])
        assert_allclose(est.pos[3], [6.0, 2.0, 0.0])

    def test_idempotent(self):
        pos = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [4.0, 0.0, 0.0]])
        first = initialize(_fixes([0.0, 1.0, 2.0], pos, pos_valid=[True, False, True]))
        again = initialize(_fixes([0.0, 1.0, 2.0], first.pos, first.vel))
        assert_allclose(again.pos, first.pos)
        assert_allclose(again.vel, first.vel)

    def test_all_velocities_invalid_fall_back_to_zero(self):
        fixes = _fixes([0.0, 1.0], np.ones((2, 3)), vel=np.ones((2, 3)),
                       vel_valid=[False, False])
        est = initialize(fixes)
        assert_allclose(est.vel, np.zeros((2, 3)))

    def test_needs_two_fixes(self):
        with pytest.raises(DataError):
            initialize(_fixes([0.0], np.zeros((1, 3))))

    def test_needs_one_valid_position(self):
        with pytest.raises(DataError):
            initialize(_fixes([0.0, 1.0], np.zeros((2, 3)), pos_valid=[False, False]))
