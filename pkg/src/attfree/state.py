"""Per-epoch state blocks, flat vector layout, and GNSS-based initialization.

Each epoch carries position (3), velocity (3), and two scalar inertial
biases: one on the accumulated specific-force magnitude, one on the
accumulated rotation angle. There is no attitude anywhere in the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .geodesy import GnssData

BLOCK = 8  # scalars per epoch: x(3) + v(3) + b_acc + b_gyro

_FIELD_OFFSETS = {"x": 0, "v": 3, "b_acc": 6, "b_gyro": 7}
_FIELD_SIZES = {"x": 3, "v": 3, "b_acc": 1, "b_gyro": 1}


@dataclass(frozen=True)
class EpochState:
    """State of a single epoch."""

    x: np.ndarray  # ENU position, m
    v: np.ndarray  # ENU velocity, m/s
    b_acc: float  # specific-force magnitude bias, m/s^2
    b_gyro: float  # rotation angle bias, rad

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(3)
        v = np.asarray(self.v, dtype=float).reshape(3)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("EpochState position/velocity must be finite")
        if not (math.isfinite(self.b_acc) and math.isfinite(self.b_gyro)):
            raise ValueError("EpochState biases must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)


class TrajectoryEstimate:
    """Time-ordered epoch states backed by contiguous arrays."""

    def __init__(self, t, pos, vel, b_acc, b_gyro):
        self.t = np.ascontiguousarray(t, dtype=float)
        self.pos = np.ascontiguousarray(pos, dtype=float)
        self.vel = np.ascontiguousarray(vel, dtype=float)
        self.b_acc = np.ascontiguousarray(b_acc, dtype=float)
        self.b_gyro = np.ascontiguousarray(b_gyro, dtype=float)
        n = self.t.shape[0]
        if self.pos.shape != (n, 3) or self.vel.shape != (n, 3):
            raise ValueError("pos and vel must be (n, 3) arrays matching t")
        if self.b_acc.shape != (n,) or self.b_gyro.shape != (n,):
            raise ValueError("biases must be (n,) arrays matching t")
        if n and np.any(np.diff(self.t) <= 0):
            raise DataError("epoch timestamps must be strictly increasing")

    @property
    def n_epochs(self) -> int:
        return self.t.shape[0]

    def state(self, i: int) -> EpochState:
        return EpochState(self.pos[i].copy(), self.vel[i].copy(), float(self.b_acc[i]), float(self.b_gyro[i]))

    def copy(self) -> "TrajectoryEstimate":
        return TrajectoryEstimate(self.t.copy(), self.pos.copy(), self.vel.copy(), self.b_acc.copy(), self.b_gyro.copy())


@dataclass(frozen=True)
class StateLayout:
    """Mapping between epoch states and the flat optimization vector.

    Epoch i occupies the contiguous slice [8i, 8i+8): position at +0..2,
    velocity at +3..5, b_acc at +6, b_gyro at +7.
    """

    t: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=float)
        if t.shape[0] < 1:
            raise ValueError("layout needs at least one epoch")
        if np.any(np.diff(t) <= 0):
            raise DataError("layout timestamps must be strictly increasing (no duplicates)")
        object.__setattr__(self, "t", t)

    @property
    def n_epochs(self) -> int:
        return self.t.shape[0]

    @property
    def dim(self) -> int:
        return BLOCK * self.n_epochs

    def offset(self, epoch: int, field: str, component: int = 0) -> int:
        if not 0 <= epoch < self.n_epochs:
            raise IndexError(f"epoch {epoch} out of range")
        if field not in _FIELD_OFFSETS:
            raise KeyError(f"unknown state field {field!r}")
        if not 0 <= component < _FIELD_SIZES[field]:
            raise IndexError(f"component {component} out of range for field {field!r}")
        return BLOCK * epoch + _FIELD_OFFSETS[field] + component

    def flatten(self, traj: TrajectoryEstimate) -> np.ndarray:
        if traj.n_epochs != self.n_epochs:
            raise ValueError("trajectory epoch count does not match layout")
        out = np.empty((self.n_epochs, BLOCK))
        out[:, 0:3] = traj.pos
        out[:, 3:6] = traj.vel
        out[:, 6] = traj.b_acc
        out[:, 7] = traj.b_gyro
        return out.reshape(-1)

    def unflatten(self, x: np.ndarray) -> TrajectoryEstimate:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"flat vector must have shape ({self.dim},), got {x.shape}")
        blocks = x.reshape(self.n_epochs, BLOCK)
        return TrajectoryEstimate(
            self.t.copy(), blocks[:, 0:3].copy(), blocks[:, 3:6].copy(), blocks[:, 6].copy(), blocks[:, 7].copy()
        )


def layout(traj_or_times) -> StateLayout:
    """Layout for a trajectory estimate or a plain epoch-time array."""
    t = traj_or_times.t if isinstance(traj_or_times, TrajectoryEstimate) else traj_or_times
    return StateLayout(np.asarray(t, dtype=float))


def _interp_valid(t: np.ndarray, values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Copy valid rows; linearly interpolate gaps; hold the ends constant."""
    out = values.copy()
    if valid.all():
        return out
    t_valid = t[valid]
    for axis in range(values.shape[1]):
        # np.interp clamps outside the valid range, giving constant extrapolation
        out[~valid, axis] = np.interp(t[~valid], t_valid, values[valid, axis])
    return out


def initialize(fixes: GnssData) -> TrajectoryEstimate:
    """Initial trajectory from GNSS alone: one epoch per fix, biases zero.

    Epochs without a valid position or velocity are filled by linear
    interpolation between the neighboring valid fixes (constant beyond the
    ends). Idempotent: feeding the result's epochs back reproduces it.
    """
    n = len(fixes)
    if n < 2:
        raise DataError(f"initialization needs at least 2 fixes, got {n}")
    if not fixes.pos_valid.any():
        raise DataError("initialization needs at least one valid position fix")
    pos = _interp_valid(fixes.t, fixes.pos, fixes.pos_valid)
    if fixes.vel_valid.any():
        vel = _interp_valid(fixes.t, fixes.vel, fixes.vel_valid)
    else:
        vel = np.zeros_like(pos)
    zeros = np.zeros(n)
    return TrajectoryEstimate(fixes.t.copy(), pos, vel, zeros, zeros.copy())
