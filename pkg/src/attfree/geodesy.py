"""Measurement containers, ENU frame conversions, and IMU window sums."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DataError

# WGS-84 constants
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

STANDARD_GRAVITY = 9.80665


def _as_vec3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have exactly 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class EnuVector:
    """A 3-vector in the local east/north/up frame."""

    e: float
    n: float
    u: float

    def __post_init__(self):
        for axis in (self.e, self.n, self.u):
            if not math.isfinite(axis):
                raise ValueError(f"EnuVector components must be finite, got {self}")

    @classmethod
    def from_array(cls, arr) -> "EnuVector":
        e, n, u = np.asarray(arr, dtype=float).reshape(3)
        return cls(float(e), float(n), float(u))

    def as_array(self) -> np.ndarray:
        return np.array([self.e, self.n, self.u])

    def __array__(self, dtype=None, copy=None):
        return np.array([self.e, self.n, self.u], dtype=dtype)

    def norm(self) -> float:
        return math.sqrt(self.e**2 + self.n**2 + self.u**2)


@dataclass(frozen=True)
class GravityModel:
    """Constant local gravity, pointing down in ENU."""

    magnitude: float = STANDARD_GRAVITY

    def __post_init__(self):
        if not (math.isfinite(self.magnitude) and self.magnitude > 0):
            raise ValueError(f"gravity magnitude must be positive, got {self.magnitude}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.magnitude])


GRAVITY_ENU = GravityModel().vector


@dataclass(frozen=True)
class ImuSample:
    """One inertial sample: specific force (m/s^2) and angular rate (rad/s)."""

    t: float
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError("ImuSample timestamp must be finite")
        object.__setattr__(self, "accel", _as_vec3(self.accel, "accel"))
        object.__setattr__(self, "gyro", _as_vec3(self.gyro, "gyro"))


class ImuData:
    """Time-ordered inertial stream backed by contiguous arrays."""

    def __init__(self, t, accel, gyro):
        self.t = np.ascontiguousarray(t, dtype=float)
        self.accel = np.ascontiguousarray(accel, dtype=float)
        self.gyro = np.ascontiguousarray(gyro, dtype=float)
        n = self.t.shape[0]
        if self.accel.shape != (n, 3) or self.gyro.shape != (n, 3):
            raise ValueError("accel and gyro must be (n, 3) arrays matching t")
        if n and not np.all(np.diff(self.t) > 0):
            raise DataError("IMU timestamps must be strictly increasing")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.accel)) and np.all(np.isfinite(self.gyro))):
            raise DataError("IMU stream contains non-finite values")

    @classmethod
    def from_samples(cls, samples: Iterable[ImuSample]) -> "ImuData":
        samples = list(samples)
        return cls(
            [s.t for s in samples],
            np.array([s.accel for s in samples]).reshape(-1, 3),
            np.array([s.gyro for s in samples]).reshape(-1, 3),
        )

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.accel[i].copy(), self.gyro[i].copy())


@dataclass(frozen=True)
class GnssFix:
    """One GNSS epoch: ENU position/velocity with per-axis sigmas and validity."""

    t: float
    pos: EnuVector
    vel: EnuVector
    pos_std: np.ndarray
    vel_std: np.ndarray
    pos_valid: bool = True
    vel_valid: bool = True

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError("GnssFix timestamp must be finite")
        object.__setattr__(self, "pos_std", _as_vec3(self.pos_std, "pos_std"))
        object.__setattr__(self, "vel_std", _as_vec3(self.vel_std, "vel_std"))
        if self.pos_valid and not np.all(self.pos_std > 0):
            raise ValueError("valid position fixes need positive pos_std")
        if self.vel_valid and not np.all(self.vel_std > 0):
            raise ValueError("valid velocity fixes need positive vel_std")


class GnssData:
    """Time-ordered GNSS epochs backed by contiguous arrays.

    Rows during receiver outages stay in the stream with the validity flags
    cleared, so the epoch grid is preserved.
    """

    def __init__(self, t, pos, vel, pos_std, vel_std, pos_valid=None, vel_valid=None):
        self.t = np.ascontiguousarray(t, dtype=float)
        n = self.t.shape[0]
        self.pos = np.ascontiguousarray(pos, dtype=float)
        self.vel = np.ascontiguousarray(vel, dtype=float)
        self.pos_std = np.ascontiguousarray(pos_std, dtype=float)
        self.vel_std = np.ascontiguousarray(vel_std, dtype=float)
        self.pos_valid = (
            np.ones(n, dtype=bool) if pos_valid is None else np.ascontiguousarray(pos_valid, dtype=bool)
        )
        self.vel_valid = (
            np.ones(n, dtype=bool) if vel_valid is None else np.ascontiguousarray(vel_valid, dtype=bool)
        )
        for name in ("pos", "vel", "pos_std", "vel_std"):
            if getattr(self, name).shape != (n, 3):
                raise ValueError(f"{name} must be an (n, 3) array matching t")
        if self.pos_valid.shape != (n,) or self.vel_valid.shape != (n,):
            raise ValueError("validity flags must be (n,) arrays")
        if n and not np.all(np.diff(self.t) > 0):
            raise DataError("GNSS timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.t)):
            raise DataError("GNSS timestamps contain non-finite values")
        for name in ("pos", "vel"):
            valid = getattr(self, f"{name}_valid")
            if not np.all(np.isfinite(getattr(self, name)[valid])):
                raise DataError(f"GNSS stream contains non-finite {name} values on valid rows")

    @classmethod
    def from_fixes(cls, fixes: Iterable[GnssFix]) -> "GnssData":
        fixes = list(fixes)
        return cls(
            [f.t for f in fixes],
            np.array([f.pos.as_array() for f in fixes]).reshape(-1, 3),
            np.array([f.vel.as_array() for f in fixes]).reshape(-1, 3),
            np.array([f.pos_std for f in fixes]).reshape(-1, 3),
            np.array([f.vel_std for f in fixes]).reshape(-1, 3),
            [f.pos_valid for f in fixes],
            [f.vel_valid for f in fixes],
        )

    def __len__(self) -> int:
        return self.t.shape[0]

    def __getitem__(self, i: int) -> GnssFix:
        return GnssFix(
            float(self.t[i]),
            EnuVector.from_array(self.pos[i]),
            EnuVector.from_array(self.vel[i]),
            self.pos_std[i].copy(),
            self.vel_std[i].copy(),
            bool(self.pos_valid[i]),
            bool(self.vel_valid[i]),
        )


def _check_origin(origin_llh) -> tuple[float, float, float]:
    lat, lon, h = (float(v) for v in origin_llh)
    if not all(math.isfinite(v) for v in (lat, lon, h)):
        raise ValueError("origin must be finite (lat_deg, lon_deg, height_m)")
    if abs(lat) > 90.0:
        raise ValueError(f"origin latitude out of range: {lat}")
    return lat, lon, h


def llh_to_ecef(lat_deg: float, lon_deg: float, height_m: float) -> np.ndarray:
    """Geodetic coordinates (degrees, meters) to an ECEF position."""
    lat, lon, h = _check_origin((lat_deg, lon_deg, height_m))
    phi = math.radians(lat)
    lam = math.radians(lon)
    sin_phi, cos_phi = math.sin(phi), math.cos(phi)
    n_rad = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_phi**2)
    return np.array(
        [
            (n_rad + h) * cos_phi * math.cos(lam),
            (n_rad + h) * cos_phi * math.sin(lam),
            (n_rad * (1.0 - WGS84_E2) + h) * sin_phi,
        ]
    )


def _enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rows are the east/north/up axes expressed in ECEF."""
    phi = math.radians(lat_deg)
    lam = math.radians(lon_deg)
    sp, cp = math.sin(phi), math.cos(phi)
    sl, cl = math.sin(lam), math.cos(lam)
    return np.array(
        [
            [-sl, cl, 0.0],
            [-sp * cl, -sp * sl, cp],
            [cp * cl, cp * sl, sp],
        ]
    )


def ecef_to_enu(p_ecef, origin_llh) -> EnuVector:
    """ECEF position to ENU relative to a geodetic origin."""
    lat, lon, h = _check_origin(origin_llh)
    p = _as_vec3(p_ecef, "p_ecef")
    rot = _enu_rotation(lat, lon)
    return EnuVector.from_array(rot @ (p - llh_to_ecef(lat, lon, h)))


def enu_to_ecef(enu, origin_llh) -> np.ndarray:
    """ENU offset from a geodetic origin back to an ECEF position."""
    lat, lon, h = _check_origin(origin_llh)
    v = _as_vec3(enu, "enu")
    rot = _enu_rotation(lat, lon)
    return llh_to_ecef(lat, lon, h) + rot.T @ v


class ImuWindow(NamedTuple):
    """Raw sums of IMU samples over one GNSS interval."""

    sum_accel: np.ndarray  # sum of specific-force samples, m/s^2
    sum_gyro_dt: np.ndarray  # sum of rate samples times the sample period, rad
    n_samples: int


def integrate_imu_window(imu: ImuData, t1: float, t2: float) -> ImuWindow:
    """Sum IMU samples with timestamps in the half-open window (t1, t2].

    The per-sample period is taken as (t2 - t1) / n so that back-to-back
    windows partition the stream exactly. An empty window comes back with
    n_samples == 0, which tells the caller there is no IMU coverage.
    """
    if not (t1 < t2):
        raise ValueError(f"window must satisfy t1 < t2, got ({t1}, {t2})")
    lo = np.searchsorted(imu.t, t1, side="right")
    hi = np.searchsorted(imu.t, t2, side="right")
    n = int(hi - lo)
    if n == 0:
        return ImuWindow(np.zeros(3), np.zeros(3), 0)
    dt_imu = (t2 - t1) / n
    sum_accel = imu.accel[lo:hi].sum(axis=0)
    sum_gyro_dt = imu.gyro[lo:hi].sum(axis=0) * dt_imu
    return ImuWindow(sum_accel, sum_gyro_dt, n)
