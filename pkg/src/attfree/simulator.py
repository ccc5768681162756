"""Scenario simulation: closed-form trajectories plus IMU/GNSS synthesis.

Trajectories are chains of analytic segments (constant-acceleration
straights and constant-rate arcs), so position, velocity, acceleration,
and angular rate are mutually consistent to machine precision.  Sensor
streams sample those signals instantaneously; accelerations and angular
rates are taken left-continuously at segment boundaries, which makes
discrete window sums of the ideal signals telescope exactly whenever the
segment knots lie on the sample grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DataError
from .geodesy import GRAVITY_ENU, GnssData, ImuData
from ._rotations import rot_z_batch

__all__ = [
    "TrajectoryParams",
    "GroundTruth",
    "SensorModel",
    "MountConfig",
    "FaultSchedule",
    "ScenarioConfig",
    "generate_trajectory",
    "synthesize_imu",
    "synthesize_gnss",
    "simulate_scenario",
]

TRAJECTORY_KINDS = ("figure_eight", "city_grid", "stop_and_go")


# ---------------------------------------------------------------------------
# analytic segments

@dataclass(frozen=True)
class _Straight:
    """Constant-acceleration motion along a fixed heading (dwell if v0=a=0)."""

    t0: float
    dur: float
    p0: tuple[float, float]
    heading: float
    v0: float
    accel: float

    def end_state(self):
        tau = self.dur
        d = self.v0 * tau + 0.5 * self.accel * tau * tau
        c, s = math.cos(self.heading), math.sin(self.heading)
        return (
            (self.p0[0] + d * c, self.p0[1] + d * s),
            self.heading,
            self.v0 + self.accel * tau,
        )

    def sample(self, tau: np.ndarray):
        c, s = math.cos(self.heading), math.sin(self.heading)
        speed = self.v0 + self.accel * tau
        d = self.v0 * tau + 0.5 * self.accel * tau * tau
        pos = np.stack([self.p0[0] + d * c, self.p0[1] + d * s], axis=1)
        vel = np.stack([speed * c, speed * s], axis=1)
        acc = np.stack([np.full_like(tau, self.accel * c), np.full_like(tau, self.accel * s)], axis=1)
        yaw = np.full_like(tau, self.heading)
        yaw_rate = np.zeros_like(tau)
        return pos, vel, acc, yaw, yaw_rate


@dataclass(frozen=True)
class _Arc:
    """Constant-speed circular motion; angvel > 0 turns left (CCW)."""

    t0: float
    dur: float
    center: tuple[float, float]
    heading0: float
    speed: float
    angvel: float

    @classmethod
    def from_entry(cls, t0, dur, p0, heading, speed, angvel) -> "_Arc":
        # Center sits a signed radius to the left of the velocity vector.
        r = speed / angvel
        return cls(t0, dur, (p0[0] - r * math.sin(heading), p0[1] + r * math.cos(heading)),
                   heading, speed, angvel)

    def end_state(self):
        h = self.heading0 + self.angvel * self.dur
        r = self.speed / self.angvel
        return (
            (self.center[0] + r * math.sin(h), self.center[1] - r * math.cos(h)),
            h,
            self.speed,
        )

    def sample(self, tau: np.ndarray):
        h = self.heading0 + self.angvel * tau
        r = self.speed / self.angvel
        ch, sh = np.cos(h), np.sin(h)
        pos = np.stack([self.center[0] + r * sh, self.center[1] - r * ch], axis=1)
        vel = np.stack([self.speed * ch, self.speed * sh], axis=1)
        acc = np.stack([-self.speed * self.angvel * sh, self.speed * self.angvel * ch], axis=1)
        yaw_rate = np.full_like(tau, self.angvel)
        return pos, vel, acc, h, yaw_rate


# ---------------------------------------------------------------------------
# parameters and containers

@dataclass
class TrajectoryParams:
    """Knobs for the built-in trajectory generators.

    ``speed``/``radius`` drive the figure-eight; the ``cruise_*``, ``turn_*``
    and probability fields drive the randomized city grid; ``sg_*`` fields
    drive the stop-and-go profile, whose phase durations are rounded to whole
    seconds so speed-profile knots land exactly on 1 Hz epoch boundaries.
    """

    speed: float = 10.0
    radius: float = 50.0

    cruise_speed: float = 15.0
    accel_limit: float = 2.2
    turn_speed: float = 5.0
    turn_radius: float = 12.0
    stop_probability: float = 0.4
    straight_through_probability: float = 0.15
    cruise_time_range: tuple[float, float] = (8.0, 25.0)
    dwell_range: tuple[float, float] = (3.0, 8.0)

    sg_speed: float = 12.0
    sg_accel: float = 2.0
    sg_cruise_time: float = 20.0
    sg_dwell_time: float = 8.0

    def __post_init__(self):
        for name in ("speed", "radius", "cruise_speed", "accel_limit", "turn_speed",
                     "turn_radius", "sg_speed", "sg_accel", "sg_cruise_time", "sg_dwell_time"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("stop_probability", "straight_through_probability"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class GroundTruth:
    """Reference trajectory sampled on a uniform grid starting one step in.

    ``att_wb`` holds world-to-body rotation matrices; ``ang_rate_body`` is
    the angular rate expressed in the body frame; ``accel_world`` is the
    coordinate acceleration in ENU (gravity not included).
    """

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    att_wb: np.ndarray
    ang_rate_body: np.ndarray
    accel_world: np.ndarray

    def __post_init__(self):
        n = self.t.shape[0]
        if self.pos.shape != (n, 3) or self.vel.shape != (n, 3) or self.accel_world.shape != (n, 3):
            raise ValueError("pos, vel, accel_world must be (n, 3)")
        if self.att_wb.shape != (n, 3, 3) or self.ang_rate_body.shape != (n, 3):
            raise ValueError("att_wb must be (n, 3, 3) and ang_rate_body (n, 3)")

    @property
    def n_samples(self) -> int:
        return self.t.shape[0]

    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.vel, axis=1)


@dataclass
class SensorModel:
    """Error model for the IMU and GNSS streams.

    Noise densities are per sqrt(Hz); random walks give the per-sqrt(s)
    drift of slowly varying bias components; constant biases apply the same
    value to each axis.  Zero any field to disable that effect.
    """

    imu_rate: float = 100.0
    gnss_rate: float = 1.0
    accel_noise_density: float = 1.86e-3
    accel_random_walk: float = 4.33e-4
    accel_constant_bias: float = 0.19
    gyro_noise_density: float = 1.87e-4
    gyro_random_walk: float = 2.66e-5
    gyro_constant_bias: float = 0.0545
    gnss_pos_sigma: float = 1.0
    gnss_vel_sigma: float = 0.2

    def __post_init__(self):
        if self.imu_rate <= 0 or self.gnss_rate <= 0:
            raise ValueError("sensor rates must be positive")
        for name in ("accel_noise_density", "accel_random_walk", "gyro_noise_density",
                     "gyro_random_walk", "gnss_pos_sigma", "gnss_vel_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def noiseless(self) -> "SensorModel":
        """Copy with every stochastic term and bias zeroed (rates kept)."""
        return replace(
            self,
            accel_noise_density=0.0, accel_random_walk=0.0, accel_constant_bias=0.0,
            gyro_noise_density=0.0, gyro_random_walk=0.0, gyro_constant_bias=0.0,
            gnss_pos_sigma=0.0, gnss_vel_sigma=0.0,
        )


class MountConfig:
    """IMU mounting: lever arm from the reference point plus a fixed rotation.

    ``rotation`` maps body-frame vectors into the IMU frame.
    """

    def __init__(self, lever_arm=(0.0, 0.0, 0.0), rotation=None):
        self.lever_arm = np.asarray(lever_arm, dtype=float).reshape(3)
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        if self.rotation.shape != (3, 3):
            raise ValueError("mount rotation must be a 3x3 matrix")
        if not np.all(np.isfinite(self.lever_arm)) or not np.all(np.isfinite(self.rotation)):
            raise ValueError("mount parameters must be finite")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-9:
            raise ValueError(f"mount rotation is not orthonormal (deviation {err:.2e})")

    def __repr__(self):
        return f"MountConfig(lever_arm={self.lever_arm.tolist()})"


@dataclass
class FaultSchedule:
    """GNSS fault windows, all half-open [t0, t1).

    ``multipath_windows`` rows are (t0, t1, max_pos, max_vel): epochs inside
    get an additive bias of random direction with magnitude bounded by the
    maxima, while the reported sigmas stay at their nominal values.
    ``outage_windows`` rows are (t0, t1): epochs inside keep their row in the
    stream but have both validity flags cleared and measurements zeroed.
    """

    multipath_windows: Sequence[tuple[float, float, float, float]] = ()
    outage_windows: Sequence[tuple[float, float]] = ()

    def __post_init__(self):
        for w in self.multipath_windows:
            t0, t1, max_pos, max_vel = w
            if not (t1 > t0 and max_pos >= 0 and max_vel >= 0):
                raise ValueError(f"bad multipath window {w}")
        for w in self.outage_windows:
            if not w[1] > w[0]:
                raise ValueError(f"bad outage window {w}")

    def multipath_at(self, t: float):
        for t0, t1, max_pos, max_vel in self.multipath_windows:
            if t0 <= t < t1:
                return max_pos, max_vel
        return None

    def in_outage(self, t: float) -> bool:
        return any(t0 <= t < t1 for t0, t1 in self.outage_windows)


@dataclass
class ScenarioConfig:
    """Complete description of one simulated run."""

    kind: str = "figure_eight"
    duration: float = 300.0
    seed: int = 0
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    sensors: SensorModel = field(default_factory=SensorModel)
    mount: MountConfig = field(default_factory=MountConfig)
    faults: FaultSchedule = field(default_factory=FaultSchedule)

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}; expected one of {TRAJECTORY_KINDS}")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"duration must be positive, got {self.duration}")


# ---------------------------------------------------------------------------
# segment chain builders

def _figure_eight_segments(duration: float, p: TrajectoryParams) -> list:
    """Alternating CCW/CW loops of equal radius, crossing at the origin."""
    loop_time = 2.0 * math.pi * p.radius / p.speed
    segs = []
    t = 0.0
    pos, heading = (0.0, 0.0), 0.5 * math.pi
    left = True
    while t < duration:
        angvel = (p.speed / p.radius) if left else (-p.speed / p.radius)
        seg = _Arc.from_entry(t, loop_time, pos, heading, p.speed, angvel)
        segs.append(seg)
        pos, heading, _ = seg.end_state()
        t += loop_time
        left = not left
    return segs


def _stop_and_go_segments(duration: float, p: TrajectoryParams) -> list:
    """Straight-line accelerate/cruise/brake/dwell cycle on whole-second knots."""
    t_ramp = max(1.0, round(p.sg_speed / p.sg_accel))
    accel = p.sg_speed / t_ramp
    t_cruise = max(1.0, round(p.sg_cruise_time))
    t_dwell = max(1.0, round(p.sg_dwell_time))
    segs = []
    t = 0.0
    pos = (0.0, 0.0)
    while t < duration:
        for dur, v0, a in (
            (t_ramp, 0.0, accel),
            (t_cruise, p.sg_speed, 0.0),
            (t_ramp, p.sg_speed, -accel),
            (t_dwell, 0.0, 0.0),
        ):
            seg = _Straight(t, dur, pos, 0.0, v0, a)
            segs.append(seg)
            pos, _, _ = seg.end_state()
            t += dur
            if t >= duration:
                break
    return segs


def _city_grid_segments(duration: float, p: TrajectoryParams, rng: np.random.Generator) -> list:
    """Randomized Manhattan-style drive: blocks, stops, and 90-degree turns."""
    segs = []
    t = 0.0
    pos = (0.0, 0.0)
    heading = float(rng.integers(0, 4)) * 0.5 * math.pi
    speed = 0.0

    def push(seg):
        nonlocal t, pos, heading, speed
        segs.append(seg)
        pos, heading, speed = seg.end_state()
        t = seg.t0 + seg.dur

    while t < duration:
        cruise = p.cruise_speed * rng.uniform(0.7, 1.05)
        if speed < cruise - 1e-9:
            a = p.accel_limit * rng.uniform(0.6, 1.0)
            push(_Straight(t, (cruise - speed) / a, pos, heading, speed, a))
        push(_Straight(t, rng.uniform(*p.cruise_time_range), pos, heading, speed, 0.0))
        if t >= duration:
            break
        if rng.uniform() < p.straight_through_probability:
            continue
        if rng.uniform() < p.stop_probability:
            a = p.accel_limit * rng.uniform(0.6, 1.0)
            push(_Straight(t, speed / a, pos, heading, speed, -a))
            push(_Straight(t, rng.uniform(*p.dwell_range), pos, heading, 0.0, 0.0))
            a = p.accel_limit * rng.uniform(0.6, 1.0)
            push(_Straight(t, p.turn_speed / a, pos, heading, 0.0, a))
        elif speed > p.turn_speed:
            a = p.accel_limit * rng.uniform(0.6, 1.0)
            push(_Straight(t, (speed - p.turn_speed) / a, pos, heading, speed, -a))
        direction = 1.0 if rng.uniform() < 0.5 else -1.0
        angvel = direction * p.turn_speed / p.turn_radius
        push(_Arc.from_entry(t, 0.5 * math.pi / abs(angvel), pos, heading, p.turn_speed, angvel))
    return segs


def generate_trajectory(kind: str, duration: float, params: TrajectoryParams | None = None,
                        *, rate: float = 100.0, seed=0) -> GroundTruth:
    """Generate ground truth of the given kind on a uniform grid.

    The grid is t = 1/rate, 2/rate, ..., duration (``round(duration*rate)``
    samples).  Acceleration and angular rate are evaluated left-continuously
    at segment boundaries.  ``seed`` feeds the city-grid layout draw and may
    be an int or a ``SeedSequence``; the other kinds are deterministic.
    """
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}; expected one of {TRAJECTORY_KINDS}")
    if not (math.isfinite(duration) and duration > 0):
        raise ValueError(f"duration must be positive, got {duration}")
    if not (math.isfinite(rate) and rate > 0):
        raise ValueError(f"rate must be positive, got {rate}")
    params = params if params is not None else TrajectoryParams()

    if kind == "figure_eight":
        segs = _figure_eight_segments(duration, params)
    elif kind == "stop_and_go":
        segs = _stop_and_go_segments(duration, params)
    else:
        segs = _city_grid_segments(duration, params, np.random.default_rng(seed))

    n = int(round(duration * rate))
    t = np.arange(1, n + 1, dtype=float) / rate

    starts = np.array([s.t0 for s in segs])
    # Left-continuous assignment: a sample exactly on a boundary belongs to
    # the segment that ends there.
    idx = np.clip(np.searchsorted(starts, t, side="left") - 1, 0, len(segs) - 1)

    pos2 = np.empty((n, 2))
    vel2 = np.empty((n, 2))
    acc2 = np.empty((n, 2))
    yaw = np.empty(n)
    yaw_rate = np.empty(n)
    for j, seg in enumerate(segs):
        m = idx == j
        if not m.any():
            continue
        tau = t[m] - seg.t0
        p2, v2, a2, y, yr = seg.sample(tau)
        pos2[m], vel2[m], acc2[m], yaw[m], yaw_rate[m] = p2, v2, a2, y, yr

    zeros = np.zeros((n, 1))
    pos = np.hstack([pos2, zeros])
    vel = np.hstack([vel2, zeros])
    acc = np.hstack([acc2, zeros])
    ang_rate_body = np.hstack([zeros, zeros, yaw_rate[:, None]])
    att_wb = np.transpose(rot_z_batch(yaw), (0, 2, 1))
    return GroundTruth(t, pos, vel, att_wb, ang_rate_body, acc)


# ---------------------------------------------------------------------------
# sensor synthesis

def synthesize_imu(truth: GroundTruth, model: SensorModel, mount: MountConfig | None = None,
                   seed=0, gravity=GRAVITY_ENU) -> ImuData:
    """Sample IMU measurements from ground truth.

    Specific force at the mount is C_mount (C_wb (a_w - g) + w x (w x r)),
    angular rate is C_mount w; both then pick up a constant per-axis bias,
    a random-walk bias, and white noise scaled for the sample rate.
    """
    rng = np.random.default_rng(seed)
    mount = mount if mount is not None else MountConfig()
    g_vec = np.asarray(gravity, dtype=float).reshape(3)
    n = truth.n_samples
    dt = float(truth.t[1] - truth.t[0]) if n > 1 else 1.0 / model.imu_rate

    f_body = np.einsum("nij,nj->ni", truth.att_wb, truth.accel_world - g_vec)
    w = truth.ang_rate_body
    f_body = f_body + np.cross(w, np.cross(w, mount.lever_arm))
    f_ideal = f_body @ mount.rotation.T
    w_ideal = w @ mount.rotation.T

    accel = f_ideal + model.accel_constant_bias
    accel += np.cumsum(rng.standard_normal((n, 3)) * (model.accel_random_walk * math.sqrt(dt)), axis=0)
    accel += rng.standard_normal((n, 3)) * (model.accel_noise_density / math.sqrt(dt))
    gyro = w_ideal + model.gyro_constant_bias
    gyro += np.cumsum(rng.standard_normal((n, 3)) * (model.gyro_random_walk * math.sqrt(dt)), axis=0)
    gyro += rng.standard_normal((n, 3)) * (model.gyro_noise_density / math.sqrt(dt))
    return ImuData(truth.t, accel, gyro)


def synthesize_gnss(truth: GroundTruth, model: SensorModel, faults: FaultSchedule | None = None,
                    seed=0) -> GnssData:
    """Sample GNSS fixes from ground truth at the model's epoch rate.

    Epochs are every (imu_rate/gnss_rate)-th truth sample, i.e. t = 1/rate,
    2/rate, ... for integer rate ratios.  Multipath windows add an
    unannounced bias; outage windows keep their rows but clear validity.
    """
    rng = np.random.default_rng(seed)
    faults = faults if faults is not None else FaultSchedule()
    ratio = model.imu_rate / model.gnss_rate
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9:
        raise DataError(f"imu_rate/gnss_rate must be a positive integer, got {ratio}")
    idx = np.arange(step - 1, truth.n_samples, step)
    m = idx.shape[0]
    if m == 0:
        raise DataError("trajectory too short for even one GNSS epoch")

    t = truth.t[idx]
    pos = truth.pos[idx] + rng.standard_normal((m, 3)) * model.gnss_pos_sigma
    vel = truth.vel[idx] + rng.standard_normal((m, 3)) * model.gnss_vel_sigma
    pos_std = np.full((m, 3), model.gnss_pos_sigma)
    vel_std = np.full((m, 3), model.gnss_vel_sigma)
    pos_valid = np.ones(m, dtype=bool)
    vel_valid = np.ones(m, dtype=bool)

    for k in range(m):
        mp = faults.multipath_at(float(t[k]))
        if mp is not None:
            max_pos, max_vel = mp
            u = rng.standard_normal(3)
            u /= max(np.linalg.norm(u), 1e-12)
            pos[k] += u * rng.uniform(0.0, max_pos)
            u = rng.standard_normal(3)
            u /= max(np.linalg.norm(u), 1e-12)
            vel[k] += u * rng.uniform(0.0, max_vel)
        if faults.in_outage(float(t[k])):
            pos_valid[k] = vel_valid[k] = False
            pos[k] = vel[k] = 0.0
    return GnssData(t, pos, vel, pos_std, vel_std, pos_valid, vel_valid)


def simulate_scenario(config: ScenarioConfig):
    """Run one scenario end to end; returns (truth, imu, gnss).

    The scenario seed is split into independent child streams for the
    trajectory layout, the IMU errors, and the GNSS errors, so e.g. changing
    the mount changes nothing about the GNSS realization.
    """
    ss = np.random.SeedSequence(config.seed)
    traj_seed, imu_seed, gnss_seed = ss.spawn(3)
    truth = generate_trajectory(
        config.kind, config.duration, config.trajectory,
        rate=config.sensors.imu_rate, seed=traj_seed,
    )
    imu = synthesize_imu(truth, config.sensors, config.mount, seed=imu_seed)
    gnss = synthesize_gnss(truth, config.sensors, config.faults, seed=gnss_seed)
    return truth, imu, gnss
