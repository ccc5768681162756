"""Factor graph assembly over the GNSS epoch grid.

One state block per GNSS epoch; consecutive epochs are linked by the
specific-force magnitude factor, the swept-angle factor (gated on speed),
the trapezoidal motion factor, and two bias random-walk links. Epochs with
valid fixes get direct position/velocity factors. The first epoch carries
weak priors on both biases to fix their gauge.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import factors as fc
from .errors import DataError, NumericalError
from .geodesy import GRAVITY_ENU, GnssData, ImuData, ImuWindow, integrate_imu_window
from .state import StateLayout, TrajectoryEstimate, _interp_valid

log = logging.getLogger(__name__)


@dataclass
class FusionConfig:
    """Weights, gates, and switches for graph construction.

    The white-noise terms follow the sensor noise densities aggregated over
    each interval; the slack terms absorb what the scalar measurement model
    leaves out (vector-bias projection wander, in-window attitude change)
    and are added in quadrature. Sigmas are per-interval at dt = 1 s scale.
    """

    accel_noise_density: float = 1.86e-3  # (m/s^2)/sqrt(Hz)
    gyro_noise_density: float = 1.87e-4  # (rad/s)/sqrt(Hz)
    accel_sigma_slack: float = 0.03  # m/s^2, model slack per interval
    gyro_sigma_slack: float = 0.03  # rad, model slack per interval
    motion_sigma: float = 0.05  # m/s
    accel_bias_rw: float = 4.33e-4  # (m/s^2) per sqrt(interval)
    gyro_bias_rw: float = 2.66e-5  # rad per sqrt(interval)
    accel_bias_prior_sigma: float = 1.0  # m/s^2, gauge prior on epoch 0
    gyro_bias_prior_sigma: float = 1.0  # rad, gauge prior on epoch 0
    kernel: str = "huber"  # "huber" | "none"
    huber_k: float = 1.345  # knee on the whitened norm
    angle_mode: str = "atan2"  # "atan2" | "arccos"
    gyro_gate_speed: float = 1.0  # m/s, both interval endpoints must exceed
    gnss_sigma_floor: float = 1e-3  # keeps 1/sigma^2 finite for exact fixes
    use_accel_factors: bool = True
    use_gyro_factors: bool = True
    gravity: np.ndarray = dc_field(default_factory=lambda: GRAVITY_ENU.copy())

    def __post_init__(self):
        if self.kernel not in ("huber", "none"):
            raise ValueError(f"kernel must be 'huber' or 'none', got {self.kernel!r}")
        if self.angle_mode not in ("atan2", "arccos"):
            raise ValueError(f"angle_mode must be 'atan2' or 'arccos', got {self.angle_mode!r}")
        for name in (
            "accel_noise_density",
            "gyro_noise_density",
            "motion_sigma",
            "accel_bias_rw",
            "gyro_bias_rw",
            "accel_bias_prior_sigma",
            "gyro_bias_prior_sigma",
            "huber_k",
            "gnss_sigma_floor",
        ):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    def robust_kernel(self) -> Optional[fc.HuberKernel]:
        return fc.HuberKernel(self.huber_k) if self.kernel == "huber" else None


# --- factor descriptors -----------------------------------------------------
# Each stores the epoch/interval index plus its frozen measurement constants
# and knows how to evaluate itself against a trajectory.


@dataclass(frozen=True)
class AccelFactor:
    i: int
    window: ImuWindow
    dt: float
    sigma: float
    gravity: np.ndarray

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        return fc.accel_factor(
            traj.vel[self.i], traj.vel[self.i + 1], float(traj.b_acc[self.i]),
            self.window, self.dt, self.sigma, self.gravity, i=self.i,
        )


@dataclass(frozen=True)
class GyroFactor:
    i: int
    window: ImuWindow
    sigma: float
    angle_mode: str

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        return fc.gyro_factor(
            traj.vel[self.i], traj.vel[self.i + 1], float(traj.b_gyro[self.i]),
            self.window, self.sigma, self.angle_mode, i=self.i,
        )


@dataclass(frozen=True)
class MotionFactor:
    i: int
    dt: float
    sigma: float

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        return fc.motion_factor(
            traj.pos[self.i], traj.pos[self.i + 1], traj.vel[self.i], traj.vel[self.i + 1],
            self.dt, self.sigma, i=self.i,
        )


@dataclass(frozen=True)
class BiasFactor:
    i: int
    which: str
    sigma: float

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        series = traj.b_acc if self.which == "b_acc" else traj.b_gyro
        return fc.bias_factor(float(series[self.i]), float(series[self.i + 1]), self.sigma, self.which, i=self.i)


@dataclass(frozen=True)
class GnssPosFactor:
    i: int
    z: np.ndarray
    std: np.ndarray
    kernel: Optional[fc.HuberKernel]

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        e = traj.pos[self.i] - self.z
        info = np.diag(1.0 / self.std**2)
        return fc.FactorEval(e, {(self.i, "x"): np.eye(3)}, info, self.kernel)


@dataclass(frozen=True)
class GnssVelFactor:
    i: int
    z: np.ndarray
    std: np.ndarray
    kernel: Optional[fc.HuberKernel]

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        e = traj.vel[self.i] - self.z
        info = np.diag(1.0 / self.std**2)
        return fc.FactorEval(e, {(self.i, "v"): np.eye(3)}, info, self.kernel)


@dataclass(frozen=True)
class PriorFactor:
    i: int
    field: str
    component: int
    mean: float
    sigma: float

    def evaluate(self, traj: TrajectoryEstimate) -> fc.FactorEval:
        values = {"x": traj.pos, "v": traj.vel, "b_acc": traj.b_acc, "b_gyro": traj.b_gyro}[self.field]
        value = float(values[self.i]) if values.ndim == 1 else float(values[self.i, self.component])
        return fc.prior_factor(value, self.mean, self.sigma, self.field, self.component, i=self.i)


@dataclass
class GraphStats:
    """Factor counts by type, plus coverage diagnostics."""

    n_epochs: int = 0
    accel: int = 0
    gyro: int = 0
    motion: int = 0
    bias_acc: int = 0
    bias_gyro: int = 0
    gnss_pos: int = 0
    gnss_vel: int = 0
    priors: int = 0
    gyro_gated_out: int = 0
    intervals_without_imu: int = 0

    @property
    def total_factors(self) -> int:
        return (
            self.accel + self.gyro + self.motion + self.bias_acc + self.bias_gyro
            + self.gnss_pos + self.gnss_vel + self.priors
        )


@dataclass
class GraphArrays:
    """Flat array view of the graph for the linearization kernels."""

    n_epochs: int
    dt: np.ndarray
    gravity: np.ndarray
    angle_arccos: int
    acc_idx: np.ndarray
    acc_meas: np.ndarray
    acc_w: np.ndarray
    gyr_idx: np.ndarray
    gyr_meas: np.ndarray
    gyr_w: np.ndarray
    mot_idx: np.ndarray
    mot_w: np.ndarray
    ba_idx: np.ndarray
    ba_w: np.ndarray
    bg_idx: np.ndarray
    bg_w: np.ndarray
    pos_idx: np.ndarray
    pos_z: np.ndarray
    pos_w: np.ndarray
    pos_k: float
    vel_idx: np.ndarray
    vel_z: np.ndarray
    vel_w: np.ndarray
    vel_k: float
    pri_idx: np.ndarray
    pri_mean: np.ndarray
    pri_w: np.ndarray


class FactorGraph:
    """Factor list plus the epoch grid it is built over."""

    def __init__(self, times, factors, stats: GraphStats, fixes: Optional[GnssData] = None,
                 config: Optional[FusionConfig] = None):
        self.times = np.ascontiguousarray(times, dtype=float)
        self.factors = list(factors)
        self.stats = stats
        self.fixes = fixes
        self.config = config
        self.layout = StateLayout(self.times)
        self._packed: Optional[GraphArrays] = None

    @property
    def n_epochs(self) -> int:
        return self.times.shape[0]

    def objective(self, traj: TrajectoryEstimate) -> float:
        """Total robustified whitened squared residual, by direct summation."""
        total = 0.0
        for idx, factor in enumerate(self.factors):
            c = factor.evaluate(traj).cost()
            if not math.isfinite(c):
                raise NumericalError(f"factor {idx} ({type(factor).__name__}) produced a non-finite residual")
            total += c
        return total

    def packed(self) -> GraphArrays:
        if self._packed is None:
            self._packed = _pack(self)
        return self._packed


def _pack(graph: FactorGraph) -> GraphArrays:
    n = graph.n_epochs
    dt = np.diff(graph.times)
    acc, gyr, mot, ba, bg, pos, vel, pri = [], [], [], [], [], [], [], []
    pos_k = math.inf
    vel_k = math.inf
    angle_arccos = 0
    gravity = GRAVITY_ENU.copy()
    for f in graph.factors:
        if isinstance(f, AccelFactor):
            m = float(np.linalg.norm(f.window.sum_accel)) / f.window.n_samples
            acc.append((f.i, m, 1.0 / f.sigma**2))
            gravity = np.asarray(f.gravity, dtype=float)
        elif isinstance(f, GyroFactor):
            m = float(np.linalg.norm(f.window.sum_gyro_dt))
            gyr.append((f.i, m, 1.0 / f.sigma**2))
            angle_arccos = 1 if f.angle_mode == "arccos" else 0
        elif isinstance(f, MotionFactor):
            mot.append((f.i, 1.0 / f.sigma**2))
        elif isinstance(f, BiasFactor):
            (ba if f.which == "b_acc" else bg).append((f.i, 1.0 / f.sigma**2))
        elif isinstance(f, GnssPosFactor):
            pos.append((f.i, f.z, 1.0 / f.std**2))
            pos_k = f.kernel.k if f.kernel is not None else math.inf
        elif isinstance(f, GnssVelFactor):
            vel.append((f.i, f.z, 1.0 / f.std**2))
            vel_k = f.kernel.k if f.kernel is not None else math.inf
        elif isinstance(f, PriorFactor):
            flat = graph.layout.offset(f.i, f.field, f.component)
            pri.append((flat, f.mean, 1.0 / f.sigma**2))
        else:
            raise TypeError(f"cannot pack factor of type {type(f).__name__}")

    def _cols(rows, n_extra):
        if not rows:
            return (np.zeros(0, dtype=np.int64),) + tuple(np.zeros(0) for _ in range(n_extra))
        out = [np.array([r[0] for r in rows], dtype=np.int64)]
        for j in range(1, n_extra + 1):
            out.append(np.ascontiguousarray([r[j] for r in rows], dtype=float))
        return tuple(out)

    acc_idx, acc_meas, acc_w = _cols(acc, 2)
    gyr_idx, gyr_meas, gyr_w = _cols(gyr, 2)
    mot_idx, mot_w = _cols(mot, 1)
    ba_idx, ba_w = _cols(ba, 1)
    bg_idx, bg_w = _cols(bg, 1)
    pos_idx, pos_z, pos_w = _cols(pos, 2)
    vel_idx, vel_z, vel_w = _cols(vel, 2)
    pri_idx, pri_mean, pri_w = _cols(pri, 2)
    return GraphArrays(
        n_epochs=n, dt=np.ascontiguousarray(dt), gravity=np.ascontiguousarray(gravity),
        angle_arccos=angle_arccos,
        acc_idx=acc_idx, acc_meas=acc_meas, acc_w=acc_w,
        gyr_idx=gyr_idx, gyr_meas=gyr_meas, gyr_w=gyr_w,
        mot_idx=mot_idx, mot_w=mot_w,
        ba_idx=ba_idx, ba_w=ba_w, bg_idx=bg_idx, bg_w=bg_w,
        pos_idx=pos_idx, pos_z=pos_z.reshape(-1, 3), pos_w=pos_w.reshape(-1, 3), pos_k=pos_k,
        vel_idx=vel_idx, vel_z=vel_z.reshape(-1, 3), vel_w=vel_w.reshape(-1, 3), vel_k=vel_k,
        pri_idx=pri_idx, pri_mean=pri_mean, pri_w=pri_w,
    )


def expand_to_grid(fixes: GnssData) -> GnssData:
    """Insert invalid epochs where the nominal fix cadence has holes.

    The cadence is the median fix spacing; gaps larger than 1.5 cadences get
    placeholder epochs so the state chain stays on the nominal grid through
    outages that dropped rows entirely.
    """
    if len(fixes) < 2:
        return fixes
    spacing = float(np.median(np.diff(fixes.t)))
    gaps = np.diff(fixes.t)
    if not np.any(gaps > 1.5 * spacing):
        return fixes
    t_new = []
    for i, gap in enumerate(gaps):
        t_new.append(fixes.t[i])
        n_missing = int(round(gap / spacing)) - 1
        for j in range(1, n_missing + 1):
            t_new.append(fixes.t[i] + j * spacing)
    t_new.append(fixes.t[-1])
    t_new = np.array(t_new)
    n = t_new.shape[0]
    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    pos_std = np.ones((n, 3))
    vel_std = np.ones((n, 3))
    pos_valid = np.zeros(n, dtype=bool)
    vel_valid = np.zeros(n, dtype=bool)
    # map original rows onto the expanded grid
    j = np.searchsorted(t_new, fixes.t)
    pos[j], vel[j] = fixes.pos, fixes.vel
    pos_std[j], vel_std[j] = fixes.pos_std, fixes.vel_std
    pos_valid[j], vel_valid[j] = fixes.pos_valid, fixes.vel_valid
    return GnssData(t_new, pos, vel, pos_std, vel_std, pos_valid, vel_valid)


def gating_speeds(fixes: GnssData) -> np.ndarray:
    """Speed used by the swept-angle gate at each epoch.

    Valid GNSS velocities are used directly; epochs without one (outages)
    fall back to the same interpolated velocities the initializer produces,
    so the graph topology is fixed before optimization starts and never
    depends on the current iterate.
    """
    if fixes.vel_valid.any():
        vel = _interp_valid(fixes.t, fixes.vel, fixes.vel_valid)
    else:
        vel = np.zeros_like(fixes.vel)
    return np.linalg.norm(vel, axis=1)


def build(fixes: GnssData, imu: ImuData, config: Optional[FusionConfig] = None) -> FactorGraph:
    """Assemble the full graph for one dataset."""
    config = config or FusionConfig()
    if len(fixes) < 2:
        raise DataError(f"graph needs at least 2 GNSS epochs, got {len(fixes)}")
    if not fixes.pos_valid.any():
        raise DataError("graph needs at least one valid position fix")
    fixes = expand_to_grid(fixes)
    n = len(fixes)
    t = fixes.t
    if len(imu) and (imu.t[0] > t[-1] or imu.t[-1] <= t[0]):
        raise DataError(
            f"IMU stream ({imu.t[0]:.3f}..{imu.t[-1]:.3f} s) does not overlap "
            f"the GNSS epochs ({t[0]:.3f}..{t[-1]:.3f} s)"
        )

    speeds = gating_speeds(fixes)
    kernel = config.robust_kernel()
    factors_list = []
    stats = GraphStats(n_epochs=n)

    for i in range(n - 1):
        dt = float(t[i + 1] - t[i])
        window = integrate_imu_window(imu, t[i], t[i + 1])
        if window.n_samples == 0:
            stats.intervals_without_imu += 1
            if config.use_accel_factors or config.use_gyro_factors:
                log.warning("no IMU samples in (%.3f, %.3f]; dropping inertial factors there", t[i], t[i + 1])
        else:
            # white noise of the window-mean / window-integral, plus model slack
            rate = window.n_samples / dt
            sigma_acc = math.hypot(
                config.accel_noise_density * math.sqrt(rate) / math.sqrt(window.n_samples),
                config.accel_sigma_slack,
            )
            sigma_gyr = math.hypot(
                config.gyro_noise_density * math.sqrt(rate) / math.sqrt(window.n_samples) * dt,
                config.gyro_sigma_slack,
            )
            if config.use_accel_factors:
                factors_list.append(AccelFactor(i, window, dt, sigma_acc, config.gravity))
                stats.accel += 1
            if config.use_gyro_factors:
                if speeds[i] >= config.gyro_gate_speed and speeds[i + 1] >= config.gyro_gate_speed:
                    factors_list.append(GyroFactor(i, window, sigma_gyr, config.angle_mode))
                    stats.gyro += 1
                else:
                    stats.gyro_gated_out += 1
        factors_list.append(MotionFactor(i, dt, config.motion_sigma))
        stats.motion += 1
        factors_list.append(BiasFactor(i, "b_acc", config.accel_bias_rw * math.sqrt(dt)))
        stats.bias_acc += 1
        factors_list.append(BiasFactor(i, "b_gyro", config.gyro_bias_rw * math.sqrt(dt)))
        stats.bias_gyro += 1

    for i in range(n):
        if fixes.pos_valid[i]:
            std = np.maximum(fixes.pos_std[i], config.gnss_sigma_floor)
            factors_list.append(GnssPosFactor(i, fixes.pos[i].copy(), std, kernel))
            stats.gnss_pos += 1
        if fixes.vel_valid[i]:
            std = np.maximum(fixes.vel_std[i], config.gnss_sigma_floor)
            factors_list.append(GnssVelFactor(i, fixes.vel[i].copy(), std, kernel))
            stats.gnss_vel += 1

    factors_list.append(PriorFactor(0, "b_acc", 0, 0.0, config.accel_bias_prior_sigma))
    factors_list.append(PriorFactor(0, "b_gyro", 0, 0.0, config.gyro_bias_prior_sigma))
    stats.priors += 2

    return FactorGraph(t, factors_list, stats, fixes, config)
