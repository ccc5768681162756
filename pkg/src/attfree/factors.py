"""Residuals, Jacobians, and robust weighting for the fusion factors.

All factors live on scalar kinematic quantities that never reference
attitude: the magnitude of the mean specific force over a GNSS interval,
the angle swept between consecutive velocity vectors, direct GNSS
position/velocity differences, and a trapezoidal position/velocity
consistency term. Jacobian block keys are (epoch_index, field) pairs
matching the state layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geodesy import GRAVITY_ENU, GnssFix, ImuWindow

# Below this norm the direction of a vector (and hence the gradient of its
# magnitude or of an enclosed angle) is numerically meaningless; the affected
# Jacobian rows are zeroed instead of dividing by ~0.
NORM_EPS = 1e-8

# Relative cross-product norm below which two velocities count as parallel.
PARALLEL_EPS = 1e-12

ARCCOS_CLAMP = 1.0 - 1e-9


@dataclass(frozen=True)
class HuberKernel:
    """Huber loss on the whitened residual norm.

    rho(s) = s^2/2 for s <= k and k*(s - k/2) beyond; continuous with a
    continuous first derivative at the knee. The reweighting factor
    rho'(s)/s used by the optimizer is min(1, k/s).
    """

    k: float = 1.345

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise ValueError(f"Huber knee must be positive and finite, got {self.k}")

    def rho(self, s: float) -> float:
        s = abs(s)
        if s <= self.k:
            return 0.5 * s * s
        return self.k * (s - 0.5 * self.k)

    def weight(self, s: float) -> float:
        s = abs(s)
        if s <= self.k:
            return 1.0
        return self.k / s


@dataclass
class FactorEval:
    """One factor evaluated at a state: residual, Jacobian blocks, weight.

    ``information`` is the unrobustified inverse-covariance weight. The
    robust kernel, when present, acts on the whitened norm; ``cost`` and
    ``weight`` fold it in.
    """

    residual: np.ndarray
    jacobian_blocks: dict[tuple[int, str], np.ndarray]
    information: np.ndarray
    kernel: Optional[HuberKernel] = None

    def whitened_norm(self) -> float:
        r = self.residual
        return float(math.sqrt(r @ self.information @ r))

    def weight(self) -> float:
        """IRLS scaling applied to the information in the normal equations."""
        if self.kernel is None:
            return 1.0
        return self.kernel.weight(self.whitened_norm())

    def cost(self) -> float:
        """Contribution to the objective; equals the whitened squared norm
        in the quadratic zone of the kernel."""
        s = self.whitened_norm()
        if self.kernel is None:
            return s * s
        return 2.0 * self.kernel.rho(s)


def _scalar_eval(residual, blocks, sigma, kernel=None) -> FactorEval:
    info = np.array([[1.0 / (sigma * sigma)]])
    return FactorEval(np.array([residual]), blocks, info, kernel)


def accel_factor(
    v_i,
    v_ip1,
    b_acc_i: float,
    window: ImuWindow,
    dt_gnss: float,
    sigma: float = 1.0,
    gravity=GRAVITY_ENU,
    i: int = 0,
) -> FactorEval:
    """Specific-force magnitude consistency over one GNSS interval.

    residual = ||(v_{i+1} - v_i)/dt - g|| - ||sum_accel|| / n + b_acc
    """
    if window.n_samples < 1:
        raise ValueError("accel factor needs IMU coverage in the window")
    v_i = np.asarray(v_i, dtype=float)
    v_ip1 = np.asarray(v_ip1, dtype=float)
    u = (v_ip1 - v_i) / dt_gnss - np.asarray(gravity, dtype=float)
    nu = float(np.linalg.norm(u))
    measured = float(np.linalg.norm(window.sum_accel)) / window.n_samples
    r = nu - measured + b_acc_i
    if nu > NORM_EPS:
        d_vip1 = (u / nu).reshape(1, 3) / dt_gnss
    else:
        d_vip1 = np.zeros((1, 3))  # direction undefined; magnitude gradient vanishes
    blocks = {
        (i, "v"): -d_vip1,
        (i + 1, "v"): d_vip1,
        (i, "b_acc"): np.array([[1.0]]),
    }
    return _scalar_eval(r, blocks, sigma)


def velocity_angle(v_i, v_ip1, mode: str = "atan2"):
    """Angle between two velocities plus its gradients.

    Returns (theta, dtheta_dvi, dtheta_dvip1). Gradients are zero when
    either speed is below NORM_EPS or, in atan2 mode, when the vectors are
    numerically parallel; in arccos mode they are zero wherever the cosine
    clamp is active.
    """
    a = np.asarray(v_i, dtype=float)
    b = np.asarray(v_ip1, dtype=float)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    zero = np.zeros(3)
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0, zero, zero.copy()
    c = float(a @ b)
    if mode == "atan2":
        n = np.cross(a, b)
        s = float(np.linalg.norm(n))
        theta = math.atan2(s, c)
        if s <= PARALLEL_EPS * na * nb:
            return theta, zero, zero.copy()
        n_hat = n / s
        denom = s * s + c * c  # = |a|^2 |b|^2
        d_a = (c * np.cross(b, n_hat) - s * b) / denom
        d_b = (c * np.cross(n_hat, a) - s * a) / denom
        return theta, d_a, d_b
    if mode == "arccos":
        u = c / (na * nb)
        if u > ARCCOS_CLAMP or u < -ARCCOS_CLAMP:
            return math.acos(max(-ARCCOS_CLAMP, min(ARCCOS_CLAMP, u))), zero, zero.copy()
        theta = math.acos(u)
        scale = -1.0 / math.sqrt(1.0 - u * u)
        d_a = scale * (b / (na * nb) - c * a / (na**3 * nb))
        d_b = scale * (a / (na * nb) - c * b / (nb**3 * na))
        return theta, d_a, d_b
    raise ValueError(f"unknown angle mode {mode!r}")


def gyro_factor(
    v_i,
    v_ip1,
    b_gyro_i: float,
    window: ImuWindow,
    sigma: float = 1.0,
    angle_mode: str = "atan2",
    i: int = 0,
) -> FactorEval:
    """Swept-angle consistency over one GNSS interval.

    residual = angle(v_i, v_{i+1}) - ||sum_gyro_dt|| + b_gyro

    Callers gate this factor on GNSS speed; the in-factor degenerate guard
    (speed below NORM_EPS) only protects mid-optimization excursions, where
    the factor contributes zero residual and zero Jacobian.
    """
    if window.n_samples < 1:
        raise ValueError("gyro factor needs IMU coverage in the window")
    a = np.asarray(v_i, dtype=float)
    b = np.asarray(v_ip1, dtype=float)
    measured = float(np.linalg.norm(window.sum_gyro_dt))
    degenerate = np.linalg.norm(a) < NORM_EPS or np.linalg.norm(b) < NORM_EPS
    if degenerate:
        r, d_a, d_b = 0.0, np.zeros(3), np.zeros(3)
    else:
        theta, d_a, d_b = velocity_angle(a, b, angle_mode)
        r = theta - measured + b_gyro_i
    blocks = {
        (i, "v"): d_a.reshape(1, 3),
        (i + 1, "v"): d_b.reshape(1, 3),
        (i, "b_gyro"): np.array([[0.0 if degenerate else 1.0]]),
    }
    return _scalar_eval(r, blocks, sigma)


def gnss_pos_factor(x_i, fix: GnssFix, kernel: Optional[HuberKernel] = HuberKernel(), i: int = 0) -> FactorEval:
    """Direct position residual against one GNSS fix, robustified."""
    if not fix.pos_valid:
        raise ValueError("position factor requires a valid position fix")
    e = np.asarray(x_i, dtype=float) - fix.pos.as_array()
    info = np.diag(1.0 / fix.pos_std**2)
    return FactorEval(e, {(i, "x"): np.eye(3)}, info, kernel)


def gnss_vel_factor(v_i, fix: GnssFix, kernel: Optional[HuberKernel] = HuberKernel(), i: int = 0) -> FactorEval:
    """Direct velocity residual against one GNSS fix, robustified."""
    if not fix.vel_valid:
        raise ValueError("velocity factor requires a valid velocity fix")
    e = np.asarray(v_i, dtype=float) - fix.vel.as_array()
    info = np.diag(1.0 / fix.vel_std**2)
    return FactorEval(e, {(i, "v"): np.eye(3)}, info, kernel)


def motion_factor(x_i, x_ip1, v_i, v_ip1, dt_gnss: float, sigma: float = 0.05, i: int = 0) -> FactorEval:
    """Trapezoidal position/velocity consistency across one interval.

    residual = (x_{i+1} - x_i)/dt - (v_{i+1} + v_i)/2, no robust kernel.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_ip1 = np.asarray(x_ip1, dtype=float)
    v_i = np.asarray(v_i, dtype=float)
    v_ip1 = np.asarray(v_ip1, dtype=float)
    e = (x_ip1 - x_i) / dt_gnss - 0.5 * (v_ip1 + v_i)
    eye = np.eye(3)
    blocks = {
        (i, "x"): -eye / dt_gnss,
        (i + 1, "x"): eye / dt_gnss,
        (i, "v"): -0.5 * eye,
        (i + 1, "v"): -0.5 * eye,
    }
    return FactorEval(e, blocks, np.diag([1.0 / sigma**2] * 3), None)


def bias_factor(b_i: float, b_ip1: float, sigma_rw: float, which: str = "b_acc", i: int = 0) -> FactorEval:
    """Random-walk link between consecutive scalar biases: b_{i+1} - b_i."""
    if which not in ("b_acc", "b_gyro"):
        raise ValueError(f"which must be 'b_acc' or 'b_gyro', got {which!r}")
    blocks = {
        (i, which): np.array([[-1.0]]),
        (i + 1, which): np.array([[1.0]]),
    }
    return _scalar_eval(b_ip1 - b_i, blocks, sigma_rw)


def prior_factor(value: float, mean: float, sigma: float, field_name: str, component: int = 0, i: int = 0) -> FactorEval:
    """Weak prior pinning one scalar state component."""
    size = {"x": 3, "v": 3, "b_acc": 1, "b_gyro": 1}[field_name]
    row = np.zeros((1, size))
    row[0, component] = 1.0
    return _scalar_eval(value - mean, {(i, field_name): row}, sigma)
