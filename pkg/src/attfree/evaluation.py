"""Error metrics and experiment drivers: RMS tables, CDFs, sweeps, faults."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DataError
from .geodesy import GnssData, ImuData
from .graph import FusionConfig, build
from .optimizer import LmConfig, SolveReport, solve
from .simulator import GroundTruth, MountConfig, ScenarioConfig, simulate_scenario
from .state import TrajectoryEstimate, initialize

__all__ = [
    "ErrorReport",
    "SweepPoint",
    "WindowStats",
    "FaultExperimentReport",
    "compute_errors",
    "gnss_only_errors",
    "fuse_data",
    "run_lever_arm_sweep",
    "run_fault_experiment",
]

ALIGN_TOL = 1e-3  # nearest-neighbor timestamp match window, seconds


@dataclass
class ErrorReport:
    """Position-error summary over the epochs shared by estimate and truth.

    ``errors`` holds signed estimate-minus-truth per-axis errors, one row per
    matched epoch; ``cdf_3d``/``cdf_horizontal`` are the sorted per-epoch
    error norms, i.e. empirical distributions.
    """

    t: np.ndarray
    errors: np.ndarray
    rms_east: float
    rms_north: float
    rms_up: float
    rms_horizontal: float
    rms_3d: float
    max_3d: float
    cdf_3d: np.ndarray
    cdf_horizontal: np.ndarray
    solve_report: Optional[SolveReport] = None

    @property
    def n_epochs(self) -> int:
        return self.t.shape[0]

    def error_3d(self) -> np.ndarray:
        """Per-epoch 3D error norms in time order (the error time series)."""
        return np.linalg.norm(self.errors, axis=1)

    def time_series(self) -> list[tuple[float, float]]:
        return list(zip(self.t.tolist(), self.error_3d().tolist()))

    def cdf_fraction(self, threshold: float) -> float:
        """Empirical P(error_3d <= threshold); right-continuous in threshold."""
        return float(np.searchsorted(self.cdf_3d, threshold, side="right")) / self.cdf_3d.shape[0]

    def summary(self) -> str:
        lines = [
            f"epochs evaluated : {self.n_epochs}",
            f"RMS east         : {self.rms_east:.4f} m",
            f"RMS north        : {self.rms_north:.4f} m",
            f"RMS up           : {self.rms_up:.4f} m",
            f"RMS horizontal   : {self.rms_horizontal:.4f} m",
            f"RMS 3D           : {self.rms_3d:.4f} m",
            f"max 3D           : {self.max_3d:.4f} m",
        ]
        return "\n".join(lines)


def _report_from_errors(t: np.ndarray, errors: np.ndarray,
                        solve_report: Optional[SolveReport] = None) -> ErrorReport:
    if errors.shape[0] == 0:
        raise DataError("no overlapping epochs between estimate and truth")
    sq = errors * errors
    mean_sq = sq.mean(axis=0)
    e3 = np.sqrt(sq.sum(axis=1))
    e2 = np.sqrt(sq[:, 0] + sq[:, 1])
    return ErrorReport(
        t=t,
        errors=errors,
        rms_east=math.sqrt(mean_sq[0]),
        rms_north=math.sqrt(mean_sq[1]),
        rms_up=math.sqrt(mean_sq[2]),
        rms_horizontal=math.sqrt(mean_sq[0] + mean_sq[1]),
        rms_3d=math.sqrt(mean_sq.sum()),
        max_3d=float(e3.max()),
        cdf_3d=np.sort(e3),
        cdf_horizontal=np.sort(e2),
        solve_report=solve_report,
    )


def _align(truth_t: np.ndarray, times: np.ndarray, tol: float = ALIGN_TOL):
    """Nearest truth index for each requested time; mask of matches within tol."""
    pos = np.searchsorted(truth_t, times)
    lo = np.clip(pos - 1, 0, truth_t.shape[0] - 1)
    hi = np.clip(pos, 0, truth_t.shape[0] - 1)
    pick_hi = np.abs(truth_t[hi] - times) < np.abs(truth_t[lo] - times)
    idx = np.where(pick_hi, hi, lo)
    ok = np.abs(truth_t[idx] - times) <= tol
    return idx, ok


def compute_errors(estimate: TrajectoryEstimate, truth: GroundTruth,
                   solve_report: Optional[SolveReport] = None) -> ErrorReport:
    """Per-axis/3D RMS and error distributions for a fused trajectory.

    Epochs are matched to truth samples by nearest timestamp within 1 ms;
    epochs without a match are dropped, and zero matches is fatal.
    """
    idx, ok = _align(truth.t, estimate.t)
    if not ok.any():
        raise DataError("no overlapping epochs between estimate and truth")
    errors = estimate.pos[ok] - truth.pos[idx[ok]]
    return _report_from_errors(estimate.t[ok], errors, solve_report)


def gnss_only_errors(gnss: GnssData, truth: GroundTruth) -> ErrorReport:
    """Error report for the raw GNSS position fixes (the no-fusion baseline).

    Invalid position rows carry no solution and are excluded.
    """
    valid = gnss.pos_valid
    if not valid.any():
        raise DataError("GNSS stream has no valid position fixes")
    t = gnss.t[valid]
    idx, ok = _align(truth.t, t)
    if not ok.any():
        raise DataError("no overlapping epochs between GNSS fixes and truth")
    errors = gnss.pos[valid][ok] - truth.pos[idx[ok]]
    return _report_from_errors(t[ok], errors)


def fuse_data(imu: ImuData, gnss: GnssData,
              config: Optional[FusionConfig] = None,
              lm: Optional[LmConfig] = None):
    """Build the graph, initialize from GNSS, and optimize.

    Returns (estimate, solve_report, graph).
    """
    graph = build(gnss, imu, config)
    initial = initialize(graph.fixes)
    estimate, report = solve(graph, initial, lm)
    return estimate, report, graph


@dataclass
class SweepPoint:
    """One lever-arm sweep entry: lateral arm length and paired RMS values."""

    arm: float
    fused_rms_3d: float
    gnss_rms_3d: float
    iterations: int


def run_lever_arm_sweep(base_scenario: ScenarioConfig, arms: Sequence[float],
                        config: Optional[FusionConfig] = None,
                        lm: Optional[LmConfig] = None) -> list[SweepPoint]:
    """Fused RMS as a function of lateral IMU offset, with paired seeds.

    Each arm re-runs the identical scenario with the lever arm applied along
    the body lateral (left) axis.  The scenario seed is reused, so GNSS data
    and every noise draw are identical across arms; only the IMU placement
    changes.
    """
    points = []
    for arm in arms:
        if arm < 0:
            raise DataError(f"lever arm must be non-negative, got {arm}")
        mount = MountConfig(lever_arm=(0.0, float(arm), 0.0),
                            rotation=base_scenario.mount.rotation)
        scenario = replace(base_scenario, mount=mount)
        truth, imu, gnss = simulate_scenario(scenario)
        estimate, report, _ = fuse_data(imu, gnss, config, lm)
        fused = compute_errors(estimate, truth, report)
        baseline = gnss_only_errors(gnss, truth)
        points.append(SweepPoint(float(arm), fused.rms_3d, baseline.rms_3d, report.iterations))
    return points


@dataclass
class WindowStats:
    """In-window error statistics for one scheduled fault."""

    kind: str
    t_start: float
    t_end: float
    n_epochs: int
    fused_rms_3d: float
    fused_max_3d: float
    gnss_rms_3d: Optional[float]  # None when the window has no valid fixes


@dataclass
class FaultExperimentReport:
    """GNSS-only versus fused errors, segmented by fault window."""

    gnss_only: ErrorReport
    fused: ErrorReport
    windows: list[WindowStats]

    def summary(self) -> str:
        lines = [
            "== GNSS-only ==",
            self.gnss_only.summary(),
            "== fused ==",
            self.fused.summary(),
        ]
        for w in self.windows:
            gnss = "no solution" if w.gnss_rms_3d is None else f"{w.gnss_rms_3d:.4f} m"
            lines.append(
                f"{w.kind} [{w.t_start:g}, {w.t_end:g}) s: fused RMS {w.fused_rms_3d:.4f} m, "
                f"fused max {w.fused_max_3d:.4f} m, GNSS-only RMS {gnss}"
            )
        return "\n".join(lines)


def _window_report(report: ErrorReport, t0: float, t1: float):
    mask = (report.t >= t0) & (report.t < t1)
    if not mask.any():
        return 0, None, None
    e3 = np.linalg.norm(report.errors[mask], axis=1)
    return int(mask.sum()), float(np.sqrt((e3 * e3).mean())), float(e3.max())


def run_fault_experiment(scenario: ScenarioConfig,
                         config: Optional[FusionConfig] = None,
                         lm: Optional[LmConfig] = None) -> FaultExperimentReport:
    """Simulate the scenario's fault schedule and compare baseline vs fused.

    Fault windows must fall inside the trajectory span.  The fused estimate
    is evaluated on all epochs (outage epochs included); the GNSS baseline
    only on valid fixes, so outage windows report ``gnss_rms_3d = None``.
    """
    for t0, t1, *_ in list(scenario.faults.multipath_windows) + list(scenario.faults.outage_windows):
        if not (0.0 <= t0 and t1 <= scenario.duration):
            raise DataError(f"fault window [{t0}, {t1}) outside trajectory span")
    truth, imu, gnss = simulate_scenario(scenario)
    estimate, report, _ = fuse_data(imu, gnss, config, lm)
    fused = compute_errors(estimate, truth, report)
    baseline = gnss_only_errors(gnss, truth)

    windows = []
    for t0, t1, _mp, _mv in scenario.faults.multipath_windows:
        n, rms, mx = _window_report(fused, t0, t1)
        _, gnss_rms, _ = _window_report(baseline, t0, t1)
        windows.append(WindowStats("multipath", t0, t1, n, rms or 0.0, mx or 0.0, gnss_rms))
    for t0, t1 in scenario.faults.outage_windows:
        n, rms, mx = _window_report(fused, t0, t1)
        _, gnss_rms, _ = _window_report(baseline, t0, t1)
        windows.append(WindowStats("outage", t0, t1, n, rms or 0.0, mx or 0.0, gnss_rms))
    return FaultExperimentReport(baseline, fused, windows)
