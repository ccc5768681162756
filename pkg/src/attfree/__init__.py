"""Attitude-free GNSS/IMU trajectory fusion on a sparse factor graph.

Velocity differences and IMU window sums are compared through two scalar,
rotation-invariant quantities (specific-force magnitude and swept angle),
so the estimator never carries an attitude state: each epoch holds
position, velocity, and two scalar bias terms.
"""

from .errors import AttfreeError, DataError, NumericalError
from .geodesy import (
    GRAVITY_ENU,
    EnuVector,
    GnssData,
    GnssFix,
    GravityModel,
    ImuData,
    ImuSample,
    ImuWindow,
    ecef_to_enu,
    enu_to_ecef,
    integrate_imu_window,
    llh_to_ecef,
)
from .state import EpochState, StateLayout, TrajectoryEstimate, initialize, layout
from .factors import (
    FactorEval,
    HuberKernel,
    accel_factor,
    bias_factor,
    gnss_pos_factor,
    gnss_vel_factor,
    gyro_factor,
    motion_factor,
    velocity_angle,
)
from .graph import FactorGraph, FusionConfig, GraphStats, build
from .optimizer import LmConfig, SolveReport, linearize_and_solve_normal_equations, solve
from .simulator import (
    FaultSchedule,
    GroundTruth,
    MountConfig,
    ScenarioConfig,
    SensorModel,
    TrajectoryParams,
    generate_trajectory,
    simulate_scenario,
    synthesize_gnss,
    synthesize_imu,
)
from .evaluation import (
    ErrorReport,
    FaultExperimentReport,
    SweepPoint,
    compute_errors,
    fuse_data,
    run_fault_experiment,
    run_lever_arm_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AttfreeError", "DataError", "NumericalError",
    "GRAVITY_ENU", "EnuVector", "GnssData", "GnssFix", "GravityModel",
    "ImuData", "ImuSample", "ImuWindow",
    "ecef_to_enu", "enu_to_ecef", "integrate_imu_window", "llh_to_ecef",
    "EpochState", "StateLayout", "TrajectoryEstimate", "initialize", "layout",
    "FactorEval", "HuberKernel", "accel_factor", "bias_factor",
    "gnss_pos_factor", "gnss_vel_factor", "gyro_factor", "motion_factor",
    "velocity_angle",
    "FactorGraph", "FusionConfig", "GraphStats", "build",
    "LmConfig", "SolveReport", "linearize_and_solve_normal_equations", "solve",
    "FaultSchedule", "GroundTruth", "MountConfig", "ScenarioConfig",
    "SensorModel", "TrajectoryParams", "generate_trajectory",
    "simulate_scenario", "synthesize_gnss", "synthesize_imu",
    "ErrorReport", "FaultExperimentReport", "SweepPoint", "compute_errors",
    "fuse_data", "run_fault_experiment", "run_lever_arm_sweep",
    "__version__",
]
