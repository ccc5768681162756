"""Command-line pipelines: simulate, fuse, evaluate, experiment.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Set ATTFREE_LOG (DEBUG/INFO/WARNING/...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from . import evaluation, io
from .errors import DataError, NumericalError
from .graph import FusionConfig
from .optimizer import LmConfig
from .simulator import (
    TRAJECTORY_KINDS,
    FaultSchedule,
    MountConfig,
    ScenarioConfig,
    SensorModel,
    TrajectoryParams,
    simulate_scenario,
)
from ._rotations import euler_to_matrix

log = logging.getLogger("attfree.cli")

EXPERIMENTS = ("baseline", "lever_sweep", "multipath", "outage")
DEFAULT_ARMS = (0.0, 0.6, 1.0, 2.0, 3.0)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise _UsageError(message)


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise _UsageError(f"{what} expects {n} comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"{what} expects numbers, got {text!r}") from None


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--kind", choices=TRAJECTORY_KINDS, default="city_grid",
                   help="trajectory generator (default: city_grid)")
    g.add_argument("--duration", type=float, default=300.0, help="seconds (default: 300)")
    g.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    g.add_argument("--imu-rate", type=float, default=100.0, help="IMU rate, Hz (default: 100)")
    g.add_argument("--gnss-rate", type=float, default=1.0, help="GNSS rate, Hz (default: 1)")
    g.add_argument("--noiseless", action="store_true",
                   help="disable every sensor noise and bias term")
    g.add_argument("--lever-arm", default="0,0,0", metavar="X,Y,Z",
                   help="IMU lever arm in the body frame, m (default: 0,0,0)")
    g.add_argument("--mount-rpy", default="0,0,0", metavar="R,P,Y",
                   help="IMU mounting rotation as roll,pitch,yaw in radians")
    g.add_argument("--multipath", action="append", default=[], metavar="T0,T1,MAXP,MAXV",
                   help="multipath window; repeatable")
    g.add_argument("--outage", action="append", default=[], metavar="T0,T1",
                   help="GNSS outage window; repeatable")


def _scenario_from_args(args) -> ScenarioConfig:
    sensors = SensorModel(imu_rate=args.imu_rate, gnss_rate=args.gnss_rate)
    if args.noiseless:
        sensors = sensors.noiseless()
    mount = MountConfig(
        lever_arm=_floats(args.lever_arm, 3, "--lever-arm"),
        rotation=euler_to_matrix(*_floats(args.mount_rpy, 3, "--mount-rpy")),
    )
    faults = FaultSchedule(
        multipath_windows=[_floats(w, 4, "--multipath") for w in args.multipath],
        outage_windows=[_floats(w, 2, "--outage") for w in args.outage],
    )
    try:
        return ScenarioConfig(
            kind=args.kind, duration=args.duration, seed=args.seed,
            trajectory=TrajectoryParams(), sensors=sensors, mount=mount, faults=faults,
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from None


def _add_fusion_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("fusion")
    g.add_argument("--kernel", choices=("huber", "none"), default="huber",
                   help="robust kernel on GNSS factors (default: huber)")
    g.add_argument("--huber-k", type=float, default=1.345, help="kernel knee (default: 1.345)")
    g.add_argument("--angle", choices=("atan2", "arccos"), default="atan2",
                   help="velocity-angle formulation (default: atan2)")
    g.add_argument("--no-accel-factor", action="store_true", help="drop accelerometer factors")
    g.add_argument("--no-gyro-factor", action="store_true", help="drop gyroscope factors")
    g.add_argument("--max-iterations", type=int, default=100, help="LM cap (default: 100)")
    g.add_argument("--solver", choices=("block_tridiag", "dense"), default="block_tridiag",
                   help="normal-equation solver (default: block_tridiag)")
    g.add_argument("--backend", choices=("numpy", "cython"), default=None,
                   help="kernel backend (default: auto)")


def _fusion_from_args(args) -> tuple[FusionConfig, LmConfig]:
    try:
        fusion = FusionConfig(
            kernel=args.kernel, huber_k=args.huber_k, angle_mode=args.angle,
            use_accel_factors=not args.no_accel_factor,
            use_gyro_factors=not args.no_gyro_factor,
        )
        lm = LmConfig(max_iterations=args.max_iterations, solver=args.solver,
                      backend=args.backend)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    return fusion, lm


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_csv(path: str, header: tuple, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    scenario = _scenario_from_args(args)
    truth, imu, gnss = simulate_scenario(scenario)
    out = _outdir(args)
    io.write_truth_csv(os.path.join(out, "truth.csv"), truth)
    io.write_imu_csv(os.path.join(out, "imu.csv"), imu)
    io.write_gnss_csv(os.path.join(out, "gnss.csv"), gnss)
    log.info("simulated %s for %g s: %d IMU samples, %d GNSS epochs",
             scenario.kind, scenario.duration, len(imu), len(gnss))
    print(f"wrote truth.csv, imu.csv, gnss.csv to {out}")
    return 0


def _report_text(graph, report) -> str:
    s = graph.stats
    lines = [
        "fusion report",
        "=============",
        f"epochs                 : {graph.layout.n_epochs}",
        f"accel factors          : {s.accel}",
        f"gyro factors           : {s.gyro}",
        f"gyro gated out         : {s.gyro_gated_out}",
        f"motion factors         : {s.motion}",
        f"bias factors           : {s.bias_acc + s.bias_gyro}",
        f"gnss position factors  : {s.gnss_pos}",
        f"gnss velocity factors  : {s.gnss_vel}",
        f"prior factors          : {s.priors}",
        f"total factors          : {s.total_factors}",
        f"intervals without imu  : {s.intervals_without_imu}",
        f"backend                : {report.backend}",
        f"iterations             : {report.iterations}",
        f"initial cost           : {report.initial_cost:.6e}",
        f"final cost             : {report.final_cost:.6e}",
        f"termination            : {report.termination}",
        f"mean iteration time    : {report.mean_iteration_ms:.2f} ms",
        f"total solve time       : {sum(report.per_iteration_ms):.2f} ms",
    ]
    return "\n".join(lines) + "\n"


def cmd_fuse(args) -> int:
    fusion, lm = _fusion_from_args(args)
    imu = io.read_imu_csv(args.imu)
    gnss = io.read_gnss_csv(args.gnss)
    tic = time.perf_counter()
    estimate, report, graph = evaluation.fuse_data(imu, gnss, fusion, lm)
    wall = (time.perf_counter() - tic) * 1e3
    out = _outdir(args)
    io.write_estimate_csv(os.path.join(out, "estimate.csv"), estimate)
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as f:
        f.write(_report_text(graph, report))
        f.write(f"wall time              : {wall:.2f} ms\n")
    log.info("fused %d epochs in %d iterations (%s)",
             graph.layout.n_epochs, report.iterations, report.termination)
    print(f"wrote estimate.csv and report.txt to {out}")
    return 0


def cmd_evaluate(args) -> int:
    estimate = io.read_estimate_csv(args.estimate)
    truth = io.read_truth_csv(args.truth)
    fused = evaluation.compute_errors(estimate, truth)
    reports = [("proposed", fused)]
    if args.gnss is not None:
        gnss = io.read_gnss_csv(args.gnss)
        reports.append(("gnss_only", evaluation.gnss_only_errors(gnss, truth)))

    out = _outdir(args)
    _write_csv(
        os.path.join(out, "metrics.csv"),
        ("method", "rms_east", "rms_north", "rms_up", "rms_horizontal", "rms_3d", "max_3d", "epochs"),
        [(name, repr(r.rms_east), repr(r.rms_north), repr(r.rms_up),
          repr(r.rms_horizontal), repr(r.rms_3d), repr(r.max_3d), r.n_epochs)
         for name, r in reports],
    )
    n = fused.cdf_3d.shape[0]
    _write_csv(
        os.path.join(out, "cdf.csv"),
        ("error_3d", "error_horizontal", "fraction"),
        [(repr(float(fused.cdf_3d[k])), repr(float(fused.cdf_horizontal[k])), repr((k + 1) / n))
         for k in range(n)],
    )
    for name, r in reports:
        print(f"-- {name} --")
        print(r.summary())
    print(f"wrote metrics.csv and cdf.csv to {out}")
    return 0


def _experiment_baseline(args, out: str) -> None:
    fusion, lm = _fusion_from_args(args)
    rows = []
    for trial in range(args.trials):
        scenario = _scenario_from_args(args)
        scenario.seed = args.seed + trial
        truth, imu, gnss = simulate_scenario(scenario)
        estimate, report, _ = evaluation.fuse_data(imu, gnss, fusion, lm)
        fused = evaluation.compute_errors(estimate, truth, report)
        base = evaluation.gnss_only_errors(gnss, truth)
        for name, r in (("gnss_only", base), ("proposed", fused)):
            iters = report.iterations if name == "proposed" else 0
            ms = report.mean_iteration_ms if name == "proposed" else 0.0
            rows.append((scenario.seed, name, repr(r.rms_east), repr(r.rms_north),
                         repr(r.rms_up), repr(r.rms_3d), iters, f"{ms:.3f}"))
    _write_csv(os.path.join(out, "baseline_metrics.csv"),
               ("seed", "method", "rms_east", "rms_north", "rms_up", "rms_3d",
                "iterations", "mean_iteration_ms"), rows)


def _experiment_lever_sweep(args, out: str) -> None:
    fusion, lm = _fusion_from_args(args)
    arms = [float(a) for a in args.arms.split(",")] if args.arms else list(DEFAULT_ARMS)
    points = evaluation.run_lever_arm_sweep(_scenario_from_args(args), arms, fusion, lm)
    _write_csv(os.path.join(out, "lever_sweep_metrics.csv"),
               ("arm_m", "fused_rms_3d", "gnss_rms_3d", "iterations"),
               [(repr(p.arm), repr(p.fused_rms_3d), repr(p.gnss_rms_3d), p.iterations)
                for p in points])


def _experiment_faults(args, out: str, name: str) -> None:
    fusion, lm = _fusion_from_args(args)
    scenario = _scenario_from_args(args)
    if not scenario.faults.multipath_windows and not scenario.faults.outage_windows:
        third = scenario.duration / 3.0
        if name == "multipath":
            scenario.faults = FaultSchedule(multipath_windows=[(third, third + 60.0, 10.0, 1.0)])
        else:
            starts = (60.0, 150.0, 240.0) if scenario.duration >= 250 else (third,)
            scenario.faults = FaultSchedule(outage_windows=[(t0, t0 + 5.0) for t0 in starts])
    rep = evaluation.run_fault_experiment(scenario, fusion, lm)
    rows = [
        (w.kind, repr(w.t_start), repr(w.t_end), w.n_epochs, repr(w.fused_rms_3d),
         repr(w.fused_max_3d), "" if w.gnss_rms_3d is None else repr(w.gnss_rms_3d))
        for w in rep.windows
    ]
    rows.append(("overall", repr(0.0), repr(scenario.duration), rep.fused.n_epochs,
                 repr(rep.fused.rms_3d), repr(rep.fused.max_3d), repr(rep.gnss_only.rms_3d)))
    _write_csv(os.path.join(out, f"{name}_metrics.csv"),
               ("window", "t_start", "t_end", "epochs", "fused_rms_3d",
                "fused_max_3d", "gnss_rms_3d"), rows)
    print(rep.summary())


def cmd_experiment(args) -> int:
    out = _outdir(args)
    if args.name == "baseline":
        _experiment_baseline(args, out)
    elif args.name == "lever_sweep":
        _experiment_lever_sweep(args, out)
    else:
        _experiment_faults(args, out, args.name)
    print(f"wrote {args.name} metrics to {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> _Parser:
    parser = _Parser(prog="attfree",
                     description="Attitude-free GNSS/IMU fusion by factor-graph optimization.")
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("simulate", help="generate truth/imu/gnss CSV files")
    _add_scenario_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fuse", help="fuse imu.csv + gnss.csv into estimate.csv")
    p.add_argument("--imu", required=True, help="IMU CSV path")
    p.add_argument("--gnss", required=True, help="GNSS CSV path")
    p.add_argument("--out", required=True, help="output directory")
    _add_fusion_args(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="compare an estimate against ground truth")
    p.add_argument("--estimate", required=True, help="estimate CSV path")
    p.add_argument("--truth", required=True, help="truth CSV path")
    p.add_argument("--gnss", default=None, help="optional GNSS CSV for the no-fusion baseline")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a named end-to-end experiment")
    p.add_argument("--name", required=True, choices=EXPERIMENTS,
                   help=f"one of {', '.join(EXPERIMENTS)}")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trials", type=int, default=1, help="seeds to average (baseline)")
    p.add_argument("--arms", default=None, metavar="A0,A1,...",
                   help="lever-arm lengths for lever_sweep (default: 0,0.6,1,2,3)")
    _add_scenario_args(p)
    _add_fusion_args(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ATTFREE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
