"""CSV serialization for sensor streams, ground truth, and estimates.

All files are UTF-8 with a header row; floats are written with shortest
round-trip precision so write -> read -> write is a byte-level fixpoint.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .geodesy import GnssData, ImuData
from .simulator import GroundTruth
from .state import TrajectoryEstimate

__all__ = [
    "IMU_COLUMNS",
    "GNSS_COLUMNS",
    "TRUTH_COLUMNS",
    "ESTIMATE_COLUMNS",
    "write_imu_csv",
    "read_imu_csv",
    "write_gnss_csv",
    "read_gnss_csv",
    "write_truth_csv",
    "read_truth_csv",
    "write_estimate_csv",
    "read_estimate_csv",
]

IMU_COLUMNS = ("t", "ax", "ay", "az", "wx", "wy", "wz")
GNSS_COLUMNS = ("t", "pe", "pn", "pu", "ve", "vn", "vu",
                "spe", "spn", "spu", "sve", "svn", "svu", "pos_valid", "vel_valid")
TRUTH_COLUMNS = ("t", "pe", "pn", "pu", "ve", "vn", "vu")
ESTIMATE_COLUMNS = ("t", "pe", "pn", "pu", "ve", "vn", "vu", "b_acc", "b_gyro")


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _read_rows(path, header):
    """Parse a CSV written by this module; malformed input names its line."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataError(f"{path}:1: empty file, expected header {','.join(header)}")
    got = tuple(lines[0].split(","))
    if got != tuple(header):
        raise DataError(f"{path}:1: bad header {','.join(got)!r}, expected {','.join(header)!r}")
    rows = np.empty((len(lines) - 1, len(header)))
    for k, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise DataError(f"{path}:{k}: expected {len(header)} fields, got {len(parts)}")
        try:
            rows[k - 2] = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"{path}:{k}: {exc}") from None
    return rows


def _flag_column(path, rows, col: int, name: str) -> np.ndarray:
    vals = rows[:, col]
    bad = ~np.isin(vals, (0.0, 1.0))
    if bad.any():
        k = int(np.argmax(bad))
        raise DataError(f"{path}:{k + 2}: {name} must be 0 or 1, got {vals[k]:g}")
    return vals.astype(bool)


def write_imu_csv(path, imu: ImuData) -> None:
    rows = (
        (_fmt(imu.t[k]), _fmt(imu.accel[k, 0]), _fmt(imu.accel[k, 1]), _fmt(imu.accel[k, 2]),
         _fmt(imu.gyro[k, 0]), _fmt(imu.gyro[k, 1]), _fmt(imu.gyro[k, 2]))
        for k in range(len(imu))
    )
    _write_rows(path, IMU_COLUMNS, rows)


def read_imu_csv(path) -> ImuData:
    rows = _read_rows(path, IMU_COLUMNS)
    return ImuData(rows[:, 0], rows[:, 1:4], rows[:, 4:7])


def write_gnss_csv(path, gnss: GnssData) -> None:
    rows = (
        tuple(_fmt(v) for v in (
            gnss.t[k],
            gnss.pos[k, 0], gnss.pos[k, 1], gnss.pos[k, 2],
            gnss.vel[k, 0], gnss.vel[k, 1], gnss.vel[k, 2],
            gnss.pos_std[k, 0], gnss.pos_std[k, 1], gnss.pos_std[k, 2],
            gnss.vel_std[k, 0], gnss.vel_std[k, 1], gnss.vel_std[k, 2],
        )) + (str(int(gnss.pos_valid[k])), str(int(gnss.vel_valid[k])))
        for k in range(len(gnss))
    )
    _write_rows(path, GNSS_COLUMNS, rows)


def read_gnss_csv(path) -> GnssData:
    rows = _read_rows(path, GNSS_COLUMNS)
    return GnssData(
        rows[:, 0], rows[:, 1:4], rows[:, 4:7], rows[:, 7:10], rows[:, 10:13],
        _flag_column(path, rows, 13, "pos_valid"),
        _flag_column(path, rows, 14, "vel_valid"),
    )


def write_truth_csv(path, truth: GroundTruth) -> None:
    rows = (
        tuple(_fmt(v) for v in (truth.t[k], *truth.pos[k], *truth.vel[k]))
        for k in range(truth.n_samples)
    )
    _write_rows(path, TRUTH_COLUMNS, rows)


def read_truth_csv(path) -> GroundTruth:
    """Read a truth table; attitude/rate/accel channels are not stored in the
    CSV and come back as identity/zero placeholders (evaluation needs only
    t, pos, vel)."""
    rows = _read_rows(path, TRUTH_COLUMNS)
    n = rows.shape[0]
    att = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    zeros = np.zeros((n, 3))
    return GroundTruth(rows[:, 0], rows[:, 1:4].copy(), rows[:, 4:7].copy(), att, zeros, zeros.copy())


def write_estimate_csv(path, est: TrajectoryEstimate) -> None:
    rows = (
        tuple(_fmt(v) for v in (est.t[k], *est.pos[k], *est.vel[k], est.b_acc[k], est.b_gyro[k]))
        for k in range(est.n_epochs)
    )
    _write_rows(path, ESTIMATE_COLUMNS, rows)


def read_estimate_csv(path) -> TrajectoryEstimate:
    rows = _read_rows(path, ESTIMATE_COLUMNS)
    return TrajectoryEstimate(rows[:, 0], rows[:, 1:4].copy(), rows[:, 4:7].copy(),
                              rows[:, 7].copy(), rows[:, 8].copy())
