"""Rigid poses, trajectories and their KITTI / TUM text formats.

KITTI pose files hold one pose per line as the 12 row-major entries of the
3x4 world-from-camera matrix. TUM files hold ``timestamp tx ty tz qx qy qz
qw`` per line. Both are written with ``%.9e`` formatting so that identical
poses always produce identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation


def hat(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    K = hat(w)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(theta) / theta * K + (1.0 - np.cos(theta)) / theta ** 2 * K @ K


def so3_log(R) -> np.ndarray:
    return Rotation.from_matrix(R).as_rotvec()


def project_to_so3(R) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform ``x_world = R x_cam + t`` (camera-to-world)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.array(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.array(self.t, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def exp(cls, xi):
        """Pose from a 6-vector ``(rho, phi)`` using a decoupled update."""
        xi = np.asarray(xi, dtype=np.float64)
        return cls(so3_exp(xi[3:]), xi[:3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> "PoseSE3":
        Rt = self.R.T
        return PoseSE3(Rt, -Rt @ self.t)

    def __matmul__(self, other):
        if isinstance(other, PoseSE3):
            return PoseSE3(self.R @ other.R, self.R @ other.t + self.t)
        pts = np.asarray(other, dtype=np.float64)
        return pts @ self.R.T + self.t

    def orthonormalized(self) -> "PoseSE3":
        return PoseSE3(project_to_so3(self.R), self.t)

    def is_valid(self, tol=1e-9) -> bool:
        return (np.abs(self.R.T @ self.R - np.eye(3)).max() < tol
                and abs(np.linalg.det(self.R) - 1.0) < tol)

    def rotation_angle(self) -> float:
        c = (np.trace(self.R) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass
class Trajectory:
    """Timestamped camera-to-world poses; timestamps strictly increasing."""

    timestamps: np.ndarray
    poses: list

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        self.poses = list(self.poses)
        if len(self.timestamps) != len(self.poses):
            raise ValueError("timestamps and poses differ in length")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        if not self.poses:
            return np.zeros((0, 3))
        return np.array([p.t for p in self.poses])

    def append(self, stamp, pose):
        if len(self.timestamps) and stamp <= self.timestamps[-1]:
            raise ValueError("timestamps must be strictly increasing")
        self.timestamps = np.append(self.timestamps, float(stamp))
        self.poses.append(pose)

    def path_length(self) -> float:
        p = self.positions
        if len(p) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


# --------------------------------------------------------------------------
# Text formats
# --------------------------------------------------------------------------

def _fmt(v):
    return "%.9e" % v


def format_kitti(traj: Trajectory) -> str:
    lines = []
    for p in traj.poses:
        M = np.hstack([p.R, p.t[:, None]])
        lines.append(" ".join(_fmt(v) for v in M.reshape(-1)))
    return "\n".join(lines) + ("\n" if lines else "")


def format_tum(traj: Trajectory) -> str:
    lines = []
    for stamp, p in zip(traj.timestamps, traj.poses):
        q = Rotation.from_matrix(p.R).as_quat()  # x, y, z, w
        if q[3] < 0:
            q = -q
        vals = [stamp, *p.t, *q]
        lines.append(" ".join(_fmt(v) for v in vals))
    return "\n".join(lines) + ("\n" if lines else "")


def write_kitti(path, traj: Trajectory) -> None:
    Path(path).write_text(format_kitti(traj))


def write_tum(path, traj: Trajectory) -> None:
    Path(path).write_text(format_tum(traj))


def _rows(path):
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append((lineno, [float(v) for v in line.replace(",", " ").split()]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from exc
    return rows


def read_kitti(path, timestamps=None) -> Trajectory:
    """Read a KITTI pose file; frame indices serve as timestamps if none given."""
    poses = []
    for lineno, vals in _rows(path):
        if len(vals) != 12:
            raise ValueError(f"{path}:{lineno}: expected 12 values, got {len(vals)}")
        M = np.array(vals).reshape(3, 4)
        poses.append(PoseSE3(M[:, :3], M[:, 3]))
    if timestamps is None:
        timestamps = np.arange(len(poses), dtype=np.float64)
    elif len(timestamps) != len(poses):
        raise ValueError(f"{path}: {len(poses)} poses but {len(timestamps)} timestamps")
    return Trajectory(timestamps, poses)


def read_tum(path) -> Trajectory:
    stamps, poses = [], []
    for lineno, vals in _rows(path):
        if len(vals) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 values, got {len(vals)}")
        stamps.append(vals[0])
        R = Rotation.from_quat(vals[4:8]).as_matrix()
        poses.append(PoseSE3(R, vals[1:4]))
    return Trajectory(stamps, poses)


def sniff_format(path) -> str:
    """Return ``"kitti"`` or ``"tum"`` from the column count of the first data row."""
    rows = _rows(path)
    if not rows:
        raise ValueError(f"{path}: no poses")
    n = len(rows[0][1])
    if n == 12:
        return "kitti"
    if n == 8:
        return "tum"
    raise ValueError(f"{path}: cannot tell the format of rows with {n} columns")


def read_trajectory(path) -> tuple:
    """Read either format; returns ``(trajectory, format_name)``."""
    fmt = sniff_format(path)
    if fmt == "kitti":
        return read_kitti(path), fmt
    return read_tum(path), fmt
