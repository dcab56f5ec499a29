"""Rigid-transform primitives shared by the kinematics and world modules.

Conventions:
  - rotations are 3x3 orthonormal matrices (det +1), float64
  - quaternions are (w, x, y, z), unit norm, w >= 0 when serialized
  - frames map local coordinates to parent coordinates: p_parent = R @ p_local + t
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHONORMAL_TOL = 1e-9


def quat_to_mat(q) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to a rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=float)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def mat_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            q = np.array(
                [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            q = np.array(
                [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            q = np.array(
                [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
            )
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def axis_angle_mat(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=float)
    n = np.linalg.norm(a)
    if n < 1e-12:
        raise ValueError("zero-norm rotation axis")
    a = a / n
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle vector (theta * unit_axis)."""
    R = np.asarray(R, dtype=float)
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_t)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-10:
        return 0.5 * v
    if theta > np.pi - 1e-6:
        # near pi the skew part vanishes; recover the axis from the symmetric part
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(A), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = A[:, k] / axis[k]
            axis = axis / np.linalg.norm(axis)
        if v @ axis < 0:
            axis = -axis
        return theta * axis
    return theta / (2.0 * np.sin(theta)) * v


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians."""
    return float(np.linalg.norm(so3_log(R)))


def rotation_with_z_axis(d) -> np.ndarray:
    """A rotation whose +Z column equals the unit vector d (minimal tilt
    from identity; d = -z uses a half-turn about x)."""
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    z = np.array([0.0, 0.0, 1.0])
    c = float(z @ d)
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        return axis_angle_mat([1.0, 0.0, 0.0], np.pi)
    axis = np.cross(z, d)
    axis /= np.linalg.norm(axis)
    return axis_angle_mat(axis, np.arccos(np.clip(c, -1.0, 1.0)))


def is_rotation(R: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(
        np.all(np.abs(R.T @ R - np.eye(3)) < tol) and abs(np.linalg.det(R) - 1.0) < tol
    )


@dataclass(frozen=True, eq=False)
class Frame:
    """Rigid transform (3x3 rotation + translation). Treated as an immutable value."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rot", np.asarray(self.rot, dtype=float).reshape(3, 3))
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(3))
        self.rot.setflags(write=False)
        self.pos.setflags(write=False)

    @staticmethod
    def identity() -> "Frame":
        return Frame()

    @staticmethod
    def from_quat_pos(quat, pos) -> "Frame":
        return Frame(quat_to_mat(quat), np.asarray(pos, dtype=float))

    def compose(self, other: "Frame") -> "Frame":
        return Frame(self.rot @ other.rot, self.pos + self.rot @ other.pos)

    def __matmul__(self, other: "Frame") -> "Frame":
        return self.compose(other)

    def inverse(self) -> "Frame":
        rt = self.rot.T
        return Frame(rt, -(rt @ self.pos))

    def transform_point(self, p) -> np.ndarray:
        return self.rot @ np.asarray(p, dtype=float) + self.pos

    def transform_dir(self, d) -> np.ndarray:
        return self.rot @ np.asarray(d, dtype=float)

    def quat(self) -> np.ndarray:
        return mat_to_quat(self.rot)

    def to_dict(self) -> dict:
        return {"quat": [float(v) for v in self.quat()], "pos": [float(v) for v in self.pos]}

    @staticmethod
    def from_dict(d: dict) -> "Frame":
        return Frame.from_quat_pos(d["quat"], d["pos"])

    def almost_equal(self, other: "Frame", pos_tol: float = 1e-9, rot_tol: float = 1e-9) -> bool:
        return bool(
            np.linalg.norm(self.pos - other.pos) <= pos_tol
            and rotation_angle(self.rot.T @ other.rot) <= rot_tol
        )

    def __repr__(self):
        q = self.quat()
        return f"Frame(quat={np.round(q, 6).tolist()}, pos={np.round(self.pos, 6).tolist()})"


def segment_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between segments [p0, p1] and [q0, q1]."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    u = p1 - p0
    v = q1 - q0
    w = p0 - q0
    a, b, c = u @ u, u @ v, v @ v
    d, e = u @ w, v @ w
    den = a * c - b * b
    if den > 1e-14:
        s = np.clip((b * e - c * d) / den, 0.0, 1.0)
    else:
        s = 0.0
    t = (b * s + e) / c if c > 1e-14 else 0.0
    t = np.clip(t, 0.0, 1.0)
    # re-project s once after clamping t (sufficient for convex 1D problems)
    if a > 1e-14:
        s = np.clip((b * t - d) / a, 0.0, 1.0)
    return float(np.linalg.norm(p0 + s * u - (q0 + t * v)))
