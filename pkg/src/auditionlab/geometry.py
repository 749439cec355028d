"""Unit-quaternion helpers for rigid-body orientation.

Quaternions are float arrays ``[w, x, y, z]`` (scalar first). Composition
follows the Hamilton convention with ``rotation(q1 * q2) = R(q1) @ R(q2)``,
so right-multiplying applies the increment in the body frame.
"""

import numpy as np


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalize zero or non-finite quaternion")
    return q / n


def quat_from_axis_angle(axis_angle: np.ndarray) -> np.ndarray:
    """Exponential map from a rotation vector (axis * angle, radians)."""
    aa = np.asarray(axis_angle, dtype=float)
    angle = float(np.linalg.norm(aa))
    if angle < 1e-12:
        # First-order series keeps tiny rotations exact enough and avoids 0/0.
        q = np.array([1.0, 0.5 * aa[0], 0.5 * aa[1], 0.5 * aa[2]])
        return quat_normalize(q)
    axis = aa / angle
    half = 0.5 * angle
    s = np.sin(half)
    return np.array([np.cos(half), s * axis[0], s * axis[1], s * axis[2]])


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2 (apply q2 first, then q1)."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector `v` from body frame into world frame by unit quaternion `q`."""
    v = np.asarray(v, dtype=float)
    u = q[1:]
    w = q[0]
    # v' = v + 2 u x (u x v + w v), cheaper than building the matrix
    t = np.cross(u, v) + w * v
    return v + 2.0 * np.cross(u, t)
