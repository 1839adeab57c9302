"""Quaternion and Euler-angle helpers (numpy, vectorized over leading axes).

Quaternions are ``(w, x, y, z)``. Euler triples follow BVH: angles are in
degrees and listed in channel order, composed intrinsically, so order
``"ZXY"`` means ``R = Rz(a0) @ Rx(a1) @ Ry(a2)``.
"""
from __future__ import annotations

import numpy as np

AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}
GIMBAL_TOLERANCE_DEG = 0.5


def _check_order(order: str) -> str:
    order = "".join(order).upper()
    if sorted(order) != ["X", "Y", "Z"]:
        raise ValueError(f"rotation order must be a permutation of XYZ, got {order!r}")
    return order


def identity(shape=()) -> np.ndarray:
    q = np.zeros(tuple(shape) + (4,))
    q[..., 0] = 1.0
    return q


def quat_mul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def quat_conj(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_canonical(q):
    """Flip sign so that ``w >= 0``."""
    q = np.asarray(q, dtype=np.float64)
    return np.where(q[..., :1] < 0, -q, q)


def quat_rotate(q, v):
    """Rotate vectors ``v`` by (unit) quaternions ``q``: ``q v q*``."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1)
    return m.reshape(q.shape[:-1] + (3, 3))


def axis_quat(axis: str, angle_rad):
    angle_rad = np.asarray(angle_rad, dtype=np.float64)
    q = np.zeros(angle_rad.shape + (4,))
    q[..., 0] = np.cos(angle_rad / 2)
    q[..., 1 + AXIS_INDEX[axis]] = np.sin(angle_rad / 2)
    return q


def euler_to_quaternion(angles_deg, order: str):
    """Convert Euler triples (degrees, channel order) to unit quaternions."""
    order = _check_order(order)
    angles = np.radians(np.asarray(angles_deg, dtype=np.float64))
    q = axis_quat(order[0], angles[..., 0])
    q = quat_mul(q, axis_quat(order[1], angles[..., 1]))
    q = quat_mul(q, axis_quat(order[2], angles[..., 2]))
    return quat_normalize(q)


def quaternion_to_euler(q, order: str):
    """Inverse of :func:`euler_to_quaternion`.

    Returns ``(angles_deg, gimbal)``. Where the middle angle is within
    0.5 degrees of +-90, the third angle is set to 0 and ``gimbal`` is True
    for that entry.
    """
    order = _check_order(order)
    i, j, k = (AXIS_INDEX[a] for a in order)
    # +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise
    s = 1.0 if (j - i) % 3 == 1 else -1.0
    m = quat_to_matrix(quat_normalize(q))

    sin_b = np.clip(s * m[..., i, k], -1.0, 1.0)
    b = np.arcsin(sin_b)
    a = np.arctan2(-s * m[..., j, k], m[..., k, k])
    c = np.arctan2(-s * m[..., i, j], m[..., i, i])

    gimbal = np.abs(np.abs(np.degrees(b)) - 90.0) <= GIMBAL_TOLERANCE_DEG
    if np.any(gimbal):
        # with c = 0, R_i(a) = R @ R_j(b)^T; read a off that matrix
        rj = quat_to_matrix(axis_quat(order[1], b))
        mi = m @ np.swapaxes(rj, -1, -2)
        a_lock = np.arctan2(s * mi[..., k, j], mi[..., j, j])
        a = np.where(gimbal, a_lock, a)
        c = np.where(gimbal, 0.0, c)

    angles = np.degrees(np.stack([a, b, c], axis=-1))
    return angles, gimbal


def angle_between(q1, q2):
    """Rotation angle (radians) taking ``q1`` to ``q2``, sign-insensitive."""
    d = np.abs(np.sum(quat_normalize(q1) * quat_normalize(q2), axis=-1))
    return 2.0 * np.arccos(np.clip(d, -1.0, 1.0))
