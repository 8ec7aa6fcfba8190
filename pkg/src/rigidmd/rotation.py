"""Quaternion helpers. Quaternions are stored scalar-first, (w, x, y, z)."""

import numpy as np


def quat_to_matrix(q):
    """Rotation matrices (..., 3, 3) mapping body-frame vectors to the lab frame."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[..., 0, 1] = 2.0 * (x * y - w * z)
    m[..., 0, 2] = 2.0 * (x * z + w * y)
    m[..., 1, 0] = 2.0 * (x * y + w * z)
    m[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[..., 1, 2] = 2.0 * (y * z - w * x)
    m[..., 2, 0] = 2.0 * (x * z - w * y)
    m[..., 2, 1] = 2.0 * (y * z + w * x)
    m[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


def quat_multiply(a, b):
    """Hamilton product a*b, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def axis_angle_quat(axis, angle):
    """Quaternions for rotations by ``angle`` (array) about a fixed unit axis index."""
    angle = np.asarray(angle, dtype=float)
    q = np.zeros(angle.shape + (4,))
    q[..., 0] = np.cos(0.5 * angle)
    q[..., 1 + axis] = np.sin(0.5 * angle)
    return q


def random_quaternions(rng, n):
    """Uniformly distributed unit quaternions (Shoemake's method)."""
    u1, u2, u3 = rng.random((3, n))
    s1 = np.sqrt(1.0 - u1)
    s2 = np.sqrt(u1)
    q = np.column_stack(
        [
            s1 * np.sin(2.0 * np.pi * u2),
            s1 * np.cos(2.0 * np.pi * u2),
            s2 * np.sin(2.0 * np.pi * u3),
            s2 * np.cos(2.0 * np.pi * u3),
        ]
    )
    return normalize(q)


def normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)
