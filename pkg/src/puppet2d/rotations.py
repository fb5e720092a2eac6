"""Quaternion / rotation-vector / matrix utilities, batched over leading axes.

Quaternions are wxyz and unit-norm. Rotation matrices map child-frame
vectors into the parent frame (columns are child axes in parent coords).
"""

import numpy as np

_EPS = 1e-12


def quat_normalize(q):
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_mul(a, b):
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


def quat_conjugate(q):
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_from_rotvec(v):
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    small = angle[..., 0] < 1e-8
    k = np.where(small[..., None], 0.5 - angle**2 / 48.0, np.sin(half) / np.maximum(angle, _EPS))
    w = np.cos(half)[..., 0]
    return np.concatenate([w[..., None], k * v], axis=-1)


def quat_to_rotvec(q):
    q = np.where(q[..., :1] < 0, -q, q)  # shortest arc
    sin_half = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(sin_half, q[..., :1])
    small = sin_half[..., 0] < 1e-8
    scale = np.where(small[..., None], 2.0 / np.maximum(q[..., :1], 0.5), angle / np.maximum(sin_half, _EPS))
    return scale * q[..., 1:]


def quat_to_mat(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def rotvec_to_mat(v):
    return quat_to_mat(quat_from_rotvec(v))


def mat_to_quat(m):
    """Shepperd's method, branch on the largest diagonal term (batched)."""
    m = np.asarray(m)
    batch = m.shape[:-2]
    m_flat = m.reshape(-1, 3, 3)
    out = np.empty((m_flat.shape[0], 4))
    for i, r in enumerate(m_flat):
        tr = np.trace(r)
        if tr > 0:
            s = np.sqrt(tr + 1.0) * 2
            q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif r[1, 1] >= r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
            q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
            q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        out[i] = q
    return quat_normalize(out.reshape(batch + (4,)))


def mat_to_rotvec(m):
    return quat_to_rotvec(mat_to_quat(m))


def quat_rotate(q, v):
    """Rotate 3-vectors by quaternions (child -> parent frame)."""
    qv = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_rotate_inv(q, v):
    return quat_rotate(quat_conjugate(q), v)


def compose_rotvec_local(q_rv, omega_dt):
    """Apply a local (child-frame) incremental rotation to a rotation vector."""
    q = quat_mul(quat_from_rotvec(q_rv), quat_from_rotvec(omega_dt))
    return quat_to_rotvec(q)


def skew(v):
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    zero = np.zeros_like(x)
    return np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )


def yaw_of_quat(q):
    """Heading angle about world z from the body x-axis direction."""
    fwd = quat_rotate(q, np.broadcast_to(np.array([1.0, 0.0, 0.0]), q.shape[:-1] + (3,)))
    return np.arctan2(fwd[..., 1], fwd[..., 0])


def yaw_quat(yaw):
    yaw = np.asarray(yaw)
    half = 0.5 * yaw
    zero = np.zeros_like(yaw)
    return np.stack([np.cos(half), zero, zero, np.sin(half)], axis=-1)
