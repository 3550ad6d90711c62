"""
Quaternion Math
(w, x, y, z) convention, Hamilton product; all functions accept single
quaternions of shape (4,) or batches of shape (..., 4)
"""

import numpy as np

from core.errors import DegenerateQuaternionError, PreconditionError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
MIN_NORM = 1e-12
UNIT_TOLERANCE = 1e-6


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale to unit norm; raises on near-zero input"""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm <= MIN_NORM):
        raise DegenerateQuaternionError(f"Cannot normalize quaternion with norm <= {MIN_NORM}")
    return q / norm


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a·b"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def left_matrix(q: np.ndarray) -> np.ndarray:
    """Matrix L(q) with q·p = L(q) p"""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack(
        [
            np.stack([w, -x, -y, -z], axis=-1),
            np.stack([x, w, -z, y], axis=-1),
            np.stack([y, z, w, -x], axis=-1),
            np.stack([z, -y, x, w], axis=-1),
        ],
        axis=-2,
    )


def right_matrix(q: np.ndarray) -> np.ndarray:
    """Matrix R(q) with p·q = R(q) p"""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack(
        [
            np.stack([w, -x, -y, -z], axis=-1),
            np.stack([x, w, z, -y], axis=-1),
            np.stack([y, -z, w, x], axis=-1),
            np.stack([z, y, -x, w], axis=-1),
        ],
        axis=-2,
    )


def rotation_matrices(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (already unit) quaternions, no checks"""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """3×3 rotation matrix of a unit quaternion"""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_TOLERANCE):
        raise PreconditionError(f"quat_to_matrix expects unit quaternions, got norm {norm}")
    return rotation_matrices(q)


def rotation_matrix_grad_to_quat(q: np.ndarray, grad_r: np.ndarray) -> np.ndarray:
    """Back-propagate dL/dR (..., 3, 3) to dL/dq for unit q (before normalization)"""
    w, x, y, z = np.moveaxis(q, -1, 0)
    g = grad_r
    gw = 2 * (
        -z * g[..., 0, 1] + y * g[..., 0, 2] + z * g[..., 1, 0]
        - x * g[..., 1, 2] - y * g[..., 2, 0] + x * g[..., 2, 1]
    )
    gx = 2 * (
        y * g[..., 0, 1] + z * g[..., 0, 2] + y * g[..., 1, 0] - 2 * x * g[..., 1, 1]
        - w * g[..., 1, 2] + z * g[..., 2, 0] + w * g[..., 2, 1] - 2 * x * g[..., 2, 2]
    )
    gy = 2 * (
        -2 * y * g[..., 0, 0] + x * g[..., 0, 1] + w * g[..., 0, 2] + x * g[..., 1, 0]
        + z * g[..., 1, 2] - w * g[..., 2, 0] + z * g[..., 2, 1] - 2 * y * g[..., 2, 2]
    )
    gz = 2 * (
        -2 * z * g[..., 0, 0] - w * g[..., 0, 1] + x * g[..., 0, 2] + w * g[..., 1, 0]
        - 2 * z * g[..., 1, 1] + y * g[..., 1, 2] + x * g[..., 2, 0] + y * g[..., 2, 1]
    )
    return np.stack([gw, gx, gy, gz], axis=-1)


def normalize_backward(q_raw: np.ndarray, grad_unit: np.ndarray) -> np.ndarray:
    """Gradient through q / |q|"""
    norm = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    unit = q_raw / norm
    radial = np.sum(unit * grad_unit, axis=-1, keepdims=True)
    return (grad_unit - unit * radial) / norm


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) of rotation matrices (..., 3, 3), Shepperd's method"""
    r = np.asarray(r, dtype=np.float64)
    batch_shape = r.shape[:-2]
    m = r.reshape(-1, 3, 3)
    out = np.empty((m.shape[0], 4))

    trace = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    diag = np.stack([trace, m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]], axis=-1)
    case = np.argmax(diag, axis=-1)

    for k in range(4):
        sel = case == k
        if not np.any(sel):
            continue
        s = m[sel]
        if k == 0:
            t = np.sqrt(1.0 + trace[sel]) * 2.0
            out[sel] = np.stack(
                [0.25 * t, (s[:, 2, 1] - s[:, 1, 2]) / t, (s[:, 0, 2] - s[:, 2, 0]) / t,
                 (s[:, 1, 0] - s[:, 0, 1]) / t],
                axis=-1,
            )
        elif k == 1:
            t = np.sqrt(1.0 + s[:, 0, 0] - s[:, 1, 1] - s[:, 2, 2]) * 2.0
            out[sel] = np.stack(
                [(s[:, 2, 1] - s[:, 1, 2]) / t, 0.25 * t, (s[:, 0, 1] + s[:, 1, 0]) / t,
                 (s[:, 0, 2] + s[:, 2, 0]) / t],
                axis=-1,
            )
        elif k == 2:
            t = np.sqrt(1.0 + s[:, 1, 1] - s[:, 0, 0] - s[:, 2, 2]) * 2.0
            out[sel] = np.stack(
                [(s[:, 0, 2] - s[:, 2, 0]) / t, (s[:, 0, 1] + s[:, 1, 0]) / t, 0.25 * t,
                 (s[:, 1, 2] + s[:, 2, 1]) / t],
                axis=-1,
            )
        else:
            t = np.sqrt(1.0 + s[:, 2, 2] - s[:, 0, 0] - s[:, 1, 1]) * 2.0
            out[sel] = np.stack(
                [(s[:, 1, 0] - s[:, 0, 1]) / t, (s[:, 0, 2] + s[:, 2, 0]) / t,
                 (s[:, 1, 2] + s[:, 2, 1]) / t, 0.25 * t],
                axis=-1,
            )

    out = np.where(out[:, :1] < 0.0, -out, out)
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out.reshape(*batch_shape, 4)


def axis_angle_to_quat(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def random_unit_quaternions(rng: np.random.Generator, count: int) -> np.ndarray:
    return quat_normalize(rng.normal(size=(count, 4)))
