"""
Spherical Harmonics
Real SH basis up to degree 3 (3DGS sign convention) and its direction Jacobian
"""

import numpy as np

from core.errors import PreconditionError

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.4453057213202769,
    -0.5900435899266435,
)
COLOR_OFFSET = 0.5
MAX_DEGREE = 3


def coeff_count(degree: int) -> int:
    return (degree + 1) ** 2


def degree_from_count(count: int) -> int:
    degree = int(round(np.sqrt(count))) - 1
    if coeff_count(degree) != count or not 0 <= degree <= MAX_DEGREE:
        raise PreconditionError(f"{count} is not a valid SH coefficient count")
    return degree


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Basis values (..., K) for unit directions (..., 3)"""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    terms = [np.full(x.shape, SH_C0)]
    if degree >= 1:
        terms += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        terms += [
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        terms += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(terms, axis=-1)


def sh_basis_jacobian(dirs: np.ndarray, degree: int) -> np.ndarray:
    """d basis / d direction, shape (..., K, 3)"""
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    rows = [(zero, zero, zero)]
    if degree >= 1:
        rows += [
            (zero, -SH_C1 * one, zero),
            (zero, zero, SH_C1 * one),
            (-SH_C1 * one, zero, zero),
        ]
    if degree >= 2:
        rows += [
            (SH_C2[0] * y, SH_C2[0] * x, zero),
            (zero, SH_C2[1] * z, SH_C2[1] * y),
            (-2.0 * SH_C2[2] * x, -2.0 * SH_C2[2] * y, 4.0 * SH_C2[2] * z),
            (SH_C2[3] * z, zero, SH_C2[3] * x),
            (2.0 * SH_C2[4] * x, -2.0 * SH_C2[4] * y, zero),
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        rows += [
            (SH_C3[0] * 6.0 * x * y, SH_C3[0] * (3.0 * xx - 3.0 * yy), zero),
            (SH_C3[1] * y * z, SH_C3[1] * x * z, SH_C3[1] * x * y),
            (SH_C3[2] * -2.0 * x * y, SH_C3[2] * (4.0 * zz - xx - 3.0 * yy), SH_C3[2] * 8.0 * y * z),
            (SH_C3[3] * -6.0 * x * z, SH_C3[3] * -6.0 * y * z, SH_C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)),
            (SH_C3[4] * (4.0 * zz - 3.0 * xx - yy), SH_C3[4] * -2.0 * x * y, SH_C3[4] * 8.0 * x * z),
            (SH_C3[5] * 2.0 * x * z, SH_C3[5] * -2.0 * y * z, SH_C3[5] * (xx - yy)),
            (SH_C3[6] * (3.0 * xx - 3.0 * yy), SH_C3[6] * -6.0 * x * y, zero),
        ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def sh_to_color_raw(sh: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Unclamped colour: basis·sh + 0.5, sh (..., K, 3), dirs (..., 3)"""
    sh = np.asarray(sh, dtype=np.float64)
    basis = sh_basis(dirs, degree_from_count(sh.shape[-2]))
    return np.einsum("...k,...kc->...c", basis, sh) + COLOR_OFFSET


def sh_to_color(sh: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """RGB in [0, 1] seen from view_dir"""
    return np.clip(sh_to_color_raw(sh, view_dir), 0.0, 1.0)


def rgb_to_sh0(rgb: np.ndarray) -> np.ndarray:
    return (np.asarray(rgb, dtype=np.float64) - COLOR_OFFSET) / SH_C0
