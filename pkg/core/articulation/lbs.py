"""
Linear Blend Skinning
Effective skinning weights, blended bone matrices and posing of Gaussians
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from core.errors import DegenerateBlendError, PreconditionError, ShapeMismatchError
from core.gaussians.cloud import Gaussian, GaussianCloud, SpaceTag
from core.gaussians.quaternion import quat_from_matrix, quat_multiply, quat_normalize

WEIGHT_EPS = 1e-8
SUM_TOLERANCE = 1e-6


@dataclass
class LbsWeightMatrix:
    """Base skinning weights (N, J) plus learned per-joint logit offsets (N, J)"""

    base_weights: np.ndarray
    learned_logit_offsets: np.ndarray = field(default=None)

    def __post_init__(self):
        self.base_weights = np.asarray(self.base_weights, dtype=np.float64)
        if self.base_weights.ndim != 2:
            raise ShapeMismatchError(f"base_weights must be (N, J), got {self.base_weights.shape}")
        if self.learned_logit_offsets is None:
            self.learned_logit_offsets = np.zeros_like(self.base_weights)
        self.learned_logit_offsets = np.asarray(self.learned_logit_offsets, dtype=np.float64)
        if self.learned_logit_offsets.shape != self.base_weights.shape:
            raise ShapeMismatchError(
                f"Offsets shape {self.learned_logit_offsets.shape} != base shape {self.base_weights.shape}"
            )
        if np.any(self.base_weights < 0):
            raise PreconditionError("Skinning weights must be non-negative")
        if np.any(self.base_weights.sum(axis=1) <= 0):
            raise PreconditionError("Every skinning weight row needs at least one positive entry")

    def __len__(self) -> int:
        return self.base_weights.shape[0]

    @property
    def n_joints(self) -> int:
        return self.base_weights.shape[1]

    def effective(self, extra_logits: np.ndarray | None = None) -> np.ndarray:
        return effective_weights(self.base_weights, self.learned_logit_offsets, extra_logits)

    def subset(self, indices: np.ndarray) -> "LbsWeightMatrix":
        return LbsWeightMatrix(self.base_weights[indices], self.learned_logit_offsets[indices])

    def copy(self) -> "LbsWeightMatrix":
        return LbsWeightMatrix(self.base_weights.copy(), self.learned_logit_offsets.copy())


def effective_weights(
    base: np.ndarray, offsets: np.ndarray, extra_logits: np.ndarray | None = None
) -> np.ndarray:
    """softmax(log(base + ε) + offsets [+ decoder logits]) row-wise"""
    logits = np.log(base + WEIGHT_EPS) + offsets
    if extra_logits is not None:
        logits = logits + extra_logits
    return softmax(logits, axis=-1)


def softmax_backward(weights: np.ndarray, grad_weights: np.ndarray) -> np.ndarray:
    inner = np.sum(weights * grad_weights, axis=-1, keepdims=True)
    return weights * (grad_weights - inner)


def lbs_effective_weights(w: LbsWeightMatrix, row: int) -> np.ndarray:
    base = w.base_weights[row]
    if not np.any(base > 0):
        raise PreconditionError(f"Skinning weight row {row} is all zero")
    return effective_weights(base, w.learned_logit_offsets[row])


def blend_matrices(weights: np.ndarray, bones: np.ndarray) -> np.ndarray:
    """A = Σ_j w_j B_j for each weight row, (N, 4, 4)"""
    return np.einsum("nj,jab->nab", weights, bones)


def _check_simplex(weights: np.ndarray) -> None:
    sums = np.sum(weights, axis=-1)
    if np.any(np.abs(sums - 1.0) > SUM_TOLERANCE):
        raise PreconditionError("Skinning weights must sum to 1")


def lbs_transform(x_d: np.ndarray, weights: np.ndarray, bones: np.ndarray) -> np.ndarray:
    """x_p = Σ_j w_j B_j x_d in homogeneous coordinates"""
    weights = np.asarray(weights, dtype=np.float64)
    _check_simplex(weights)
    x_h = np.append(np.asarray(x_d, dtype=np.float64), 1.0)
    transformed = np.einsum("jab,b->ja", bones, x_h)
    return (weights @ transformed)[:3]


def polar_rotation(a: np.ndarray) -> np.ndarray:
    """
    Rotation factor of the polar decomposition A = R P (batched over leading axes)

    Raises:
        DegenerateBlendError: if det(A) <= 0
    """
    a = np.asarray(a, dtype=np.float64)
    det = np.linalg.det(a)
    if np.any(det <= 0):
        raise DegenerateBlendError(f"Blended matrix has non-positive determinant (min {np.min(det):.3e})")
    u, _, vt = np.linalg.svd(a)
    return u @ vt


def lbs_transform_gaussian(g: Gaussian, weights: np.ndarray, bones: np.ndarray) -> Gaussian:
    """Pose one Gaussian: blended position and polar rotation left-multiplied onto q"""
    weights = np.asarray(weights, dtype=np.float64)
    _check_simplex(weights)
    a = blend_matrices(weights[None, :], bones)[0]
    rotation = quat_from_matrix(polar_rotation(a[:3, :3]))
    return Gaussian(
        position=a[:3, :3] @ g.position + a[:3, 3],
        rotation=quat_normalize(quat_multiply(rotation, g.rotation)),
        log_scale=g.log_scale.copy(),
        opacity_logit=g.opacity_logit,
        sh=g.sh.copy(),
    )


@dataclass
class LbsCache:
    """Intermediate values of a batched LBS pass needed for backward"""

    blended: np.ndarray  # (N, 4, 4)
    polar_quats: np.ndarray  # (N, 4)
    deformed_positions: np.ndarray  # (N, 3)
    bones: np.ndarray  # (J, 4, 4)


def lbs_transform_cloud(
    cloud: GaussianCloud, weights: np.ndarray, bones: np.ndarray
) -> tuple[GaussianCloud, LbsCache]:
    """Batched posing of a deformed cloud with effective weights (N, J)"""
    if weights.shape != (len(cloud), bones.shape[0]):
        raise ShapeMismatchError(
            f"Weights shape {weights.shape} incompatible with {len(cloud)} Gaussians and {bones.shape[0]} bones"
        )
    a = blend_matrices(weights, bones)
    a3 = a[:, :3, :3]
    rot_q = quat_from_matrix(polar_rotation(a3)) if len(cloud) else np.zeros((0, 4))
    positions = np.einsum("nab,nb->na", a3, cloud.positions) + a[:, :3, 3]
    rotations = quat_normalize(quat_multiply(rot_q, cloud.rotations)) if len(cloud) else cloud.rotations
    posed = GaussianCloud(
        positions=positions,
        rotations=rotations,
        log_scales=cloud.log_scales,
        opacity_logits=cloud.opacity_logits,
        sh=cloud.sh,
        space=SpaceTag.POSED,
    )
    return posed, LbsCache(blended=a, polar_quats=rot_q, deformed_positions=cloud.positions, bones=bones)
