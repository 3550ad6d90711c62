"""
Gaussian Cloud
Array-of-attributes container for N 3D Gaussians plus the activation and
covariance math shared by every other module
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.special import expit
from scipy.special import logit as _logit

from core.errors import ShapeMismatchError
from core.gaussians.quaternion import quat_normalize, quat_to_matrix, rotation_matrices
from core.gaussians.sh import coeff_count, degree_from_count

STORAGE_DTYPE = np.dtype("<f4")


class SpaceTag(str, Enum):
    """Coordinate frame a cloud lives in"""

    CANONICAL = "canonical"
    DEFORMED = "deformed"
    POSED = "posed"
    WORLD = "world"


def sigmoid(x: np.ndarray | float) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64))


def logit(p: np.ndarray | float) -> np.ndarray:
    return _logit(np.asarray(p, dtype=np.float64))


@dataclass(frozen=True)
class Gaussian:
    """A single Gaussian (pre-activation attributes)"""

    position: np.ndarray  # (3,)
    rotation: np.ndarray  # (4,) unit quaternion (w, x, y, z)
    log_scale: np.ndarray  # (3,)
    opacity_logit: float
    sh: np.ndarray  # (K, 3)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(sigmoid(self.opacity_logit))

    def covariance(self) -> np.ndarray:
        return build_covariance(self.log_scale, self.rotation)


@dataclass
class GaussianCloud:
    """
    N Gaussians stored as contiguous attribute arrays

    Attributes:
        positions: (N, 3)
        rotations: (N, 4) unit quaternions
        log_scales: (N, 3)
        opacity_logits: (N,)
        sh: (N, K, 3) with K = (degree + 1)^2
        space: coordinate frame tag
    """

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    space: SpaceTag = SpaceTag.CANONICAL
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 4)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64).reshape(-1, 3)
        self.opacity_logits = np.asarray(self.opacity_logits, dtype=np.float64).reshape(-1)
        self.sh = np.asarray(self.sh, dtype=np.float64)
        n = self.positions.shape[0]
        if self.sh.ndim != 3 or self.sh.shape[2] != 3:
            self.sh = self.sh.reshape(n, -1, 3)
        lengths = {
            "rotations": self.rotations.shape[0],
            "log_scales": self.log_scales.shape[0],
            "opacity_logits": self.opacity_logits.shape[0],
            "sh": self.sh.shape[0],
        }
        bad = {k: v for k, v in lengths.items() if v != n}
        if bad:
            raise ShapeMismatchError(f"Attribute lengths differ from N={n}: {bad}")
        degree_from_count(self.sh.shape[1])
        self.space = SpaceTag(self.space)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def sh_degree(self) -> int:
        return degree_from_count(self.sh.shape[1])

    @property
    def scales(self) -> np.ndarray:
        return np.exp(self.log_scales)

    @property
    def opacities(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    def gaussian(self, index: int) -> Gaussian:
        return Gaussian(
            position=self.positions[index].copy(),
            rotation=self.rotations[index].copy(),
            log_scale=self.log_scales[index].copy(),
            opacity_logit=float(self.opacity_logits[index]),
            sh=self.sh[index].copy(),
        )

    def covariances(self) -> np.ndarray:
        return build_covariances(self.log_scales, self.rotations)

    def replace(self, **changes) -> "GaussianCloud":
        return replace(self, **changes)

    def copy(self) -> "GaussianCloud":
        return GaussianCloud(
            positions=self.positions.copy(),
            rotations=self.rotations.copy(),
            log_scales=self.log_scales.copy(),
            opacity_logits=self.opacity_logits.copy(),
            sh=self.sh.copy(),
            space=self.space,
            meta=dict(self.meta),
        )

    def at_storage_precision(self) -> "GaussianCloud":
        """Attributes rounded through the float32 that checkpoints keep"""

        def rounded(arr: np.ndarray) -> np.ndarray:
            return arr.astype(STORAGE_DTYPE).astype(np.float64)

        return GaussianCloud(
            positions=rounded(self.positions),
            rotations=rounded(self.rotations),
            log_scales=rounded(self.log_scales),
            opacity_logits=rounded(self.opacity_logits),
            sh=rounded(self.sh),
            space=self.space,
            meta=dict(self.meta),
        )

    def subset(self, indices: np.ndarray) -> "GaussianCloud":
        indices = np.asarray(indices, dtype=np.int64)
        return GaussianCloud(
            positions=self.positions[indices],
            rotations=self.rotations[indices],
            log_scales=self.log_scales[indices],
            opacity_logits=self.opacity_logits[indices],
            sh=self.sh[indices],
            space=self.space,
        )

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        if len(self) == 0:
            return np.zeros(3), 1.0
        lo, hi = self.positions.min(axis=0), self.positions.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = float(np.max(np.linalg.norm(self.positions - center, axis=1)))
        return center, max(radius, 1e-6)

    @classmethod
    def empty(cls, sh_degree: int = 0, space: SpaceTag = SpaceTag.WORLD) -> "GaussianCloud":
        k = coeff_count(sh_degree)
        return cls(
            positions=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            log_scales=np.zeros((0, 3)),
            opacity_logits=np.zeros(0),
            sh=np.zeros((0, k, 3)),
            space=space,
        )

    @classmethod
    def from_gaussians(cls, gaussians: list[Gaussian], space: SpaceTag = SpaceTag.WORLD) -> "GaussianCloud":
        if not gaussians:
            return cls.empty(space=space)
        return cls(
            positions=np.stack([g.position for g in gaussians]),
            rotations=np.stack([quat_normalize(g.rotation) for g in gaussians]),
            log_scales=np.stack([g.log_scale for g in gaussians]),
            opacity_logits=np.array([g.opacity_logit for g in gaussians]),
            sh=np.stack([g.sh for g in gaussians]),
            space=space,
        )


def concat_clouds(clouds: list[GaussianCloud], space: SpaceTag) -> GaussianCloud:
    """Concatenate in the given order; SH degrees must match"""
    clouds = [c for c in clouds if c is not None]
    degrees = {c.sh_degree for c in clouds if len(c)}
    if len(degrees) > 1:
        raise ShapeMismatchError(f"Cannot concatenate clouds with SH degrees {sorted(degrees)}")
    degree = degrees.pop() if degrees else (clouds[0].sh_degree if clouds else 0)
    k = coeff_count(degree)
    return GaussianCloud(
        positions=np.concatenate([c.positions for c in clouds] or [np.zeros((0, 3))]),
        rotations=np.concatenate([c.rotations for c in clouds] or [np.zeros((0, 4))]),
        log_scales=np.concatenate([c.log_scales for c in clouds] or [np.zeros((0, 3))]),
        opacity_logits=np.concatenate([c.opacity_logits for c in clouds] or [np.zeros(0)]),
        sh=np.concatenate([c.sh.reshape(-1, k, 3) for c in clouds] or [np.zeros((0, k, 3))]),
        space=space,
    )


def build_covariance(log_scale: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Σ = R diag(exp(s))² Rᵀ for one Gaussian"""
    r = quat_to_matrix(q)
    m = r * np.exp(np.asarray(log_scale, dtype=np.float64))[None, :]
    return m @ m.T


def build_covariances(log_scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Batched covariance; rotations are normalized first"""
    r = rotation_matrices(quat_normalize(rotations)) if len(rotations) else np.zeros((0, 3, 3))
    m = r * np.exp(log_scales)[:, None, :]
    return m @ np.swapaxes(m, -1, -2)
