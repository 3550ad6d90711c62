"""
Skeleton Model
Joint hierarchy, per-frame poses and forward kinematics producing bone transforms
"""

from dataclasses import dataclass, field

import numpy as np

from core.errors import PreconditionError, ShapeMismatchError
from core.gaussians.quaternion import IDENTITY, UNIT_TOLERANCE, quat_to_matrix

RIGID_TOLERANCE = 1e-6


def translation_matrix(t: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, 3] = t
    return m


def rigid_matrix(rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    return m


def rigid_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of rigid 4×4 transforms (..., 4, 4)"""
    rot = np.swapaxes(m[..., :3, :3], -1, -2)
    out = np.zeros_like(m)
    out[..., :3, :3] = rot
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", rot, m[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def is_rigid(m: np.ndarray, tol: float = RIGID_TOLERANCE) -> bool:
    rot = m[:3, :3]
    return bool(
        np.allclose(rot @ rot.T, np.eye(3), atol=tol)
        and abs(np.linalg.det(rot) - 1.0) <= tol
        and np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=tol)
    )


@dataclass(frozen=True)
class Skeleton:
    """
    Joint hierarchy in topological order

    Attributes:
        parents: parent index per joint, -1 for roots; parents[j] < j
        rest_local_transforms: (J, 4, 4) rigid transform of each joint in its parent frame
        shape_params: body shape vector carried as metadata
        joint_names: optional labels
    """

    parents: tuple[int, ...]
    rest_local_transforms: np.ndarray
    shape_params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    joint_names: tuple[str, ...] = ()

    def __post_init__(self):
        parents = tuple(int(p) for p in self.parents)
        rest = np.asarray(self.rest_local_transforms, dtype=np.float64)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "rest_local_transforms", rest)
        object.__setattr__(self, "shape_params", np.asarray(self.shape_params, dtype=np.float64).reshape(-1))

        if not parents:
            raise PreconditionError("Skeleton needs at least one joint")
        if rest.shape != (len(parents), 4, 4):
            raise ShapeMismatchError(f"rest_local_transforms shape {rest.shape}, expected ({len(parents)}, 4, 4)")
        if parents[0] != -1:
            raise PreconditionError("Joint 0 must be a root")
        for j, p in enumerate(parents[1:], start=1):
            if not -1 <= p < j:
                raise PreconditionError(f"Joint {j} has parent {p}; parents must precede children")
        for j, m in enumerate(rest):
            if not is_rigid(m):
                raise PreconditionError(f"Rest transform of joint {j} is not rigid")
        if self.joint_names and len(self.joint_names) != len(parents):
            raise ShapeMismatchError("joint_names length differs from joint count")

    @property
    def n_joints(self) -> int:
        return len(self.parents)

    def children(self, joint: int) -> list[int]:
        return [j for j, p in enumerate(self.parents) if p == joint]

    def rest_global_transforms(self) -> np.ndarray:
        """World transform of every joint frame in the rest pose"""
        out = np.empty_like(self.rest_local_transforms)
        for j, p in enumerate(self.parents):
            local = self.rest_local_transforms[j]
            out[j] = local if p < 0 else out[p] @ local
        return out

    def joint_positions(self) -> np.ndarray:
        return self.rest_global_transforms()[:, :3, 3]


@dataclass(frozen=True)
class PoseFrame:
    """Per-joint local rotations (w, x, y, z), root translation and timestamp"""

    joint_rotations: np.ndarray
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time: float = 0.0

    def __post_init__(self):
        rotations = np.asarray(self.joint_rotations, dtype=np.float64).reshape(-1, 4)
        norms = np.linalg.norm(rotations, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
            raise PreconditionError("PoseFrame rotations must be unit quaternions")
        object.__setattr__(self, "joint_rotations", rotations)
        object.__setattr__(self, "root_translation", np.asarray(self.root_translation, dtype=np.float64).reshape(3))

    @property
    def n_joints(self) -> int:
        return len(self.joint_rotations)

    @classmethod
    def rest(cls, n_joints: int, time: float = 0.0) -> "PoseFrame":
        return cls(np.tile(IDENTITY, (n_joints, 1)), np.zeros(3), time)


def compute_bone_transforms(skeleton: Skeleton, pose: PoseFrame) -> np.ndarray:
    """
    Bone transforms B_j mapping rest-pose points to posed world points

    G_j = G_parent · L_j · Rot(θ_j), with the root translation applied before the
    root joint, and B_j = G_j · inverse(G_rest_j).

    Returns:
        (J, 4, 4) rigid transforms
    """
    if pose.n_joints != skeleton.n_joints:
        raise ShapeMismatchError(
            f"Pose has {pose.n_joints} joint rotations, skeleton has {skeleton.n_joints} joints"
        )
    local_rot = quat_to_matrix(pose.joint_rotations)
    root = translation_matrix(pose.root_translation)
    posed = np.empty((skeleton.n_joints, 4, 4))
    for j, p in enumerate(skeleton.parents):
        local = skeleton.rest_local_transforms[j] @ rigid_matrix(local_rot[j], np.zeros(3))
        posed[j] = (root if p < 0 else posed[p]) @ local
    return posed @ rigid_inverse(skeleton.rest_global_transforms())
