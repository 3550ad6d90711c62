"""
Pose Sequences
Animating an avatar through a timed list of body poses
"""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from core.articulation.avatar import HumanAvatar
from core.articulation.lbs import lbs_transform_cloud
from core.articulation.skeleton import PoseFrame, compute_bone_transforms
from core.errors import PreconditionError, ShapeMismatchError
from core.gaussians.cloud import GaussianCloud


@dataclass
class PoseSequence:
    """Body poses θ¹..θᴺ with strictly increasing timestamps"""

    frames: list[PoseFrame]
    shape_params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fps: float = 30.0

    def __post_init__(self):
        if not self.frames:
            raise PreconditionError("A pose sequence needs at least one frame")
        if self.fps <= 0:
            raise PreconditionError(f"fps must be > 0, got {self.fps}")
        joints = {f.n_joints for f in self.frames}
        if len(joints) > 1:
            raise ShapeMismatchError(f"Frames disagree on joint count: {sorted(joints)}")
        times = np.array([f.time for f in self.frames])
        if np.any(np.diff(times) <= 0):
            raise PreconditionError("Pose timestamps must be strictly increasing")
        self.shape_params = np.asarray(self.shape_params, dtype=np.float64).reshape(-1)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_joints(self) -> int:
        return self.frames[0].n_joints

    @classmethod
    def rest(cls, n_joints: int, count: int = 1, fps: float = 30.0) -> "PoseSequence":
        return cls([PoseFrame.rest(n_joints, i / fps) for i in range(count)], fps=fps)


def apply_pose_sequence(avatar: HumanAvatar, seq: PoseSequence) -> list[GaussianCloud]:
    """
    One posed cloud per frame

    The non-rigid deformation does not depend on the pose, so it is evaluated
    once and every frame only re-runs LBS. The avatar is not modified.
    """
    if seq.n_joints != avatar.skeleton.n_joints:
        raise ShapeMismatchError(
            f"Sequence has {seq.n_joints} joints, avatar skeleton has {avatar.skeleton.n_joints}"
        )
    deformed, weights, _ = avatar.deform()
    posed = []
    for frame in seq.frames:
        cloud, _ = lbs_transform_cloud(deformed, weights, compute_bone_transforms(avatar.skeleton, frame))
        posed.append(cloud)
    logger.debug(f"pose_sequence frames={len(seq)} gaussians={len(avatar)}")
    return posed
