"""
Human Avatar
Canonical human Gaussians bound to a skeleton: deform, pose, back-propagate, bake
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger

from core.articulation.deformer import DeformCache, Deformer
from core.articulation.lbs import LbsCache, LbsWeightMatrix, lbs_transform_cloud, softmax_backward
from core.articulation.skeleton import PoseFrame, Skeleton, compute_bone_transforms
from core.errors import ShapeMismatchError
from core.gaussians.cloud import GaussianCloud, SpaceTag
from core.gaussians.quaternion import left_matrix, normalize_backward, quat_multiply, quat_normalize

HUMAN_PREFIX = "human"
CLOUD_FIELDS = ("positions", "rotations", "log_scales", "opacity_logits", "sh")


@dataclass
class PoseCache:
    deform: DeformCache
    lbs: LbsCache
    weights: np.ndarray
    deformed: GaussianCloud


@dataclass
class HumanAvatar:
    """Canonical cloud + skeleton + skinning weights + deformation decoders"""

    canonical: GaussianCloud
    skeleton: Skeleton
    weights: LbsWeightMatrix
    deformer: Deformer

    def __post_init__(self):
        if len(self.weights) != len(self.canonical):
            raise ShapeMismatchError(
                f"{len(self.weights)} weight rows for {len(self.canonical)} canonical Gaussians"
            )
        if self.weights.n_joints != self.skeleton.n_joints:
            raise ShapeMismatchError(
                f"Weights cover {self.weights.n_joints} joints, skeleton has {self.skeleton.n_joints}"
            )
        if self.deformer.skinning.out_dim != self.skeleton.n_joints:
            raise ShapeMismatchError("Skinning decoder width does not match the joint count")

    def __len__(self) -> int:
        return len(self.canonical)

    def deform(self) -> tuple[GaussianCloud, np.ndarray, DeformCache]:
        """Deformed canonical cloud and effective skinning weights"""
        deformed, skin_logits, cache = self.deformer.forward(self.canonical)
        return deformed, self.weights.effective(skin_logits), cache

    def pose(self, frame: PoseFrame) -> tuple[GaussianCloud, PoseCache]:
        """Posed cloud for one frame (non-rigid deformation, then LBS)"""
        deformed, weights, deform_cache = self.deform()
        bones = compute_bone_transforms(self.skeleton, frame)
        posed, lbs_cache = lbs_transform_cloud(deformed, weights, bones)
        return posed, PoseCache(deform_cache, lbs_cache, weights, deformed)

    def backward(self, cache: PoseCache, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        """
        Chain posed-cloud gradients back to every avatar parameter

        Args:
            cache: PoseCache from pose()
            grads: gradients w.r.t. the posed cloud keyed by CLOUD_FIELDS

        Returns:
            Gradients keyed like parameters()
        """
        lbs = cache.lbs
        a3 = lbs.blended[:, :3, :3]
        x_d = lbs.deformed_positions
        g_xp = grads["positions"]

        g_xd = np.einsum("nba,nb->na", a3, g_xp)
        x_h = np.concatenate([x_d, np.ones((len(x_d), 1))], axis=1)
        g_w = np.einsum("na,jab,nb->nj", g_xp, lbs.bones[:, :3, :], x_h)
        g_logits = softmax_backward(cache.weights, g_w)

        q_d = cache.deformed.rotations
        composed = quat_multiply(lbs.polar_quats, q_d) if len(q_d) else q_d
        g_unit = normalize_backward(composed, grads["rotations"]) if len(q_d) else grads["rotations"]
        g_qd = np.einsum("nji,nj->ni", left_matrix(lbs.polar_quats), g_unit) if len(q_d) else g_unit

        canonical_grads, param_grads = self.deformer.backward(
            cache.deform,
            grad_positions=g_xd,
            grad_rotations=g_qd,
            grad_log_scales=grads["log_scales"],
            grad_opacity=grads["opacity_logits"],
            grad_sh=grads["sh"],
            grad_skin_logits=g_logits,
        )
        out = {f"{HUMAN_PREFIX}.{k}": v for k, v in canonical_grads.items()}
        out[f"{HUMAN_PREFIX}.lbs_offsets"] = g_logits
        out.update(param_grads)
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        params = {f"{HUMAN_PREFIX}.{name}": getattr(self.canonical, name) for name in CLOUD_FIELDS}
        params[f"{HUMAN_PREFIX}.lbs_offsets"] = self.weights.learned_logit_offsets
        params.update(self.deformer.parameters())
        return params

    def with_parameters(self, params: dict[str, np.ndarray]) -> "HumanAvatar":
        """New avatar with the given parameters swapped in (rotations renormalised)"""
        fields = {
            name: params.get(f"{HUMAN_PREFIX}.{name}", getattr(self.canonical, name)) for name in CLOUD_FIELDS
        }
        if len(fields["rotations"]):
            fields["rotations"] = quat_normalize(fields["rotations"])
        canonical = GaussianCloud(**fields, space=SpaceTag.CANONICAL)
        weights = LbsWeightMatrix(
            self.weights.base_weights,
            params.get(f"{HUMAN_PREFIX}.lbs_offsets", self.weights.learned_logit_offsets),
        )
        return HumanAvatar(canonical, self.skeleton, weights, self.deformer.with_parameters(params))

    def reindexed(self, canonical: GaussianCloud, source_index: np.ndarray) -> "HumanAvatar":
        """Avatar over a new canonical cloud whose rows came from source_index"""
        return HumanAvatar(canonical, self.skeleton, self.weights.subset(source_index), self.deformer)

    def copy(self) -> "HumanAvatar":
        return HumanAvatar(self.canonical.copy(), self.skeleton, self.weights.copy(), self.deformer.copy())


def bake_avatar(avatar: HumanAvatar) -> HumanAvatar:
    """
    Fold decoder outputs into per-Gaussian attributes

    Non-rigid offsets move into the canonical cloud, colour residuals into opacity
    and SH, skinning logits into the learned offsets; decoder heads are zeroed so
    posing no longer depends on the triplane.
    """
    deformed, skin_logits, _ = avatar.deformer.forward(avatar.canonical)
    canonical = deformed.replace(space=SpaceTag.CANONICAL)
    weights = LbsWeightMatrix(avatar.weights.base_weights, avatar.weights.learned_logit_offsets + skin_logits)
    deformer = Deformer(
        triplane=avatar.deformer.triplane,
        nonrigid=avatar.deformer.nonrigid.zero_head(),
        skinning=avatar.deformer.skinning.zero_head(),
        color=avatar.deformer.color.zero_head(),
    )
    logger.info(f"avatar_baked gaussians={len(canonical)} joints={avatar.skeleton.n_joints}")
    return HumanAvatar(canonical, avatar.skeleton, weights, deformer)
