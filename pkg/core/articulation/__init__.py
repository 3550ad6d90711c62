"""
Articulation
Skeleton, linear blend skinning, triplane features and deformation decoders
"""

from core.articulation.avatar import HumanAvatar, PoseCache, bake_avatar
from core.articulation.deformer import Deformer, apply_nonrigid
from core.articulation.lbs import (
    LbsWeightMatrix,
    lbs_effective_weights,
    lbs_transform,
    lbs_transform_cloud,
    lbs_transform_gaussian,
    polar_rotation,
)
from core.articulation.mlp import MlpDecoder, color_decode, mlp_backward, nonrigid_decode
from core.articulation.skeleton import PoseFrame, Skeleton, compute_bone_transforms
from core.articulation.template import build_avatar, toy_avatar, toy_biped, toy_biped_mesh
from core.articulation.triplane import TriplaneEncoder, triplane_query

__all__ = [
    "Deformer",
    "HumanAvatar",
    "LbsWeightMatrix",
    "MlpDecoder",
    "PoseCache",
    "PoseFrame",
    "Skeleton",
    "TriplaneEncoder",
    "apply_nonrigid",
    "bake_avatar",
    "build_avatar",
    "color_decode",
    "compute_bone_transforms",
    "lbs_effective_weights",
    "lbs_transform",
    "lbs_transform_cloud",
    "lbs_transform_gaussian",
    "mlp_backward",
    "nonrigid_decode",
    "polar_rotation",
    "toy_avatar",
    "toy_biped",
    "toy_biped_mesh",
    "triplane_query",
]
