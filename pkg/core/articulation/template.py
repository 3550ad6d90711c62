"""
Avatar Templates
Avatar construction from a skinned template mesh, and the built-in toy biped
"""

import numpy as np
from loguru import logger

from config.config import ModelConfig
from core.articulation.avatar import HumanAvatar
from core.articulation.deformer import Deformer
from core.articulation.lbs import LbsWeightMatrix
from core.articulation.skeleton import Skeleton, translation_matrix
from core.errors import PreconditionError
from core.gaussians.mesh import Mesh, sample_skinned_cloud

TOY_JOINTS = ("pelvis", "chest", "head", "left_leg", "right_leg")
TOY_PARENTS = (-1, 0, 1, 0, 0)
TOY_OFFSETS = (
    (0.0, 1.0, 0.0),
    (0.0, 0.25, 0.0),
    (0.0, 0.35, 0.0),
    (0.12, -0.05, 0.0),
    (-0.12, -0.05, 0.0),
)
# (center, half extents, joint) per body part
TOY_PARTS = (
    ((0.0, 1.1, 0.0), (0.15, 0.1, 0.08), 0),
    ((0.0, 1.4, 0.0), (0.17, 0.15, 0.09), 1),
    ((0.0, 1.72, 0.0), (0.1, 0.1, 0.1), 2),
    ((0.12, 0.5, 0.0), (0.06, 0.42, 0.06), 3),
    ((-0.12, 0.5, 0.0), (0.06, 0.42, 0.06), 4),
)
BOX_FACES = np.array(
    [
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5],
        [0, 4, 5], [0, 5, 1], [2, 3, 7], [2, 7, 6],
        [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ]
)


def toy_biped() -> Skeleton:
    """Five-joint biped standing on y = 0, +y up"""
    rest = np.stack([translation_matrix(np.array(offset)) for offset in TOY_OFFSETS])
    return Skeleton(parents=TOY_PARENTS, rest_local_transforms=rest, joint_names=TOY_JOINTS)


def toy_biped_mesh() -> Mesh:
    """One box per body part, each rigidly bound to its joint"""
    vertices, faces, weights = [], [], []
    for center, half, joint in TOY_PARTS:
        corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
        base = len(vertices) * 8
        vertices.append(np.asarray(center) + corners * np.asarray(half))
        faces.append(BOX_FACES + base)
        w = np.zeros((8, len(TOY_JOINTS)))
        w[:, joint] = 1.0
        weights.append(w)
    return Mesh(np.concatenate(vertices), np.concatenate(faces), np.concatenate(weights))


def build_avatar(
    mesh: Mesh,
    skeleton: Skeleton,
    model: ModelConfig | None = None,
    seed: int = 0,
) -> HumanAvatar:
    """
    Fresh avatar: sampled canonical cloud, template skin weights, zero-head decoders

    Args:
        mesh: Skinned template mesh in the rest pose
        skeleton: Matching joint hierarchy
        model: Model hyper-parameters (defaults when None)
        seed: Seed for point sampling and decoder initialisation
    """
    model = model or ModelConfig()
    if mesh.skin_weights is None:
        raise PreconditionError("Template mesh has no skinning weights")
    if mesh.skin_weights.shape[1] != skeleton.n_joints:
        raise PreconditionError(
            f"Mesh weights cover {mesh.skin_weights.shape[1]} joints, skeleton has {skeleton.n_joints}"
        )
    cloud, weights = sample_skinned_cloud(
        mesh, model.init_points, seed=seed, sh_degree=model.sh_degree, init_opacity=model.init_opacity
    )
    lo, hi = mesh.bounds
    pad = model.bbox_padding * np.max(hi - lo)
    deformer = Deformer.create(
        lo - pad,
        hi + pad,
        n_joints=skeleton.n_joints,
        sh_degree=model.sh_degree,
        resolution=model.triplane_resolution,
        feature_dim=model.feature_dim,
        nonrigid_hidden=list(model.nonrigid_hidden),
        skinning_hidden=list(model.skinning_hidden),
        color_hidden=list(model.color_hidden),
        seed=seed,
    )
    logger.info(f"avatar_built gaussians={len(cloud)} joints={skeleton.n_joints} sh_degree={model.sh_degree}")
    return HumanAvatar(cloud, skeleton, LbsWeightMatrix(weights), deformer)


def toy_avatar(model: ModelConfig | None = None, seed: int = 0) -> HumanAvatar:
    return build_avatar(toy_biped_mesh(), toy_biped(), model, seed)
