"""
Reconstruction
Optional human avatar plus optional scene cloud, composed into one world cloud
"""

from dataclasses import dataclass, field

import numpy as np

from core.articulation.avatar import CLOUD_FIELDS, HumanAvatar, PoseCache
from core.articulation.skeleton import PoseFrame
from core.enhance.fusion import fuse_scene
from core.errors import PreconditionError
from core.gaussians.cloud import GaussianCloud, SpaceTag
from core.gaussians.quaternion import quat_normalize
from core.render.rasterizer import CloudGrads

SCENE_PREFIX = "scene"
DECODER_PREFIXES = ("triplane", "nonrigid", "skinning", "color")


def parameter_group(name: str) -> str:
    """Trainable group of a parameter name: human, decoders or scene"""
    prefix = name.split(".", 1)[0]
    if prefix in DECODER_PREFIXES or name == "human.lbs_offsets":
        return "decoders"
    return prefix


@dataclass
class ComposeCache:
    n_scene: int
    n_human: int
    pose: PoseCache | None


@dataclass
class Reconstruction:
    """
    Attributes:
        human: animatable avatar, or None for scene-only reconstructions
        scene: world-space scene cloud, or None
        scene_translation: T_s applied to the posed human
    """

    human: HumanAvatar | None = None
    scene: GaussianCloud | None = None
    scene_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.human is None and self.scene is None:
            raise PreconditionError("A reconstruction needs a human, a scene, or both")
        self.scene_translation = np.asarray(self.scene_translation, dtype=np.float64).reshape(3)

    def __len__(self) -> int:
        return (len(self.human) if self.human else 0) + (len(self.scene) if self.scene else 0)

    def compose(self, frame: PoseFrame | None = None) -> tuple[GaussianCloud, ComposeCache]:
        """World cloud (scene first, then posed human) for one body pose; rest pose when frame is None"""
        posed, pose_cache = None, None
        if self.human is not None:
            frame = frame or PoseFrame.rest(self.human.skeleton.n_joints)
            posed, pose_cache = self.human.pose(frame)
        cloud = fuse_scene(posed, self.scene, self.scene_translation)
        n_scene = len(self.scene) if self.scene is not None else 0
        return cloud, ComposeCache(n_scene, len(posed) if posed is not None else 0, pose_cache)

    def backward(self, cache: ComposeCache, grads: CloudGrads) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        if self.scene is not None:
            scene_grads = grads.slice(0, cache.n_scene)
            out.update({f"{SCENE_PREFIX}.{k}": v for k, v in scene_grads.as_dict().items()})
        if self.human is not None:
            human_grads = grads.slice(cache.n_scene, cache.n_scene + cache.n_human)
            out.update(self.human.backward(cache.pose, human_grads.as_dict()))
        return out

    def parameters(self) -> dict[str, np.ndarray]:
        params: dict[str, np.ndarray] = {}
        if self.scene is not None:
            params.update({f"{SCENE_PREFIX}.{name}": getattr(self.scene, name) for name in CLOUD_FIELDS})
        if self.human is not None:
            params.update(self.human.parameters())
        return params

    def with_parameters(self, params: dict[str, np.ndarray]) -> "Reconstruction":
        scene = self.scene
        if scene is not None:
            fields = {name: params.get(f"{SCENE_PREFIX}.{name}", getattr(scene, name)) for name in CLOUD_FIELDS}
            if len(fields["rotations"]):
                fields["rotations"] = quat_normalize(fields["rotations"])
            scene = GaussianCloud(**fields, space=SpaceTag.WORLD)
        human = self.human.with_parameters(params) if self.human is not None else None
        return Reconstruction(human, scene, self.scene_translation)

    def copy(self) -> "Reconstruction":
        return Reconstruction(
            self.human.copy() if self.human is not None else None,
            self.scene.copy() if self.scene is not None else None,
            self.scene_translation.copy(),
        )

    def at_storage_precision(self) -> "Reconstruction":
        """Copy whose Gaussian attributes match what a checkpoint reload yields"""
        human = None
        if self.human is not None:
            h = self.human
            human = HumanAvatar(h.canonical.at_storage_precision(), h.skeleton, h.weights, h.deformer)
        scene = self.scene.at_storage_precision() if self.scene is not None else None
        return Reconstruction(human, scene, self.scene_translation.copy())
