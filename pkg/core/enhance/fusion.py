"""
Scene Fusion
Human Gaussians overlaid on scene Gaussians with a scene translation
"""

import numpy as np

from core.errors import PreconditionError
from core.gaussians.cloud import GaussianCloud, SpaceTag, concat_clouds


def fuse_scene(
    human: GaussianCloud | None,
    scene: GaussianCloud | None,
    scene_translation: np.ndarray | None = None,
) -> GaussianCloud:
    """
    Concatenate scene then human, with human positions shifted by T_s

    Args:
        human: posed human cloud (may be None or empty)
        scene: world-space scene cloud (may be None or empty)
        scene_translation: T_s, defaults to zero

    Returns:
        New world-space cloud; inputs are not modified
    """
    t_s = np.zeros(3) if scene_translation is None else np.asarray(scene_translation, dtype=np.float64).reshape(3)
    parts = []
    for name, cloud in (("scene", scene), ("human", human)):
        if cloud is None:
            continue
        if not (np.all(np.isfinite(cloud.positions)) and np.all(np.isfinite(cloud.sh))):
            raise PreconditionError(f"{name} cloud has non-finite attributes")
        parts.append(cloud)
    if human is not None:
        moved = human.replace(positions=human.positions + t_s)
        parts[-1] = moved
    if not parts:
        return GaussianCloud.empty(space=SpaceTag.WORLD)
    return concat_clouds(parts, SpaceTag.WORLD)
