"""
Training Views
Observed images with masks, cameras and poses, and the seeded view sampler
"""

from dataclasses import dataclass

import numpy as np

from core.articulation.skeleton import PoseFrame
from core.errors import EmptyTrainingSetError, ShapeMismatchError
from core.render.camera import Camera


@dataclass
class TrainingView:
    """One observation: RGB image in [0, 1], optional foreground mask, camera, body pose"""

    image: np.ndarray
    camera: Camera
    mask: np.ndarray | None = None
    pose: PoseFrame | None = None
    view_id: str = "0"

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.shape != (self.camera.height, self.camera.width, 3):
            raise ShapeMismatchError(
                f"View {self.view_id}: image {self.image.shape} does not match camera "
                f"{self.camera.width}×{self.camera.height}"
            )
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)
            if self.mask.shape != self.image.shape[:2]:
                raise ShapeMismatchError(f"View {self.view_id}: mask {self.mask.shape} vs image {self.image.shape}")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.camera.width, self.camera.height


def check_views(views: list[TrainingView]) -> None:
    """At least one view, all at the same resolution"""
    if not views:
        raise EmptyTrainingSetError("No training views")
    resolutions = {v.resolution for v in views}
    if len(resolutions) > 1:
        raise ShapeMismatchError(f"Views have inconsistent resolutions: {sorted(resolutions)}")


class ViewSampler:
    """Uniform random view choice with a fixed seed, or round-robin when sampling is off"""

    def __init__(self, count: int, seed: int = 0, random: bool = True):
        self.count = count
        self.random = random
        self._rng = np.random.default_rng(seed)
        self._cursor = 0

    def next(self) -> int:
        if self.random:
            return int(self._rng.integers(self.count))
        index = self._cursor % self.count
        self._cursor += 1
        return index
