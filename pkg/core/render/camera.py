"""
Pinhole Camera
World-to-camera convention: right-handed, +x right, +y down, +z forward
"""

from dataclasses import dataclass

import numpy as np

from core.errors import PreconditionError
from core.gaussians.cloud import Gaussian, build_covariance

RIGID_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def from_fov(cls, width: int, height: int, fov_x_deg: float) -> "Intrinsics":
        fx = 0.5 * width / np.tan(0.5 * np.radians(fov_x_deg))
        return cls(width, height, fx, fx, 0.5 * width, 0.5 * height)


@dataclass(frozen=True, eq=False)
class Camera:
    """
    Attributes:
        width, height: image size in pixels
        fx, fy, cx, cy: pinhole intrinsics in pixels; pixel (row y, col x) is
            sampled at image coordinates (x + 0.5, y + 0.5)
        world_to_camera: 4×4 rigid transform
    """

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    world_to_camera: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.world_to_camera, dtype=np.float64)
        object.__setattr__(self, "world_to_camera", m)
        if m.shape != (4, 4):
            raise PreconditionError(f"world_to_camera must be 4×4, got {m.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise PreconditionError(f"Focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width < 0 or self.height < 0:
            raise PreconditionError("Image size cannot be negative")
        rot = m[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=RIGID_TOLERANCE) or np.linalg.det(rot) < 0:
            raise PreconditionError("world_to_camera rotation is not orthonormal")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates"""
        return -self.rotation.T @ self.translation

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.width, self.height, self.fx, self.fy, self.cx, self.cy)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Camera):
            return NotImplemented
        return self.intrinsics == other.intrinsics and np.array_equal(self.world_to_camera, other.world_to_camera)

    __hash__ = None

    @classmethod
    def from_intrinsics(cls, intrinsics: Intrinsics, world_to_camera: np.ndarray) -> "Camera":
        i = intrinsics
        return cls(i.width, i.height, i.fx, i.fy, i.cx, i.cy, world_to_camera)

    @classmethod
    def look_at(
        cls,
        eye: np.ndarray,
        target: np.ndarray,
        intrinsics: Intrinsics,
        up: np.ndarray = (0.0, 1.0, 0.0),
    ) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(forward)
        if norm <= 0:
            raise PreconditionError("Camera eye and target coincide")
        forward /= norm
        up = np.asarray(up, dtype=np.float64)
        ortho = up - np.dot(up, forward) * forward
        if np.linalg.norm(ortho) < 1e-9:
            alt = np.array([0.0, 0.0, 1.0]) if abs(forward[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
            ortho = alt - np.dot(alt, forward) * forward
        down = -ortho / np.linalg.norm(ortho)
        right = np.cross(down, forward)
        m = np.eye(4)
        m[:3, :3] = np.stack([right, down, forward])
        m[:3, 3] = -m[:3, :3] @ eye
        return cls.from_intrinsics(intrinsics, m)


@dataclass(frozen=True)
class Projection:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float


def project_gaussian(g: Gaussian, cam: Camera, dilation: float = 0.3, near: float = 0.01) -> Projection | None:
    """
    EWA projection of one Gaussian

    Returns:
        Projection, or None when the Gaussian is at or in front of the near plane
    """
    t = cam.rotation @ g.position + cam.translation
    if t[2] <= near:
        return None
    tx, ty, tz = t
    jac = np.array(
        [
            [cam.fx / tz, 0.0, -cam.fx * tx / tz**2],
            [0.0, cam.fy / tz, -cam.fy * ty / tz**2],
        ]
    )
    tr = jac @ cam.rotation
    cov2d = tr @ build_covariance(g.log_scale, g.rotation) @ tr.T + dilation * np.eye(2)
    mean2d = np.array([cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy])
    return Projection(mean2d, 0.5 * (cov2d + cov2d.T), float(tz))
