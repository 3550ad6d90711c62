"""
Camera Trajectories
Timed camera paths and novel-view synthesis along them
"""

import math
from dataclasses import dataclass

import numpy as np
from loguru import logger

from config.config import RenderConfig
from core.errors import PreconditionError
from core.gaussians.cloud import GaussianCloud
from core.render.camera import Camera, Intrinsics
from core.render.rasterizer import GaussianRasterizer


@dataclass
class CameraTrajectory:
    """(time, camera) entries with non-decreasing times"""

    entries: list[tuple[float, Camera]]

    def __post_init__(self):
        if not self.entries:
            raise PreconditionError("A camera trajectory needs at least one entry")
        times = [t for t, _ in self.entries]
        if any(b < a for a, b in zip(times, times[1:])):
            raise PreconditionError("Trajectory times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def cameras(self) -> list[Camera]:
        return [cam for _, cam in self.entries]

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.entries]


def make_orbit_trajectory(
    center: np.ndarray,
    radius: float,
    height: float,
    count: int,
    intrinsics: Intrinsics,
    fps: float = 24.0,
) -> CameraTrajectory:
    """
    Cameras evenly spaced in azimuth on a circle around center, all looking at it

    Camera k sits at center + (r·cos φ, height, r·sin φ) with φ = 2πk / count,
    so a single camera lies on the +x axis.
    """
    if radius <= 0:
        raise PreconditionError(f"Orbit radius must be > 0, got {radius}")
    if count < 1:
        raise PreconditionError(f"Orbit needs count >= 1, got {count}")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    entries = []
    for k in range(count):
        phi = 2.0 * math.pi * k / count
        eye = center + np.array([radius * math.cos(phi), height, radius * math.sin(phi)])
        entries.append((k / fps, Camera.look_at(eye, center, intrinsics)))
    return CameraTrajectory(entries)


def orbit_around(cloud: GaussianCloud, intrinsics: Intrinsics, count: int = 16, radius_scale: float = 1.2, height: float = 0.0, fps: float = 24.0) -> CameraTrajectory:
    """Orbit at radius_scale × the cloud's bounding-sphere radius"""
    center, radius = cloud.bounding_sphere()
    return make_orbit_trajectory(center, radius * radius_scale, height, count, intrinsics, fps)


def generate_synthetic_views(
    source: GaussianCloud | list[GaussianCloud],
    traj: CameraTrajectory,
    background: np.ndarray | None = None,
    settings: RenderConfig | None = None,
) -> list[np.ndarray]:
    """
    Render one image per trajectory entry

    A single cloud is rendered from every camera; a list of posed clouds is
    paired with the cameras one to one.
    """
    clouds = source if isinstance(source, list) else [source] * len(traj)
    if len(clouds) != len(traj):
        raise PreconditionError(f"{len(clouds)} posed clouds for {len(traj)} trajectory cameras")
    rasterizer = GaussianRasterizer(settings)
    frames = [rasterizer.forward(cloud, cam, background).color for cloud, cam in zip(clouds, traj.cameras)]
    logger.debug(f"synthetic_views frames={len(frames)}")
    return frames
