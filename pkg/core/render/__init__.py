"""
Splat Renderer
Pinhole cameras and the differentiable Gaussian rasterizer
"""

from core.render.camera import Camera, Intrinsics, Projection, project_gaussian
from core.render.rasterizer import (
    CloudGrads,
    GaussianRasterizer,
    RenderOutput,
    depth_sort,
    render,
    render_backward,
    render_naive,
)

__all__ = [
    "Camera",
    "CloudGrads",
    "GaussianRasterizer",
    "Intrinsics",
    "Projection",
    "RenderOutput",
    "depth_sort",
    "project_gaussian",
    "render",
    "render_backward",
    "render_naive",
]
