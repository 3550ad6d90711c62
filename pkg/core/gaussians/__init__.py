"""
Gaussian Core
Gaussian cloud containers, quaternion and SH math, mesh initialisation
"""

from core.gaussians.cloud import (
    Gaussian,
    GaussianCloud,
    SpaceTag,
    build_covariance,
    build_covariances,
    concat_clouds,
    logit,
    sigmoid,
)
from core.gaussians.mesh import Mesh, sample_cloud_from_mesh, sample_skinned_cloud, scene_cloud_from_points
from core.gaussians.quaternion import (
    quat_conjugate,
    quat_from_matrix,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)
from core.gaussians.sh import sh_to_color

__all__ = [
    "Gaussian",
    "GaussianCloud",
    "Mesh",
    "SpaceTag",
    "build_covariance",
    "build_covariances",
    "concat_clouds",
    "logit",
    "quat_conjugate",
    "quat_from_matrix",
    "quat_multiply",
    "quat_normalize",
    "quat_to_matrix",
    "sample_cloud_from_mesh",
    "sample_skinned_cloud",
    "scene_cloud_from_points",
    "sh_to_color",
    "sigmoid",
]
