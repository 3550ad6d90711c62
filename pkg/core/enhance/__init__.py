"""
Enhancement
Pose-sequence animation, scene fusion, novel views and sequence enhancers.
The iterative loop lives in core.enhance.iterative (it depends on the trainer).
"""

from core.enhance.enhancers import (
    ExternalEnhancer,
    IdentityEnhancer,
    SequenceEnhancer,
    UnsharpMaskEnhancer,
    check_enhanced,
    make_enhancer,
)
from core.enhance.fusion import fuse_scene
from core.enhance.sequence import PoseSequence, apply_pose_sequence
from core.enhance.trajectory import CameraTrajectory, generate_synthetic_views, make_orbit_trajectory, orbit_around

__all__ = [
    "CameraTrajectory",
    "ExternalEnhancer",
    "IdentityEnhancer",
    "PoseSequence",
    "SequenceEnhancer",
    "UnsharpMaskEnhancer",
    "apply_pose_sequence",
    "check_enhanced",
    "fuse_scene",
    "generate_synthetic_views",
    "make_enhancer",
    "make_orbit_trajectory",
    "orbit_around",
]
