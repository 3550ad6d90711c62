"""
Pose Sequence Files
JSON: {"fps": 30, "shape": [...], "frames": [{"t": 0.0, "root": [x, y, z],
"rotations": [[w, x, y, z], ...]}]}
"""

from pathlib import Path

import numpy as np
from loguru import logger

from core.articulation.skeleton import PoseFrame
from core.enhance.sequence import PoseSequence
from core.errors import ParseError, PreconditionError
from core.gaussians.quaternion import MIN_NORM
from core.io.jsonio import as_array, read_json, require, write_json

NORM_WARN_TOLERANCE = 1e-3


def parse_pose_sequence(doc, path: str | Path | None = None, n_joints: int | None = None) -> PoseSequence:
    fps = float(require(doc, "fps", path, (int, float)))
    shape = as_array(doc.get("shape", []), (-1,), path, "shape")
    frames_doc = require(doc, "frames", path, list)
    if not frames_doc:
        raise ParseError("Pose sequence has no frames", path=path)
    expected = n_joints
    frames = []
    for i, item in enumerate(frames_doc):
        rotations = as_array(require(item, "rotations", path, list), (-1, 4), path, f"frames[{i}].rotations")
        if expected is None:
            expected = len(rotations)
        if len(rotations) != expected:
            raise ParseError(f"frames[{i}] has {len(rotations)} rotations, expected {expected}", path=path)
        norms = np.linalg.norm(rotations, axis=1)
        if np.any(norms < MIN_NORM):
            raise ParseError(f"frames[{i}] has a zero-length quaternion", path=path)
        if np.any(np.abs(norms - 1.0) > NORM_WARN_TOLERANCE):
            logger.warning(f"pose_quat_normalized frame={i} max_deviation={np.abs(norms - 1.0).max():.4g}")
        root = as_array(item.get("root", [0.0, 0.0, 0.0]), (3,), path, f"frames[{i}].root")
        t = float(require(item, "t", path, (int, float)))
        try:
            frames.append(PoseFrame(rotations / norms[:, None], root, t))
        except PreconditionError as e:
            raise ParseError(f"frames[{i}]: {e}", path=path) from None
    try:
        return PoseSequence(frames, shape, fps)
    except PreconditionError as e:
        raise ParseError(str(e), path=path) from None


def load_pose_sequence(path: str | Path, n_joints: int | None = None) -> PoseSequence:
    """
    Load and validate a pose sequence

    Quaternions are normalised on load (with a warning beyond 1e-3 deviation);
    every frame must carry n_joints rotations (or as many as the first frame).
    """
    seq = parse_pose_sequence(read_json(path), path, n_joints)
    logger.debug(f"poses_loaded path={path} frames={len(seq)} joints={seq.n_joints}")
    return seq


def pose_sequence_document(seq: PoseSequence) -> dict:
    return {
        "fps": seq.fps,
        "shape": seq.shape_params.tolist(),
        "frames": [
            {"t": f.time, "root": f.root_translation.tolist(), "rotations": f.joint_rotations.tolist()}
            for f in seq.frames
        ],
    }


def save_pose_sequence(seq: PoseSequence, path: str | Path) -> None:
    write_json(pose_sequence_document(seq), path)
