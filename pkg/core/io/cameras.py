"""
Camera Files
JSON {width, height, fx, fy, cx, cy, rotation (3×3 row-major), translation}
holding the world-to-camera transform (+z forward, +y down), and trajectories
as {"fps": ..., "cameras": [{"t": ..., <camera fields>}]}
"""

from pathlib import Path

import numpy as np

from core.enhance.trajectory import CameraTrajectory
from core.errors import ParseError, PreconditionError
from core.io.jsonio import as_array, read_json, require, write_json
from core.render.camera import Camera


def camera_document(cam: Camera) -> dict:
    return {
        "width": cam.width,
        "height": cam.height,
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "rotation": cam.rotation.tolist(),
        "translation": cam.translation.tolist(),
    }


def parse_camera(doc, path: str | Path | None = None) -> Camera:
    width = require(doc, "width", path, int)
    height = require(doc, "height", path, int)
    focal = [float(require(doc, k, path, (int, float))) for k in ("fx", "fy", "cx", "cy")]
    rotation = as_array(require(doc, "rotation", path, list), (3, 3), path, "rotation")
    translation = as_array(require(doc, "translation", path, list), (3,), path, "translation")
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    try:
        return Camera(width, height, *focal, m)
    except PreconditionError as e:
        raise ParseError(str(e), path=path) from None


def load_camera(path: str | Path) -> Camera:
    return parse_camera(read_json(path), path)


def save_camera(cam: Camera, path: str | Path) -> None:
    write_json(camera_document(cam), path)


def load_trajectory(path: str | Path) -> CameraTrajectory:
    doc = read_json(path)
    cameras = require(doc, "cameras", path, list)
    entries = [(float(require(c, "t", path, (int, float))), parse_camera(c, path)) for c in cameras]
    try:
        return CameraTrajectory(entries)
    except PreconditionError as e:
        raise ParseError(str(e), path=path) from None


def save_trajectory(traj: CameraTrajectory, path: str | Path) -> None:
    write_json({"cameras": [{"t": t, **camera_document(cam)} for t, cam in traj.entries]}, path)
