"""
Datasets
Avatar templates (skeleton + skinned mesh) and the reconstruction dataset
manifest tying images, masks, cameras and poses together
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger

from core.articulation.skeleton import Skeleton, translation_matrix
from core.enhance.sequence import PoseSequence
from core.errors import AvatarError, ParseError
from core.gaussians.mesh import Mesh
from core.io.cameras import camera_document, load_camera, parse_camera
from core.io.images import load_image, load_mask
from core.io.jsonio import as_array, read_json, require, write_json
from core.io.ply import PointSet, load_ply
from core.io.poses import load_pose_sequence
from core.training.views import TrainingView

TOY_TEMPLATE = "toy_biped"


@dataclass
class AvatarTemplate:
    skeleton: Skeleton
    mesh: Mesh


@dataclass
class Dataset:
    """Everything `reconstruct` needs: template, optional scene points, views"""

    views: list[TrainingView]
    template: AvatarTemplate | None = None
    scene_points: PointSet | None = None
    scene_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    heldout: list[TrainingView] = field(default_factory=list)


def parse_avatar_template(doc, path: str | Path | None = None) -> AvatarTemplate:
    """
    {"joints": [{"name", "parent", "offset": [3] | "rest_local": 4×4}], "shape": [...],
     "vertices": [[x, y, z]], "faces": [[i, j, k]], "skin_weights": [[w_0 .. w_J-1]]}
    """
    joints = require(doc, "joints", path, list)
    if not joints:
        raise ParseError("Template has no joints", path=path)
    parents, rest, names = [], [], []
    for i, joint in enumerate(joints):
        parents.append(int(require(joint, "parent", path, int)))
        names.append(str(joint.get("name", f"joint{i}")))
        if "rest_local" in joint:
            rest.append(as_array(joint["rest_local"], (4, 4), path, f"joints[{i}].rest_local"))
        else:
            rest.append(translation_matrix(as_array(joint.get("offset", [0, 0, 0]), (3,), path, f"joints[{i}].offset")))
    vertices = as_array(require(doc, "vertices", path, list), (-1, 3), path, "vertices")
    faces = as_array(doc.get("faces", []) or np.zeros((0, 3)), (-1, 3), path, "faces")
    weights = as_array(require(doc, "skin_weights", path, list), (len(vertices), len(joints)), path, "skin_weights")
    if np.any(faces != np.round(faces)):
        raise ParseError("Face indices must be integers", path=path)
    try:
        skeleton = Skeleton(tuple(parents), np.stack(rest), doc.get("shape", []), tuple(names))
        mesh = Mesh(vertices, faces.astype(np.int64), weights)
    except AvatarError as e:
        raise ParseError(f"Invalid template: {e}", path=path) from None
    return AvatarTemplate(skeleton, mesh)


def load_avatar_template(path: str | Path) -> AvatarTemplate:
    if str(path) == TOY_TEMPLATE:
        from core.articulation.template import toy_biped, toy_biped_mesh

        return AvatarTemplate(toy_biped(), toy_biped_mesh())
    template = parse_avatar_template(read_json(path), path)
    logger.debug(
        f"template_loaded path={path} joints={template.skeleton.n_joints} vertices={len(template.mesh.vertices)}"
    )
    return template


def save_avatar_template(template: AvatarTemplate, path: str | Path) -> None:
    skel, mesh = template.skeleton, template.mesh
    names = skel.joint_names or tuple(f"joint{i}" for i in range(skel.n_joints))
    write_json(
        {
            "joints": [
                {"name": n, "parent": p, "rest_local": m.tolist()}
                for n, p, m in zip(names, skel.parents, skel.rest_local_transforms)
            ],
            "shape": skel.shape_params.tolist(),
            "vertices": mesh.vertices.tolist(),
            "faces": mesh.faces.tolist(),
            "skin_weights": mesh.skin_weights.tolist(),
        },
        path,
    )


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _load_views(items, base: Path, poses: PoseSequence | None, path) -> list[TrainingView]:
    views = []
    for i, item in enumerate(items):
        view_id = str(item.get("id", i)) if isinstance(item, dict) else str(i)
        image = load_image(_resolve(base, require(item, "image", path, str)))
        camera_ref = require(item, "camera", path, (str, dict))
        camera = parse_camera(camera_ref, path) if isinstance(camera_ref, dict) else load_camera(_resolve(base, camera_ref))
        mask_path = _resolve(base, item.get("mask"))
        mask = load_mask(mask_path) if mask_path else None
        pose = None
        if "frame" in item and item["frame"] is not None:
            if poses is None:
                raise ParseError(f"View {view_id} names a pose frame but the manifest has no poses", path=path)
            frame = int(item["frame"])
            if not 0 <= frame < len(poses):
                raise ParseError(f"View {view_id}: pose frame {frame} out of range", path=path)
            pose = poses.frames[frame]
        try:
            views.append(TrainingView(image, camera, mask, pose, view_id))
        except AvatarError as e:
            raise ParseError(str(e), path=path) from None
    return views


def load_dataset(path: str | Path) -> Dataset:
    """
    Read a dataset manifest (paths are relative to the manifest)

    {"template": "avatar.json" | "toy_biped" | null, "scene": "points.ply" | null,
     "scene_translation": [x, y, z], "poses": "poses.json" | null,
     "views": [{"id", "image", "mask", "camera", "frame"}], "heldout": [...same...]}
    """
    path = Path(path)
    base = path.parent
    doc = read_json(path)
    template_ref = doc.get("template")
    template = None
    if template_ref:
        template = load_avatar_template(template_ref if template_ref == TOY_TEMPLATE else _resolve(base, template_ref))
    n_joints = template.skeleton.n_joints if template else None
    poses = load_pose_sequence(_resolve(base, doc["poses"]), n_joints) if doc.get("poses") else None
    scene = load_ply(_resolve(base, doc["scene"])) if doc.get("scene") else None
    if template is None and scene is None:
        raise ParseError("Dataset needs a template, a scene, or both", path=path)
    views = _load_views(require(doc, "views", path, list), base, poses, path)
    heldout = _load_views(doc.get("heldout", []), base, poses, path)
    translation = as_array(doc.get("scene_translation", [0.0, 0.0, 0.0]), (3,), path, "scene_translation")
    logger.info(f"dataset_loaded path={path} views={len(views)} heldout={len(heldout)} scene={scene is not None}")
    return Dataset(views, template, scene, translation, heldout)


def view_document(view: TrainingView, image: str, mask: str | None = None, frame: int | None = None) -> dict:
    """Manifest entry for a view whose files were written by the caller"""
    entry = {"id": view.view_id, "image": image, "camera": camera_document(view.camera)}
    if mask is not None:
        entry["mask"] = mask
    if frame is not None:
        entry["frame"] = frame
    return entry

