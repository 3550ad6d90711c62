"""
Synthetic Dataset Generator
Renders a posed toy biped (optionally standing in a point-cloud scene) from a
ring of cameras and writes a dataset manifest that `main.py reconstruct` reads
"""

import argparse
import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import numpy as np  # noqa: E402
from loguru import logger  # noqa: E402

from config.config import ModelConfig, RenderConfig  # noqa: E402
from core.articulation.skeleton import PoseFrame  # noqa: E402
from core.articulation.template import toy_avatar  # noqa: E402
from core.enhance.fusion import fuse_scene  # noqa: E402
from core.enhance.sequence import PoseSequence  # noqa: E402
from core.gaussians.mesh import scene_cloud_from_points  # noqa: E402
from core.gaussians.quaternion import IDENTITY, axis_angle_to_quat  # noqa: E402
from core.io.cameras import save_camera  # noqa: E402
from core.io.dataset import TOY_TEMPLATE, view_document  # noqa: E402
from core.io.images import save_mask, save_png  # noqa: E402
from core.io.jsonio import write_json  # noqa: E402
from core.io.ply import PointSet, save_ply  # noqa: E402
from core.io.poses import save_pose_sequence  # noqa: E402
from core.render.camera import Camera, Intrinsics  # noqa: E402
from core.render.rasterizer import GaussianRasterizer  # noqa: E402
from core.training.views import TrainingView  # noqa: E402

BODY_CENTER = np.array([0.0, 1.0, 0.0])
CAMERA_RADIUS = 4.0


def _poses(n_joints: int, count: int) -> PoseSequence:
    """Left leg swinging forward a little more each frame"""
    frames = []
    for i in range(count):
        rotations = np.tile(IDENTITY, (n_joints, 1))
        rotations[3] = axis_angle_to_quat([1.0, 0.0, 0.0], -0.15 * i)
        frames.append(PoseFrame(rotations, np.zeros(3), i / 30.0))
    return PoseSequence(frames, fps=30.0)


def _scene_points(rng: np.random.Generator, count: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Ground plane patch behind the body"""
    xz = rng.uniform([-1.5, -1.5], [1.5, -0.5], size=(count, 2))
    points = np.stack([xz[:, 0], np.zeros(count), xz[:, 1]], axis=1)
    colors = np.tile([90, 120, 60], (count, 1)) + rng.integers(-20, 20, size=(count, 3))
    return points, np.clip(colors, 0, 255).astype(np.uint8)


def write_fixture(
    out_dir: str | Path,
    views: int = 4,
    heldout: int = 1,
    size: int = 32,
    model: ModelConfig | None = None,
    seed: int = 0,
    with_scene: bool = False,
) -> Path:
    """
    Write images, masks, poses and the manifest; returns the manifest path

    The ground-truth avatar uses seed + 100 so a reconstruction started from
    `seed` has something to fit.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    model = model or ModelConfig(init_points=300, triplane_resolution=8, feature_dim=8)
    truth = toy_avatar(model, seed=seed + 100)
    total = views + heldout
    poses = _poses(truth.skeleton.n_joints, total)
    save_pose_sequence(poses, out_dir / "poses.json")

    scene_cloud = None
    if with_scene:
        points, colors = _scene_points(rng)
        save_ply(PointSet(points, colors), out_dir / "scene.ply")
        scene_cloud = scene_cloud_from_points(points, colors / 255.0, sh_degree=model.sh_degree)

    intrinsics = Intrinsics.from_fov(size, size, 60.0)
    rasterizer = GaussianRasterizer(RenderConfig())
    entries = []
    for i in range(total):
        phi = 2.0 * np.pi * i / total
        eye = BODY_CENTER + CAMERA_RADIUS * np.array([np.sin(phi), 0.1, np.cos(phi)])
        camera = Camera.look_at(eye, BODY_CENTER, intrinsics)
        posed, _ = truth.pose(poses.frames[i])
        cloud = fuse_scene(posed, scene_cloud)
        out = rasterizer.forward(cloud, camera)
        human_alpha = rasterizer.forward(posed, camera).alpha if with_scene else out.alpha

        image_name, mask_name = f"view_{i:03d}.png", f"mask_{i:03d}.png"
        save_png(out.color, out_dir / image_name)
        save_mask(human_alpha > 0.5, out_dir / mask_name)
        save_camera(camera, out_dir / f"camera_{i:03d}.json")
        view = TrainingView(out.color, camera, human_alpha > 0.5, poses.frames[i], f"v{i:03d}")
        entries.append(view_document(view, image_name, mask_name, frame=i))

    manifest = {
        "template": TOY_TEMPLATE,
        "scene": "scene.ply" if with_scene else None,
        "scene_translation": [0.0, 0.0, 0.0],
        "poses": "poses.json",
        "views": entries[:views],
        "heldout": entries[views:],
    }
    path = out_dir / "dataset.json"
    write_json(manifest, path)
    logger.success(f"fixture_written path={path} views={views} heldout={heldout} size={size}")
    return path


def main() -> int:
    parser = argparse.ArgumentParser(description="Write a synthetic toy-biped dataset")
    parser.add_argument("out", type=Path, help="Output directory")
    parser.add_argument("--views", type=int, default=4)
    parser.add_argument("--heldout", type=int, default=1)
    parser.add_argument("--size", type=int, default=32, help="Image width and height in pixels")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--scene", action="store_true", help="Add a coloured ground-plane point cloud")
    args = parser.parse_args()
    write_fixture(args.out, args.views, args.heldout, args.size, seed=args.seed, with_scene=args.scene)
    return 0


if __name__ == "__main__":
    sys.exit(main())
