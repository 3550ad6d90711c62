"""
Tests for Pose Sequences, Trajectories, Scene Fusion and Iterative Enhancement
"""

import math
import sys

import numpy as np
import pytest

from config.config import DensityControl, EnhanceConfig, LossWeights, RenderConfig, TrainConfig
from core.articulation.skeleton import PoseFrame
from core.enhance import (
    CameraTrajectory,
    ExternalEnhancer,
    IdentityEnhancer,
    PoseSequence,
    UnsharpMaskEnhancer,
    apply_pose_sequence,
    check_enhanced,
    fuse_scene,
    generate_synthetic_views,
    make_enhancer,
    make_orbit_trajectory,
    orbit_around,
)
from core.enhance.iterative import iterative_enhance
from core.errors import EnhancerError, PreconditionError, ShapeMismatchError
from core.gaussians.cloud import GaussianCloud
from core.gaussians.mesh import scene_cloud_from_points
from core.gaussians.quaternion import axis_angle_to_quat
from core.losses.metrics import psnr
from core.render.camera import Camera, Intrinsics
from core.render.rasterizer import render
from core.training.reconstruction import Reconstruction

CENTER = np.array([0.0, 1.0, 0.0])


@pytest.fixture
def intrinsics():
    return Intrinsics.from_fov(24, 24, 60.0)


@pytest.fixture
def orbit(intrinsics):
    return make_orbit_trajectory(CENTER, 4.0, 0.0, 3, intrinsics)


class CountingEnhancer:
    """Identity refiner that counts calls and can misbehave on a given call"""

    def __init__(self, fail_on: int | None = None, mode: str = "count"):
        self.calls = 0
        self.sizes = []
        self.fail_on = fail_on
        self.mode = mode

    def __call__(self, frames):
        self.calls += 1
        self.sizes.append(len(frames))
        if self.calls == self.fail_on:
            if self.mode == "count":
                return frames[:-1]
            if self.mode == "nan":
                return [np.full_like(f, np.nan) for f in frames]
            raise EnhancerError("refiner crashed")
        return [np.clip(f + 0.05, 0.0, 1.0) for f in frames]


class TestPoseSequence:
    """Timed pose lists and avatar animation"""

    def test_times_strictly_increasing(self):
        frames = [PoseFrame.rest(3, 0.0), PoseFrame.rest(3, 0.0)]
        with pytest.raises(PreconditionError):
            PoseSequence(frames)

    def test_joint_counts_agree(self):
        with pytest.raises(ShapeMismatchError):
            PoseSequence([PoseFrame.rest(3, 0.0), PoseFrame.rest(4, 0.1)])

    def test_rest_sequence(self):
        seq = PoseSequence.rest(5, count=3, fps=10.0)
        assert len(seq) == 3 and seq.n_joints == 5
        assert [f.time for f in seq.frames] == pytest.approx([0.0, 0.1, 0.2])

    def test_apply_matches_single_pose(self, small_avatar):
        """Each animated frame equals posing the avatar directly"""
        n = small_avatar.skeleton.n_joints
        rotations = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        rotations[3] = axis_angle_to_quat(np.array([1.0, 0.0, 0.0]), -0.4)
        bent = PoseFrame(rotations, [0.1, 0.0, 0.0], 0.5)
        seq = PoseSequence([PoseFrame.rest(n, 0.0), bent])
        clouds = apply_pose_sequence(small_avatar, seq)
        assert len(clouds) == 2
        for cloud, frame in zip(clouds, seq.frames):
            direct, _ = small_avatar.pose(frame)
            np.testing.assert_allclose(cloud.positions, direct.positions, atol=1e-10)
            np.testing.assert_allclose(cloud.sh, direct.sh, atol=1e-12)

    def test_apply_joint_mismatch(self, small_avatar):
        with pytest.raises(ShapeMismatchError):
            apply_pose_sequence(small_avatar, PoseSequence.rest(small_avatar.skeleton.n_joints + 1))


class TestTrajectory:
    """Orbits and synthetic views"""

    def test_orbit_geometry(self, intrinsics):
        traj = make_orbit_trajectory(CENTER, 2.0, 0.5, 8, intrinsics, fps=8.0)
        assert len(traj) == 8
        assert traj.times == pytest.approx([k / 8.0 for k in range(8)])
        for cam in traj.cameras:
            assert np.linalg.norm(cam.center - CENTER) == pytest.approx(math.sqrt(2.0**2 + 0.5**2))
            assert cam.center[1] == pytest.approx(1.5)

    def test_single_camera_on_plus_x(self, intrinsics):
        traj = make_orbit_trajectory(CENTER, 3.0, 0.0, 1, intrinsics)
        np.testing.assert_allclose(traj.cameras[0].center, CENTER + [3.0, 0.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("radius,count", [(0.0, 4), (1.0, 0)])
    def test_orbit_preconditions(self, intrinsics, radius, count):
        with pytest.raises(PreconditionError):
            make_orbit_trajectory(CENTER, radius, 0.0, count, intrinsics)

    def test_orbit_around_cloud(self, small_cloud, intrinsics):
        traj = orbit_around(small_cloud, intrinsics, count=4, radius_scale=2.0)
        center, radius = small_cloud.bounding_sphere()
        for cam in traj.cameras:
            assert np.linalg.norm(cam.center - center) == pytest.approx(2.0 * radius)

    def test_times_non_decreasing(self, orbit):
        cams = orbit.cameras
        CameraTrajectory([(0.0, cams[0]), (0.0, cams[1])])
        with pytest.raises(PreconditionError):
            CameraTrajectory([(1.0, cams[0]), (0.5, cams[1])])
        with pytest.raises(PreconditionError):
            CameraTrajectory([])

    def test_synthetic_views(self, small_avatar, orbit, render_cfg):
        cloud, _ = small_avatar.pose(PoseFrame.rest(small_avatar.skeleton.n_joints))
        frames = generate_synthetic_views(cloud, orbit, settings=render_cfg)
        assert len(frames) == 3
        assert all(f.shape == (24, 24, 3) for f in frames)
        assert any(f.max() > 0 for f in frames)
        with pytest.raises(PreconditionError):
            generate_synthetic_views([cloud, cloud], orbit)


class TestFusion:
    """Scene plus translated human"""

    def test_order_and_translation(self, rng, small_cloud):
        scene = scene_cloud_from_points(rng.normal(size=(4, 3)))
        t_s = np.array([1.0, -2.0, 0.5])
        fused = fuse_scene(small_cloud, scene, t_s)
        assert len(fused) == len(scene) + len(small_cloud)
        np.testing.assert_array_equal(fused.positions[:4], scene.positions)
        np.testing.assert_allclose(fused.positions[4:], small_cloud.positions + t_s)
        np.testing.assert_array_equal(fused.sh[4:], small_cloud.sh)

    def test_inputs_untouched(self, rng, small_cloud):
        before = small_cloud.positions.copy()
        fuse_scene(small_cloud, None, [5.0, 5.0, 5.0])
        np.testing.assert_array_equal(small_cloud.positions, before)

    def test_empty(self):
        assert len(fuse_scene(None, None)) == 0
        assert len(fuse_scene(GaussianCloud.empty(), None, [1.0, 0.0, 0.0])) == 0

    def test_non_finite_rejected(self, small_cloud):
        bad = small_cloud.replace(positions=np.full_like(small_cloud.positions, np.nan))
        with pytest.raises(PreconditionError):
            fuse_scene(bad, None)


class TestEnhancers:
    """Frame-sequence refiners"""

    def test_check_enhanced(self):
        frames = [np.zeros((4, 4, 3))] * 2
        assert len(check_enhanced(frames, frames)) == 2
        with pytest.raises(EnhancerError):
            check_enhanced(frames, frames[:1])
        with pytest.raises(EnhancerError):
            check_enhanced(frames, [np.zeros((4, 5, 3))] * 2)
        with pytest.raises(EnhancerError):
            check_enhanced(frames, [np.full((4, 4, 3), np.inf)] * 2)

    def test_unsharp_flat_frame(self):
        """A constant frame has nothing to sharpen"""
        frame = np.full((6, 6, 3), 0.4)
        np.testing.assert_allclose(UnsharpMaskEnhancer(sigma=1.0, amount=2.0)([frame])[0], frame)

    def test_unsharp_boosts_edges(self):
        frame = np.zeros((8, 8, 3))
        frame[:, 4:] = 0.5
        out = UnsharpMaskEnhancer(sigma=1.0, amount=1.0)([frame])[0]
        assert out[0, 4, 0] > 0.5
        assert np.all((out >= 0.0) & (out <= 1.0))

    def test_make_enhancer(self):
        assert isinstance(make_enhancer(EnhanceConfig()), IdentityEnhancer)
        assert isinstance(make_enhancer(EnhanceConfig(enhancer="unsharp")), UnsharpMaskEnhancer)
        with pytest.raises(EnhancerError):
            make_enhancer(EnhanceConfig(enhancer="external"))

    def test_external_round_trip(self, rng):
        """A command that copies its input directory returns the same frames"""
        script = "import shutil, sys, pathlib; [shutil.copy(p, sys.argv[2]) for p in pathlib.Path(sys.argv[1]).iterdir()]"
        frames = [rng.uniform(size=(5, 6, 3)) for _ in range(2)]
        out = ExternalEnhancer([sys.executable, "-c", script])(frames)
        assert len(out) == 2
        np.testing.assert_allclose(out[0], frames[0], atol=1.0 / 255)

    def test_external_failure(self):
        with pytest.raises(EnhancerError):
            ExternalEnhancer([sys.executable, "-c", "import sys; sys.exit(3)"])([np.zeros((2, 2, 3))])
        with pytest.raises(EnhancerError):
            ExternalEnhancer(["/nonexistent/enhancer-binary"])([np.zeros((2, 2, 3))])


class TestIterativeEnhance:
    """Outer render-enhance loop with inner training steps"""

    def test_call_and_step_counts(self, small_avatar, orbit, fast_train_cfg, render_cfg):
        enhancer = CountingEnhancer()
        result = iterative_enhance(Reconstruction(human=small_avatar), enhancer, orbit, fast_train_cfg, None, render_cfg)
        e, t = fast_train_cfg.enhance_outer_E, fast_train_cfg.enhance_inner_T
        assert enhancer.calls == e == result.enhancer_calls
        assert enhancer.sizes == [len(orbit)] * e
        assert result.inner_steps == e * t
        assert result.outer_iterations == e
        assert not result.aborted

    def test_input_untouched(self, small_avatar, orbit, fast_train_cfg, render_cfg):
        recon = Reconstruction(human=small_avatar.copy())
        before = recon.human.canonical.sh.copy()
        iterative_enhance(recon, CountingEnhancer(), orbit, fast_train_cfg, None, render_cfg)
        np.testing.assert_array_equal(recon.human.canonical.sh, before)

    def test_identity_is_fixed_point(self, small_avatar, orbit, fast_train_cfg, render_cfg):
        """Frames that already match the renders produce zero loss and no movement"""
        cfg = fast_train_cfg.model_copy(update={"loss": fast_train_cfg.loss.model_copy(update={"lambda2": 0.0})})
        recon = Reconstruction(human=small_avatar)
        result = iterative_enhance(recon, IdentityEnhancer(), orbit, cfg, None, render_cfg)
        assert all(loss == 0.0 for report in result.reports for loss in report.losses)
        for name, value in result.recon.parameters().items():
            np.testing.assert_allclose(value, recon.parameters()[name], atol=1e-12, err_msg=name)

    @pytest.mark.parametrize("mode", ["count", "nan", "raise"])
    def test_abort_keeps_last_complete(self, small_avatar, orbit, fast_train_cfg, render_cfg, mode):
        cfg = fast_train_cfg.model_copy(update={"enhance_outer_E": 3})
        result = iterative_enhance(
            Reconstruction(human=small_avatar), CountingEnhancer(fail_on=2, mode=mode), orbit, cfg, None, render_cfg
        )
        assert result.aborted
        assert result.outer_iterations == 1
        assert result.enhancer_calls == 2
        assert result.inner_steps == cfg.enhance_inner_T

    def test_abort_on_first_call(self, small_avatar, orbit, fast_train_cfg, render_cfg):
        recon = Reconstruction(human=small_avatar)
        result = iterative_enhance(recon, CountingEnhancer(fail_on=1, mode="raise"), orbit, fast_train_cfg, None, render_cfg)
        assert result.aborted and result.outer_iterations == 0
        np.testing.assert_array_equal(result.recon.human.canonical.positions, small_avatar.canonical.positions)

    def test_human_only_scope_freezes_scene(self, rng, small_avatar, orbit, fast_train_cfg, render_cfg):
        scene = scene_cloud_from_points(rng.uniform(-1.0, 1.0, size=(10, 3)) + CENTER, np.full((10, 3), 0.3))
        recon = Reconstruction(small_avatar, scene)
        result = iterative_enhance(
            recon, CountingEnhancer(), orbit, fast_train_cfg, EnhanceConfig(scope="human_only"), render_cfg
        )
        np.testing.assert_array_equal(result.recon.scene.sh, scene.sh)
        np.testing.assert_array_equal(result.recon.scene.positions, scene.positions)
        assert not np.array_equal(result.recon.human.canonical.sh, small_avatar.canonical.sh)

    def test_pose_count_must_match(self, small_avatar, orbit, fast_train_cfg, render_cfg):
        poses = PoseSequence.rest(small_avatar.skeleton.n_joints, count=2)
        with pytest.raises(PreconditionError):
            iterative_enhance(
                Reconstruction(human=small_avatar), IdentityEnhancer(), orbit, fast_train_cfg, None, render_cfg, poses
            )

    def test_posed_rounds(self, small_avatar, orbit, fast_train_cfg, render_cfg):
        poses = PoseSequence.rest(small_avatar.skeleton.n_joints, count=len(orbit))
        result = iterative_enhance(
            Reconstruction(human=small_avatar), CountingEnhancer(), orbit, fast_train_cfg, None, render_cfg, poses
        )
        assert result.outer_iterations == fast_train_cfg.enhance_outer_E


@pytest.mark.slow
class TestEnhanceRuns:
    """Full-length enhancement runs on small scenes"""

    @staticmethod
    def _scene_cfg(outer: int, inner: int) -> TrainConfig:
        return TrainConfig(
            seed=4,
            log_interval=inner,
            density=DensityControl(enabled=False),
            loss=LossWeights(lambda3=0.0, perceptual_backend="none"),
            trainable=["scene"],
            enhance_outer_E=outer,
            enhance_inner_T=inner,
        )

    def test_sharpening_recovers_blurred_scene(self):
        """Unsharp-masked renders pull an over-blurred cloud back towards the sharp one"""
        rng = np.random.default_rng(21)
        points = rng.uniform(-0.6, 0.6, size=(30, 3)) + CENTER
        sharp = scene_cloud_from_points(points, rng.uniform(0.2, 0.9, size=(30, 3)), init_opacity=0.9)
        sharp = sharp.replace(log_scales=np.full((30, 3), math.log(0.08)))
        blurred = sharp.replace(log_scales=sharp.log_scales + math.log(2.0))

        intrinsics = Intrinsics.from_fov(32, 32, 40.0)
        render_cfg = RenderConfig(tile_size=8)
        traj = make_orbit_trajectory(CENTER, 4.0, 0.0, 6, intrinsics)
        unseen = Camera.look_at(CENTER + np.array([4.0 * math.cos(0.5), 1.0, 4.0 * math.sin(0.5)]), CENTER, intrinsics)
        target = render(sharp, unseen, settings=render_cfg).color

        before = psnr(render(blurred, unseen, settings=render_cfg).color, target)
        result = iterative_enhance(
            Reconstruction(scene=blurred), UnsharpMaskEnhancer(), traj, self._scene_cfg(2, 150), None, render_cfg
        )
        after = psnr(render(result.recon.scene, unseen, settings=render_cfg).color, target)

        assert not result.aborted
        assert after > before

    def test_full_inner_length(self):
        """enhance_inner_T = 2500 runs exactly E · T training steps with E enhancer calls"""
        rng = np.random.default_rng(22)
        scene = scene_cloud_from_points(rng.uniform(-0.3, 0.3, size=(3, 3)) + CENTER, rng.uniform(size=(3, 3)))
        traj = make_orbit_trajectory(CENTER, 4.0, 0.0, 2, Intrinsics.from_fov(8, 8, 60.0))
        enhancer = CountingEnhancer()
        result = iterative_enhance(
            Reconstruction(scene=scene), enhancer, traj, self._scene_cfg(2, 2500), None, RenderConfig(tile_size=8)
        )

        assert enhancer.calls == 2 == result.enhancer_calls
        assert [report.iterations for report in result.reports] == [2500, 2500]
        assert result.inner_steps == 2 * 2500
