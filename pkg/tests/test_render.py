"""
Unit Tests for Cameras and the Gaussian Rasterizer
"""

import numpy as np
import pytest

from config.config import RenderConfig
from core.errors import PreconditionError, StaleCacheError
from core.gaussians.cloud import GaussianCloud, SpaceTag
from core.gaussians.sh import rgb_to_sh0
from core.render.camera import Camera, Intrinsics, project_gaussian
from core.render.rasterizer import GaussianRasterizer, depth_sort, render, render_naive

# Wide support and no early stop so finite differences never cross a cutoff
SMOOTH = RenderConfig(tile_size=8, support_sigmas=12.0, early_termination=False, alpha_clamp=0.99)


def _single(color, opacity_logit=10.0, depth=2.0, log_scale=0.0):
    return GaussianCloud(
        positions=[[0.0, 0.0, depth]],
        rotations=[[1.0, 0.0, 0.0, 0.0]],
        log_scales=np.full((1, 3), log_scale),
        opacity_logits=[opacity_logit],
        sh=rgb_to_sh0(np.asarray(color, dtype=np.float64))[None, None, :],
        space=SpaceTag.WORLD,
    )


class TestCamera:
    """Pinhole camera conventions"""

    def test_look_at_centre(self):
        """The target projects to the principal point"""
        cam = Camera.look_at([3.0, 1.0, -2.0], [0.0, 0.5, 0.0], Intrinsics.from_fov(40, 30, 50.0))
        np.testing.assert_allclose(cam.center, [3.0, 1.0, -2.0], atol=1e-12)
        p = cam.rotation @ np.array([0.0, 0.5, 0.0]) + cam.translation
        assert p[2] > 0
        np.testing.assert_allclose(p[:2], 0.0, atol=1e-12)

    def test_look_at_up_is_minus_y(self):
        """World +y points up the image (towards smaller row indices)"""
        cam = Camera.look_at([0.0, 0.0, -5.0], [0.0, 0.0, 0.0], Intrinsics.from_fov(32, 32, 60.0))
        above = cam.rotation @ np.array([0.0, 1.0, 0.0]) + cam.translation
        assert above[1] < 0

    def test_non_rigid_rejected(self):
        with pytest.raises(PreconditionError):
            Camera(8, 8, 10.0, 10.0, 4.0, 4.0, np.diag([2.0, 1.0, 1.0, 1.0]))

    def test_positive_focal(self):
        with pytest.raises(PreconditionError):
            Camera(8, 8, 0.0, 10.0, 4.0, 4.0, np.eye(4))

    def test_projection_mean(self, camera):
        """A point on the optical axis lands on the principal point"""
        g = _single([0.5, 0.5, 0.5]).gaussian(0)
        proj = project_gaussian(g, camera)
        np.testing.assert_allclose(proj.mean2d, [16.0, 16.0], atol=1e-12)

    def test_behind_camera_culled(self, camera):
        assert project_gaussian(_single([0.5, 0.5, 0.5], depth=-1.0).gaussian(0), camera) is None


class TestForward:
    """Compositing semantics"""

    def test_empty_cloud_is_background(self, camera):
        """No Gaussians: every pixel is the background with zero alpha"""
        out = render(GaussianCloud.empty(), camera, background=[0.2, 0.4, 0.6])
        np.testing.assert_allclose(out.color, np.broadcast_to([0.2, 0.4, 0.6], out.color.shape))
        np.testing.assert_array_equal(out.alpha, 0.0)

    def test_zero_size_image(self):
        cam = Camera(0, 4, 10.0, 10.0, 0.0, 2.0, np.eye(4))
        with pytest.raises(PreconditionError):
            render(GaussianCloud.empty(), cam)

    def test_alpha_plus_transmittance(self, small_cloud, camera):
        out = render(small_cloud, camera)
        np.testing.assert_allclose(out.alpha + out.transmittance, 1.0)
        assert np.all((out.alpha >= 0) & (out.alpha <= 1))

    def test_opaque_centre_clamped(self, camera):
        """A saturated Gaussian leaves 1 - alpha_clamp of the background at its centre"""
        out = render(_single([1.0, 0.0, 0.0]), camera, background=[0.0, 0.0, 1.0])
        np.testing.assert_allclose(out.color[16, 16], [0.99, 0.0, 0.01], atol=1e-6)
        assert out.alpha[16, 16] == pytest.approx(0.99)

    def test_two_half_transparent_splats(self):
        """Front α'=0.5 white over back α'=0.5 black on black: colour 0.5, alpha 0.75"""
        cam = Camera(32, 32, 30.0, 30.0, 15.5, 15.5, np.eye(4))  # axis through the centre of pixel (15, 15)
        front = _single([1.0, 1.0, 1.0], opacity_logit=0.0)
        back = _single([0.0, 0.0, 0.0], opacity_logit=0.0, depth=4.0)
        cloud = GaussianCloud(
            positions=np.concatenate([back.positions, front.positions]),
            rotations=np.concatenate([back.rotations, front.rotations]),
            log_scales=np.concatenate([back.log_scales, front.log_scales]),
            opacity_logits=np.concatenate([back.opacity_logits, front.opacity_logits]),
            sh=np.concatenate([back.sh, front.sh]),
            space=SpaceTag.WORLD,
        )
        out = render(cloud, cam, background=[0.0, 0.0, 0.0])
        np.testing.assert_allclose(out.color[15, 15], [0.5, 0.5, 0.5], atol=1e-9)
        assert out.alpha[15, 15] == pytest.approx(0.75, abs=1e-9)

    def test_fully_opaque_without_clamp(self):
        """With alpha_clamp = 1 a saturated splat hides the background completely"""
        cam = Camera(32, 32, 30.0, 30.0, 15.5, 15.5, np.eye(4))
        settings = RenderConfig(tile_size=8, alpha_clamp=1.0, early_termination=False)
        opaque = _single([1.0, 0.0, 0.0], opacity_logit=40.0)
        out = render(opaque, cam, background=[0.0, 0.0, 1.0], settings=settings)
        np.testing.assert_allclose(out.color[15, 15], [1.0, 0.0, 0.0], atol=1e-12)
        assert out.alpha[15, 15] == 1.0
        assert out.transmittance[15, 15] == 0.0

    def test_background_linearity(self, small_cloud, camera):
        """C(bg) = C(0) + T · bg"""
        black = render(small_cloud, camera, background=[0.0, 0.0, 0.0])
        bg = np.array([0.3, 0.6, 0.9])
        lit = render(small_cloud, camera, background=bg)
        np.testing.assert_allclose(lit.color, black.color + black.transmittance[..., None] * bg, atol=1e-12)

    def test_tiled_matches_naive(self, small_cloud, camera):
        """Tiled and per-pixel renderers agree"""
        settings = RenderConfig(tile_size=8, early_termination=False)
        tiled = render(small_cloud, camera, settings=settings)
        naive = render_naive(small_cloud, camera, settings=settings)
        np.testing.assert_allclose(tiled.color, naive.color, atol=1e-10)
        np.testing.assert_allclose(tiled.alpha, naive.alpha, atol=1e-10)
        np.testing.assert_allclose(tiled.depth, naive.depth, atol=1e-10)

    @pytest.mark.parametrize("tile_size", [1, 5, 16, 64])
    def test_tile_size_invariant(self, small_cloud, camera, tile_size):
        reference = render(small_cloud, camera, settings=RenderConfig(tile_size=16))
        other = render(small_cloud, camera, settings=RenderConfig(tile_size=tile_size))
        np.testing.assert_allclose(other.color, reference.color, atol=1e-12)

    def test_threaded_matches_serial(self, small_cloud, camera):
        serial = render(small_cloud, camera, settings=RenderConfig(tile_size=8))
        threaded = render(small_cloud, camera, settings=RenderConfig(tile_size=8, workers=4))
        np.testing.assert_array_equal(serial.color, threaded.color)

    def test_front_occludes_back(self, camera):
        """The nearer of two overlapping Gaussians dominates"""
        front = _single([1.0, 0.0, 0.0], depth=2.0)
        back = _single([0.0, 1.0, 0.0], depth=4.0)
        for order in ([front, back], [back, front]):
            cloud = GaussianCloud(
                positions=np.concatenate([c.positions for c in order]),
                rotations=np.concatenate([c.rotations for c in order]),
                log_scales=np.concatenate([c.log_scales for c in order]),
                opacity_logits=np.concatenate([c.opacity_logits for c in order]),
                sh=np.concatenate([c.sh for c in order]),
                space=SpaceTag.WORLD,
            )
            pixel = render(cloud, camera).color[16, 16]
            assert pixel[0] > 0.9 and pixel[1] < 0.05

    def test_depth_sort_stable(self):
        np.testing.assert_array_equal(depth_sort(np.array([2.0, 1.0, 2.0, 1.0])), [1, 3, 0, 2])

    def test_deterministic(self, small_cloud, camera):
        a = render(small_cloud, camera)
        b = render(small_cloud, camera)
        np.testing.assert_array_equal(a.color, b.color)


class TestBackward:
    """Analytic gradients against finite differences"""

    @pytest.fixture
    def upstream(self, camera):
        rng = np.random.default_rng(99)
        return rng.normal(size=(camera.height, camera.width, 3)), rng.normal(size=(camera.height, camera.width))

    @staticmethod
    def _loss(cloud, camera, upstream) -> float:
        out = render(cloud, camera, background=[0.1, 0.2, 0.3], settings=SMOOTH)
        return float(np.sum(out.color * upstream[0]) + np.sum(out.alpha * upstream[1]))

    @pytest.mark.parametrize("field", ["positions", "log_scales", "opacity_logits", "sh", "rotations"])
    def test_finite_differences(self, small_cloud, camera, upstream, field):
        """Every attribute gradient matches central differences"""
        raster = GaussianRasterizer(SMOOTH)
        raster.forward(small_cloud, camera, background=[0.1, 0.2, 0.3])
        grads = getattr(raster.backward(small_cloud, camera, upstream[0], upstream[1]), field)

        eps = 1e-6
        base = getattr(small_cloud, field)
        for idx in list(np.ndindex(base.shape))[:: max(1, base.size // 8)]:
            plus, minus = base.copy(), base.copy()
            plus[idx] += eps
            minus[idx] -= eps
            numeric = (
                self._loss(small_cloud.replace(**{field: plus}), camera, upstream)
                - self._loss(small_cloud.replace(**{field: minus}), camera, upstream)
            ) / (2 * eps)
            assert grads[idx] == pytest.approx(numeric, rel=1e-3, abs=1e-5), (field, idx)

    def test_stale_cache(self, small_cloud, camera):
        """backward without the matching forward is refused"""
        raster = GaussianRasterizer()
        grad = np.zeros((camera.height, camera.width, 3))
        with pytest.raises(StaleCacheError):
            raster.backward(small_cloud, camera, grad)
        raster.forward(small_cloud, camera)
        with pytest.raises(StaleCacheError):
            raster.backward(small_cloud.copy(), camera, grad)

    def test_invisible_gets_zero(self, camera):
        """Gaussians behind the camera receive no gradient"""
        cloud = _single([0.5, 0.5, 0.5], depth=-2.0)
        raster = GaussianRasterizer()
        raster.forward(cloud, camera)
        grads = raster.backward(cloud, camera, np.ones((camera.height, camera.width, 3)))
        np.testing.assert_array_equal(grads.positions, 0.0)
        np.testing.assert_array_equal(grads.sh, 0.0)
