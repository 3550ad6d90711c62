"""
Unit Tests for Gaussian Clouds, Quaternions and SH
"""

import numpy as np
import pytest

from core.errors import DegenerateQuaternionError, PreconditionError, ShapeMismatchError
from core.gaussians.cloud import (
    GaussianCloud,
    SpaceTag,
    build_covariance,
    concat_clouds,
    logit,
    sigmoid,
)
from core.gaussians.mesh import (
    Mesh,
    knn_log_scales,
    sample_cloud_from_mesh,
    sample_skinned_cloud,
    scene_cloud_from_points,
)
from core.gaussians.quaternion import (
    axis_angle_to_quat,
    quat_conjugate,
    quat_from_matrix,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
    random_unit_quaternions,
)
from core.gaussians.sh import SH_C0, SH_C1, coeff_count, degree_from_count, rgb_to_sh0, sh_basis, sh_to_color


class TestQuaternions:
    """Quaternion algebra"""

    def test_normalize_unit_norm(self, rng):
        """Normalized quaternions have unit norm and keep direction"""
        q = rng.normal(size=(50, 4)) * 7.0
        unit = quat_normalize(q)
        np.testing.assert_allclose(np.linalg.norm(unit, axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(unit * np.linalg.norm(q, axis=1, keepdims=True), q, atol=1e-9)

    def test_normalize_degenerate(self):
        """Near-zero quaternions are rejected"""
        with pytest.raises(DegenerateQuaternionError):
            quat_normalize(np.zeros(4))

    def test_conjugate_product(self, rng):
        """q·q* = (|q|², 0, 0, 0)"""
        q = rng.normal(size=(1000, 4))
        prod = quat_multiply(q, quat_conjugate(q))
        np.testing.assert_allclose(prod[:, 0], np.sum(q * q, axis=1), atol=1e-9)
        np.testing.assert_allclose(prod[:, 1:], 0.0, atol=1e-9)

    def test_product_norm(self, rng):
        """|a·b| = |a||b|"""
        a, b = rng.normal(size=(100, 4)), rng.normal(size=(100, 4))
        np.testing.assert_allclose(
            np.linalg.norm(quat_multiply(a, b), axis=1),
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1),
            atol=1e-9,
        )

    def test_product_matches_matrix_composition(self, rng):
        """R(a·b) = R(a) R(b)"""
        a, b = random_unit_quaternions(rng, 1000), random_unit_quaternions(rng, 1000)
        np.testing.assert_allclose(
            quat_to_matrix(quat_multiply(a, b)), quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-9
        )

    def test_rotation_matrix_orthonormal(self, rng):
        """R Rᵀ = I and det R = 1"""
        r = quat_to_matrix(random_unit_quaternions(rng, 100))
        np.testing.assert_allclose(r @ np.swapaxes(r, -1, -2), np.broadcast_to(np.eye(3), r.shape), atol=1e-6)
        np.testing.assert_allclose(np.linalg.det(r), 1.0, atol=1e-6)

    def test_to_matrix_requires_unit(self):
        """Non-unit input is a precondition failure"""
        with pytest.raises(PreconditionError):
            quat_to_matrix(np.array([2.0, 0.0, 0.0, 0.0]))

    def test_axis_angle(self):
        """90° about z maps x to y"""
        r = quat_to_matrix(axis_angle_to_quat([0.0, 0.0, 1.0], np.pi / 2))
        np.testing.assert_allclose(r @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)

    def test_from_matrix_inverts(self, rng):
        """quat_from_matrix(R(q)) = ±q"""
        q = random_unit_quaternions(rng, 200)
        back = quat_from_matrix(quat_to_matrix(q))
        sign = np.sign(np.sum(back * q, axis=1, keepdims=True))
        np.testing.assert_allclose(back * sign, q, atol=1e-9)


class TestActivations:
    """sigmoid / logit and covariance"""

    def test_round_trip(self):
        """sigmoid(logit(p)) = p"""
        p = np.linspace(1e-6, 1 - 1e-6, 101)
        np.testing.assert_allclose(sigmoid(logit(p)), p, atol=1e-9)

    def test_covariance_eigenvalues(self, rng):
        """Σ is symmetric with eigenvalues exp(2 s)"""
        s = rng.normal(size=3) * 0.5
        q = random_unit_quaternions(rng, 1)[0]
        cov = build_covariance(s, q)
        np.testing.assert_allclose(cov, cov.T, atol=1e-9)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(cov)), np.sort(np.exp(2 * s)), atol=1e-6)


class TestSphericalHarmonics:
    """SH basis and colour evaluation"""

    def test_counts(self):
        """(d+1)² coefficients, invalid counts rejected"""
        assert [coeff_count(d) for d in range(4)] == [1, 4, 9, 16]
        assert degree_from_count(9) == 2
        with pytest.raises(PreconditionError):
            degree_from_count(5)

    def test_degree_one_basis(self):
        """Degree-1 basis evaluated by hand"""
        d = np.array([0.6, 0.0, 0.8])
        np.testing.assert_allclose(sh_basis(d, 1), [SH_C0, 0.0, SH_C1 * 0.8, -SH_C1 * 0.6], atol=1e-12)

    def test_dc_colour(self):
        """DC coefficient reproduces the colour from every direction"""
        rgb = np.array([0.2, 0.5, 0.9])
        sh = np.zeros((4, 3))
        sh[0] = rgb_to_sh0(rgb)
        for d in ([1.0, 0.0, 0.0], [0.0, 0.0, -1.0]):
            np.testing.assert_allclose(sh_to_color(sh, np.array(d)), rgb, atol=1e-12)

    def test_colour_clamped(self):
        """Colours are clamped to [0, 1]"""
        sh = np.full((1, 3), 10.0)
        assert np.all(sh_to_color(sh, np.array([0.0, 0.0, 1.0])) == 1.0)


class TestGaussianCloud:
    """GaussianCloud container"""

    def test_length_mismatch(self):
        """Attribute arrays of different lengths are rejected"""
        with pytest.raises(ShapeMismatchError):
            GaussianCloud(
                positions=np.zeros((2, 3)),
                rotations=np.tile([1.0, 0, 0, 0], (3, 1)),
                log_scales=np.zeros((2, 3)),
                opacity_logits=np.zeros(2),
                sh=np.zeros((2, 1, 3)),
            )

    def test_subset_and_copy(self, small_cloud):
        """subset picks rows; copy is independent"""
        sub = small_cloud.subset([0, 2])
        assert len(sub) == 2
        np.testing.assert_array_equal(sub.positions[1], small_cloud.positions[2])
        dup = small_cloud.copy()
        dup.positions[0] += 1.0
        assert not np.allclose(dup.positions[0], small_cloud.positions[0])

    def test_gaussian_view(self, small_cloud):
        """Per-Gaussian view activates scale and opacity"""
        g = small_cloud.gaussian(1)
        np.testing.assert_allclose(g.scale, np.exp(small_cloud.log_scales[1]))
        assert g.opacity == pytest.approx(float(sigmoid(small_cloud.opacity_logits[1])))

    def test_concat_order_and_degree(self, small_cloud):
        """Concatenation keeps order; mixed SH degrees are rejected"""
        both = concat_clouds([small_cloud, small_cloud.subset([0])], SpaceTag.WORLD)
        assert len(both) == len(small_cloud) + 1
        np.testing.assert_array_equal(both.positions[-1], small_cloud.positions[0])
        other = GaussianCloud.empty(sh_degree=1)
        other = concat_clouds([other, GaussianCloud(
            positions=np.zeros((1, 3)), rotations=[[1.0, 0, 0, 0]], log_scales=np.zeros((1, 3)),
            opacity_logits=[0.0], sh=np.zeros((1, 4, 3)),
        )], SpaceTag.WORLD)  # fmt: skip
        with pytest.raises(ShapeMismatchError):
            concat_clouds([small_cloud, other], SpaceTag.WORLD)

    def test_empty(self):
        """Empty clouds report zero length"""
        assert len(GaussianCloud.empty(sh_degree=2)) == 0
        assert GaussianCloud.empty(sh_degree=2).sh_degree == 2


class TestMeshSampling:
    """Initial clouds from meshes and point sets"""

    def test_vertex_sampling(self, toy_mesh):
        """count <= V picks distinct vertices"""
        cloud = sample_cloud_from_mesh(toy_mesh, 10, seed=3)
        assert len(cloud) == 10
        assert cloud.space == SpaceTag.CANONICAL
        for p in cloud.positions:
            assert np.min(np.linalg.norm(toy_mesh.vertices - p, axis=1)) < 1e-12

    def test_surface_sampling_weights(self, toy_mesh):
        """Surface samples interpolate skin weights on the simplex"""
        count = len(toy_mesh.vertices) + 40
        cloud, weights = sample_skinned_cloud(toy_mesh, count, seed=1)
        assert len(cloud) == count
        assert weights.shape == (count, toy_mesh.skin_weights.shape[1])
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-9)

    def test_deterministic(self, toy_mesh):
        """Same seed, same cloud"""
        a = sample_cloud_from_mesh(toy_mesh, 60, seed=5)
        b = sample_cloud_from_mesh(toy_mesh, 60, seed=5)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_empty_mesh(self):
        """Empty meshes cannot be sampled"""
        with pytest.raises(PreconditionError):
            sample_cloud_from_mesh(Mesh(np.zeros((0, 3)), np.zeros((0, 3))), 5)

    def test_knn_scales(self):
        """Unit-spaced points get log scale ln(mean neighbour distance)"""
        points = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
        scales = knn_log_scales(points, k=1)
        np.testing.assert_allclose(scales, 0.0, atol=1e-12)

    def test_scene_cloud(self):
        """Scene clouds are world-space with DC colours"""
        points = np.random.default_rng(0).normal(size=(20, 3))
        colors = np.full((20, 3), 0.25)
        cloud = scene_cloud_from_points(points, colors)
        assert cloud.space == SpaceTag.WORLD
        np.testing.assert_allclose(cloud.sh[:, 0, :], rgb_to_sh0(colors))
        with pytest.raises(PreconditionError):
            scene_cloud_from_points(np.zeros((0, 3)))
        with pytest.raises(ShapeMismatchError):
            scene_cloud_from_points(points, colors[:3])
