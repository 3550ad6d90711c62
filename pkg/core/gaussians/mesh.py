"""
Mesh Sampling
Initial Gaussian clouds from template meshes and SfM point sets
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

from core.errors import PreconditionError, ShapeMismatchError
from core.gaussians.cloud import GaussianCloud, SpaceTag, logit
from core.gaussians.quaternion import IDENTITY
from core.gaussians.sh import coeff_count, rgb_to_sh0

KNN_NEIGHBORS = 3
MIN_SCALE = 1e-7
DEFAULT_OPACITY = 0.1


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh with optional per-vertex skinning weights"""

    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int
    skin_weights: np.ndarray | None = None  # (V, J)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if self.skin_weights is not None:
            weights = np.asarray(self.skin_weights, dtype=np.float64)
            if weights.ndim != 2 or weights.shape[0] != len(self.vertices):
                raise ShapeMismatchError(
                    f"skin_weights shape {weights.shape} does not match {len(self.vertices)} vertices"
                )
            object.__setattr__(self, "skin_weights", weights)
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise PreconditionError("Face indices out of range")

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def knn_log_scales(points: np.ndarray, k: int = KNN_NEIGHBORS) -> np.ndarray:
    """Isotropic log scale = log(mean distance to the k nearest other points)"""
    n = len(points)
    if n == 0:
        return np.zeros((0, 3))
    if n == 1:
        return np.full((1, 3), np.log(0.01))
    neighbors = min(k, n - 1)
    dists, _ = cKDTree(points).query(points, k=neighbors + 1)
    mean = np.maximum(dists[:, 1:].mean(axis=1), MIN_SCALE)
    return np.repeat(np.log(mean)[:, None], 3, axis=1)


def _surface_samples(mesh: Mesh, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted uniform samples; returns positions and (count, 3) barycentric + face ids"""
    tri = mesh.vertices[mesh.faces]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    total = areas.sum()
    probs = areas / total if total > 0 else np.full(len(areas), 1.0 / len(areas))
    face_ids = rng.choice(len(mesh.faces), size=count, p=probs)
    u, v = rng.random(count), rng.random(count)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    bary = np.stack([1.0 - u - v, u, v], axis=1)
    positions = np.einsum("nk,nkd->nd", bary, tri[face_ids])
    return positions, np.concatenate([bary, face_ids[:, None].astype(np.float64)], axis=1)


def _sample_indices(mesh: Mesh, count: int, seed: int):
    if len(mesh.vertices) == 0:
        raise PreconditionError("Cannot sample from an empty mesh")
    if count < 1:
        raise PreconditionError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    n_vertices = len(mesh.vertices)
    if count <= n_vertices:
        chosen = np.arange(n_vertices) if count == n_vertices else np.sort(rng.choice(n_vertices, count, replace=False))
        return mesh.vertices[chosen], ("vertex", chosen)
    extra = count - n_vertices
    if len(mesh.faces) == 0:
        repeat = rng.choice(n_vertices, extra, replace=True)
        chosen = np.concatenate([np.arange(n_vertices), repeat])
        return mesh.vertices[chosen], ("vertex", chosen)
    positions, bary = _surface_samples(mesh, extra, rng)
    return np.concatenate([mesh.vertices, positions]), ("surface", bary)


def _build_cloud(
    positions: np.ndarray,
    sh_degree: int,
    init_opacity: float,
    colors: np.ndarray | None,
    space: SpaceTag,
) -> GaussianCloud:
    n = len(positions)
    sh = np.zeros((n, coeff_count(sh_degree), 3))
    if colors is not None:
        sh[:, 0, :] = rgb_to_sh0(colors)
    return GaussianCloud(
        positions=positions,
        rotations=np.tile(IDENTITY, (n, 1)),
        log_scales=knn_log_scales(positions),
        opacity_logits=np.full(n, float(logit(init_opacity))),
        sh=sh,
        space=space,
    )


def sample_cloud_from_mesh(
    mesh: Mesh,
    count: int,
    seed: int = 0,
    sh_degree: int = 0,
    init_opacity: float = DEFAULT_OPACITY,
) -> GaussianCloud:
    """
    Canonical cloud sampled on mesh vertices, then on the surface

    Args:
        mesh: Template mesh
        count: Number of Gaussians; count <= V picks vertices, count > V keeps every
            vertex and adds area-weighted surface samples
        seed: Sampling seed

    Returns:
        Canonical GaussianCloud with identity rotations and kNN isotropic scales
    """
    cloud, _ = sample_skinned_cloud(mesh, count, seed, sh_degree, init_opacity)
    return cloud


def sample_skinned_cloud(
    mesh: Mesh,
    count: int,
    seed: int = 0,
    sh_degree: int = 0,
    init_opacity: float = DEFAULT_OPACITY,
) -> tuple[GaussianCloud, np.ndarray | None]:
    """Like sample_cloud_from_mesh, also interpolating per-vertex skin weights"""
    positions, (kind, info) = _sample_indices(mesh, count, seed)
    weights = None
    if mesh.skin_weights is not None:
        if kind == "vertex":
            weights = mesh.skin_weights[info]
        else:
            face_ids = info[:, 3].astype(np.int64)
            corner = mesh.skin_weights[mesh.faces[face_ids]]
            sampled = np.einsum("nk,nkj->nj", info[:, :3], corner)
            weights = np.concatenate([mesh.skin_weights, sampled])
    cloud = _build_cloud(positions, sh_degree, init_opacity, None, SpaceTag.CANONICAL)
    logger.debug(f"mesh_sampled vertices={len(mesh.vertices)} count={count} mode={kind}")
    return cloud, weights


def scene_cloud_from_points(
    points: np.ndarray,
    colors: np.ndarray | None = None,
    sh_degree: int = 0,
    init_opacity: float = DEFAULT_OPACITY,
) -> GaussianCloud:
    """World-space scene cloud from an SfM point set; colors in [0, 1]"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise PreconditionError("Scene point set is empty")
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
        if len(colors) != len(points):
            raise ShapeMismatchError(f"{len(colors)} colors for {len(points)} points")
    return _build_cloud(points, sh_degree, init_opacity, colors, SpaceTag.WORLD)
