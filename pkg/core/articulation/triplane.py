"""
Triplane Encoder
Three axis-aligned feature planes (xy, xz, yz) sampled bilinearly and summed
"""

from dataclasses import dataclass

import numpy as np

from core.errors import PreconditionError, ShapeMismatchError

PLANE_AXES = ((0, 1), (0, 2), (1, 2))


@dataclass
class TriplaneEncoder:
    """
    Attributes:
        planes: (3, h, w, d) features for the xy, xz and yz planes; the first
            axis of each pair indexes h, the second indexes w
        bbox_min, bbox_max: canonical-space box mapped onto the grid corners
    """

    planes: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        self.bbox_min = np.asarray(self.bbox_min, dtype=np.float64).reshape(3)
        self.bbox_max = np.asarray(self.bbox_max, dtype=np.float64).reshape(3)
        if self.planes.ndim != 4 or self.planes.shape[0] != 3:
            raise ShapeMismatchError(f"planes must be (3, h, w, d), got {self.planes.shape}")
        if self.planes.shape[1] < 2 or self.planes.shape[2] < 2:
            raise PreconditionError("Triplane resolution must be at least 2×2")
        if np.any(self.bbox_max <= self.bbox_min):
            raise PreconditionError("Triplane bounding box must have positive extent")

    @property
    def feature_dim(self) -> int:
        return self.planes.shape[3]

    @property
    def resolution(self) -> tuple[int, int]:
        return self.planes.shape[1], self.planes.shape[2]

    @classmethod
    def create(
        cls,
        bbox_min: np.ndarray,
        bbox_max: np.ndarray,
        resolution: int = 64,
        feature_dim: int = 64,
        seed: int = 0,
        init_scale: float = 0.1,
    ) -> "TriplaneEncoder":
        rng = np.random.default_rng(seed)
        planes = init_scale * rng.standard_normal((3, resolution, resolution, feature_dim))
        return cls(planes, bbox_min, bbox_max)

    def _grid_coords(self, points: np.ndarray) -> np.ndarray:
        """Continuous grid coordinates clamped to the box, (N, 3)"""
        unit = (points - self.bbox_min) / (self.bbox_max - self.bbox_min)
        return np.clip(unit, 0.0, 1.0)

    def _corners(self, points: np.ndarray, plane: int):
        h, w = self.resolution
        a_axis, b_axis = PLANE_AXES[plane]
        unit = self._grid_coords(points)
        u = unit[:, a_axis] * (h - 1)
        v = unit[:, b_axis] * (w - 1)
        i0 = np.minimum(np.floor(u).astype(np.int64), h - 2)
        j0 = np.minimum(np.floor(v).astype(np.int64), w - 2)
        fu = u - i0
        fv = v - j0
        weights = np.stack([(1 - fu) * (1 - fv), (1 - fu) * fv, fu * (1 - fv), fu * fv], axis=1)
        rows = np.stack([i0, i0, i0 + 1, i0 + 1], axis=1)
        cols = np.stack([j0, j0 + 1, j0, j0 + 1], axis=1)
        return rows, cols, weights

    def query(self, points: np.ndarray) -> np.ndarray:
        """Features (N, d) for points (N, 3)"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        feats = np.zeros((len(points), self.feature_dim))
        for plane in range(3):
            rows, cols, weights = self._corners(points, plane)
            feats += np.einsum("nc,ncd->nd", weights, self.planes[plane][rows, cols])
        return feats

    def backward(self, points: np.ndarray, grad_features: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. planes; query positions receive no gradient"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        grad = np.zeros_like(self.planes)
        for plane in range(3):
            rows, cols, weights = self._corners(points, plane)
            contrib = weights[:, :, None] * grad_features[:, None, :]
            np.add.at(grad[plane], (rows.ravel(), cols.ravel()), contrib.reshape(-1, self.feature_dim))
        return grad

    def copy(self) -> "TriplaneEncoder":
        return TriplaneEncoder(self.planes.copy(), self.bbox_min.copy(), self.bbox_max.copy())


def triplane_query(enc: TriplaneEncoder, x_c: np.ndarray) -> np.ndarray:
    """Feature vector f^c for a single canonical point"""
    return enc.query(np.asarray(x_c, dtype=np.float64).reshape(1, 3))[0]
