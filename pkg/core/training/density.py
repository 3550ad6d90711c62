"""
Adaptive Density Control
Screen-space gradient statistics and the clone / split / prune rules
"""

from dataclasses import dataclass

import numpy as np
from loguru import logger

from config.config import DensityControl
from core.errors import ShapeMismatchError
from core.gaussians.cloud import GaussianCloud
from core.gaussians.quaternion import rotation_matrices


@dataclass
class DensityStats:
    """Accumulated screen-space gradient norms per Gaussian"""

    grad_accum: np.ndarray
    denom: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "DensityStats":
        return cls(np.zeros(n), np.zeros(n))

    def accumulate(self, means2d_grad: np.ndarray, width: int, height: int) -> None:
        """Add one view's gradient norms (converted to NDC units) for Gaussians that received gradient"""
        if means2d_grad.shape != (len(self.grad_accum), 2):
            raise ShapeMismatchError("means2d gradient is not aligned with the density statistics")
        ndc = means2d_grad * np.array([0.5 * width, 0.5 * height])
        norms = np.linalg.norm(ndc, axis=1)
        touched = norms > 0
        self.grad_accum[touched] += norms[touched]
        self.denom[touched] += 1.0

    def average(self) -> np.ndarray:
        return np.divide(self.grad_accum, self.denom, out=np.zeros_like(self.grad_accum), where=self.denom > 0)


@dataclass
class DensityResult:
    """New cloud with, per row, the old row it came from and whether it is newly created"""

    cloud: GaussianCloud
    source_index: np.ndarray
    is_new: np.ndarray
    cloned: int = 0
    split: int = 0
    pruned: int = 0

    @property
    def changed(self) -> bool:
        return bool(self.cloned or self.split or self.pruned)


def densify_and_prune(
    cloud: GaussianCloud,
    grad_avg: np.ndarray,
    cfg: DensityControl,
    extent: float,
    rng: np.random.Generator,
) -> DensityResult:
    """
    Clone small high-gradient Gaussians, split large ones, prune transparent ones

    Args:
        cloud: Gaussians to edit
        grad_avg: mean screen-space gradient norm per Gaussian
        cfg: thresholds and the Gaussian budget
        extent: scene radius; "small" means max scale <= percent_dense · extent
        rng: source of split offsets
    """
    n = len(cloud)
    if grad_avg.shape != (n,):
        raise ShapeMismatchError(f"grad_avg has shape {grad_avg.shape}, expected ({n},)")

    scales = cloud.scales
    max_scale = scales.max(axis=1) if n else np.zeros(0)
    high = grad_avg >= cfg.grad_threshold
    small = max_scale <= cfg.percent_dense * extent
    candidates = np.flatnonzero(high)

    budget = max(cfg.max_gaussians - n, 0)
    if len(candidates) > budget:
        by_grad = candidates[np.argsort(-grad_avg[candidates], kind="stable")]
        candidates = np.sort(by_grad[:budget])
    clone_ids = candidates[small[candidates]]
    split_ids = candidates[~small[candidates]]

    keep = np.ones(n, dtype=bool)
    keep[split_ids] = False
    kept_ids = np.flatnonzero(keep)

    if len(split_ids):
        rot = rotation_matrices(cloud.rotations[split_ids])
        samples = rng.normal(size=(2, len(split_ids), 3)) * scales[split_ids][None]
        offsets = np.einsum("nab,knb->kna", rot, samples)
        child_positions = (cloud.positions[split_ids][None] + offsets).reshape(-1, 3)
    else:
        child_positions = np.zeros((0, 3))

    source = np.concatenate([kept_ids, clone_ids, np.tile(split_ids, 2)])
    is_new = np.concatenate([np.zeros(len(kept_ids), bool), np.ones(len(clone_ids) + 2 * len(split_ids), bool)])
    grown = cloud.subset(source)
    if len(split_ids):
        start = len(kept_ids) + len(clone_ids)
        grown.positions[start:] = child_positions
        grown.log_scales[start:] = cloud.log_scales[np.tile(split_ids, 2)] - np.log(cfg.split_factor)

    survive = grown.opacities >= cfg.prune_opacity
    if survive.sum() > cfg.max_gaussians:
        ranked = np.argsort(-grown.opacities, kind="stable")[: cfg.max_gaussians]
        survive = np.zeros(len(grown), dtype=bool)
        survive[ranked] = True
    pruned = int((~survive).sum())
    final = np.flatnonzero(survive)
    result = DensityResult(
        cloud=grown.subset(final),
        source_index=source[final],
        is_new=is_new[final],
        cloned=len(clone_ids),
        split=len(split_ids),
        pruned=pruned,
    )
    if result.changed:
        logger.debug(
            f"densify cloned={result.cloned} split={result.split} pruned={pruned} gaussians={len(result.cloud)}"
        )
    return result
