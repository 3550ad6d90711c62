"""
Evaluation
PSNR / SSIM / perceptual scores of a reconstruction against held-out views
"""

import math

import numpy as np
from loguru import logger

from config.config import RenderConfig
from core.errors import EmptyTrainingSetError, PreconditionError
from core.losses.metrics import image_metrics
from core.losses.perceptual import PerceptualBackend
from core.render.rasterizer import GaussianRasterizer

METRIC_NAMES = ("psnr", "ssim", "perceptual")


def _mean(values: list[float]) -> float:
    # +inf PSNR (exact match) propagates
    finite = [v for v in values if not math.isnan(v)]
    return float(np.mean(finite)) if finite else math.nan


def evaluate(recon, views, render_cfg: RenderConfig | None = None, backend: PerceptualBackend | None = None) -> dict:
    """
    Render each view and score it; the reconstruction is not modified

    Returns:
        {"per_view": {view_id: {psnr, ssim, perceptual}}, "mean": {...}}
    """
    if not views:
        raise EmptyTrainingSetError("evaluate needs at least one view")
    ids = [view.view_id for view in views]
    if len(set(ids)) != len(ids):
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        raise PreconditionError(f"evaluate needs distinct view ids, repeated: {duplicates}")
    rasterizer = GaussianRasterizer(render_cfg)
    per_view: dict[str, dict[str, float]] = {}
    for view in views:
        cloud, _ = recon.compose(view.pose)
        out = rasterizer.forward(cloud, view.camera)
        per_view[view.view_id] = image_metrics(out.color, view.image, backend)
    mean = {name: _mean([m[name] for m in per_view.values()]) for name in METRIC_NAMES}
    logger.info(
        f"evaluate views={len(views)} psnr={mean['psnr']:.3f} ssim={mean['ssim']:.4f} "
        f"perceptual={mean['perceptual']:.5f}"
    )
    return {"per_view": per_view, "mean": mean}
