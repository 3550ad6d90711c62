"""
Losses and Metrics
"""

from core.losses.image import l1_color_loss, mask_loss, ssim, ssim_loss, ssim_map
from core.losses.metrics import image_metrics, psnr
from core.losses.objectives import (
    LossBreakdown,
    LossResult,
    PixelLossMaps,
    RegionSet,
    frame_diff_loss,
    harmonizer_total,
    pixel_loss_maps,
    recon_loss,
    region_loss,
    region_weighted_loss,
    total_harmonizer_loss,
    weighted_recon,
)
from core.losses.perceptual import PyramidPerceptual, get_perceptual_backend, perceptual_loss, register_perceptual_backend

__all__ = [
    "LossBreakdown",
    "LossResult",
    "PixelLossMaps",
    "PyramidPerceptual",
    "RegionSet",
    "frame_diff_loss",
    "get_perceptual_backend",
    "harmonizer_total",
    "image_metrics",
    "l1_color_loss",
    "mask_loss",
    "perceptual_loss",
    "pixel_loss_maps",
    "psnr",
    "recon_loss",
    "region_loss",
    "region_weighted_loss",
    "register_perceptual_backend",
    "ssim",
    "ssim_loss",
    "ssim_map",
    "total_harmonizer_loss",
    "weighted_recon",
]
