"""
Evaluation Metrics
PSNR plus the SSIM / perceptual scores reported by evaluation
"""

import math

import numpy as np

from core.losses.image import SSIM_WINDOW, check_same_shape, ssim
from core.losses.perceptual import PerceptualBackend, get_perceptual_backend

MSE_FLOOR = 1e-12


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """10·log10(1 / MSE) in dB; +inf when MSE < 1e-12"""
    pred, target = check_same_shape(pred, target)
    mse = float(np.mean((pred - target) ** 2))
    if mse < MSE_FLOOR:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def image_metrics(
    pred: np.ndarray, target: np.ndarray, backend: PerceptualBackend | None = None
) -> dict[str, float]:
    """PSNR, SSIM (NaN below the window size) and perceptual score for one image pair"""
    pred, target = check_same_shape(pred, target)
    fits = pred.shape[0] >= SSIM_WINDOW and pred.shape[1] >= SSIM_WINDOW
    return {
        "psnr": psnr(pred, target),
        "ssim": ssim(pred, target) if fits else math.nan,
        "perceptual": (backend or get_perceptual_backend()).loss(pred, target),
    }
