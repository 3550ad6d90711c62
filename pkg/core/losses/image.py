"""
Image Losses
Pixel-wise L1, mask and SSIM terms with their gradients w.r.t. the prediction
"""

import numpy as np
from scipy.ndimage import correlate1d

from core.errors import PreconditionError, ShapeMismatchError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 1.0
SSIM_RADIUS = SSIM_WINDOW // 2


def check_same_shape(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def l1_color_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute difference over all pixel-channels"""
    pred, target = check_same_shape(pred, target)
    return float(np.mean(np.abs(pred - target))) if pred.size else 0.0


def l1_color_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    pred, target = check_same_shape(pred, target)
    return np.sign(pred - target) / max(pred.size, 1)


def mask_loss(pred_alpha: np.ndarray, target_mask: np.ndarray, squared: bool = False) -> float:
    """Root mean squared mask error (mean squared error when squared=True)"""
    pred_alpha, target_mask = check_same_shape(pred_alpha, target_mask)
    mse = float(np.mean((pred_alpha - target_mask) ** 2)) if pred_alpha.size else 0.0
    return mse if squared else float(np.sqrt(mse))


def mask_grad(pred_alpha: np.ndarray, target_mask: np.ndarray, squared: bool = False) -> np.ndarray:
    pred_alpha, target_mask = check_same_shape(pred_alpha, target_mask)
    diff = pred_alpha - target_mask
    size = max(diff.size, 1)
    if squared:
        return 2.0 * diff / size
    root = np.sqrt(np.mean(diff**2)) if diff.size else 0.0
    if root <= 0.0:
        return np.zeros_like(diff)
    return diff / (size * root)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - size // 2
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    return w / w.sum()


def _filter_valid(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian filter keeping only fully covered positions (H, W, C)"""
    w = gaussian_window()
    out = correlate1d(img, w, axis=0, mode="constant")
    out = correlate1d(out, w, axis=1, mode="constant")
    r = SSIM_RADIUS
    return out[r : img.shape[0] - r, r : img.shape[1] - r]


def _filter_adjoint(valid: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Adjoint of _filter_valid (the window is symmetric)"""
    r = SSIM_RADIUS
    padded = np.zeros(shape)
    padded[r : shape[0] - r, r : shape[1] - r] = valid
    w = gaussian_window()
    out = correlate1d(padded, w, axis=0, mode="constant")
    return correlate1d(out, w, axis=1, mode="constant")


def _as_channels(img: np.ndarray) -> np.ndarray:
    return img[..., None] if img.ndim == 2 else img


def _ssim_terms(a: np.ndarray, b: np.ndarray):
    a, b = check_same_shape(a, b)
    a, b = _as_channels(a), _as_channels(b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise PreconditionError(f"Image {a.shape[:2]} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window")
    c1 = (SSIM_K1 * DATA_RANGE) ** 2
    c2 = (SSIM_K2 * DATA_RANGE) ** 2
    mu_a, mu_b = _filter_valid(a), _filter_valid(b)
    s_aa, s_bb, s_ab = _filter_valid(a * a), _filter_valid(b * b), _filter_valid(a * b)
    var_a = s_aa - mu_a**2
    var_b = s_bb - mu_b**2
    cov = s_ab - mu_a * mu_b
    num1 = 2.0 * mu_a * mu_b + c1
    num2 = 2.0 * cov + c2
    den1 = mu_a**2 + mu_b**2 + c1
    den2 = var_a + var_b + c2
    smap = (num1 * num2) / (den1 * den2)
    return a, b, mu_a, mu_b, num1, num2, den1, den2, smap


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM over valid window positions, (H-10, W-10, C)"""
    return _ssim_terms(a, b)[-1]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM, 11×11 Gaussian window σ=1.5, per channel then averaged"""
    return float(np.mean(ssim_map(a, b)))


def ssim_weighted_grad(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Gradient w.r.t. a of Σ weights · ssim_map(a, b)

    Args:
        weights: same shape as ssim_map(a, b)
    """
    squeeze = np.asarray(a).ndim == 2
    a, b, mu_a, mu_b, num1, num2, den1, den2, smap = _ssim_terms(a, b)
    den = den1 * den2
    d_mu_a = (2.0 * mu_b * num2 - 2.0 * mu_b * num1) / den - smap * (2.0 * mu_a / den1 - 2.0 * mu_a / den2)
    d_s_ab = 2.0 * num1 / den
    d_s_aa = -smap / den2
    g_mu = _filter_adjoint(weights * d_mu_a, a.shape)
    g_aa = _filter_adjoint(weights * d_s_aa, a.shape)
    g_ab = _filter_adjoint(weights * d_s_ab, a.shape)
    grad = g_mu + 2.0 * a * g_aa + b * g_ab
    return grad[..., 0] if squeeze else grad


def ssim_grad(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gradient of mean SSIM w.r.t. a"""
    shape = ssim_map(a, b).shape
    return ssim_weighted_grad(a, b, np.full(shape, 1.0 / np.prod(shape)))


def ssim_loss(a: np.ndarray, b: np.ndarray, as_similarity: bool = False) -> float:
    """1 - SSIM, or SSIM itself when as_similarity is set"""
    value = ssim(a, b)
    return value if as_similarity else 1.0 - value


def ssim_loss_grad(a: np.ndarray, b: np.ndarray, as_similarity: bool = False) -> np.ndarray:
    grad = ssim_grad(a, b)
    return grad if as_similarity else -grad


def ssim_pixel_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """1 - local SSIM (channel mean) placed at window centres; 0 where no full window fits"""
    local = 1.0 - ssim_map(a, b).mean(axis=-1)
    out = np.zeros(np.asarray(a).shape[:2])
    r = SSIM_RADIUS
    out[r : out.shape[0] - r, r : out.shape[1] - r] = local
    return out


def ssim_pixel_map_weighted_grad(a: np.ndarray, b: np.ndarray, pixel_weights: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. a of Σ pixel_weights · ssim_pixel_map(a, b)"""
    r = SSIM_RADIUS
    h, w = np.asarray(a).shape[:2]
    channels = 1 if np.asarray(a).ndim == 2 else np.asarray(a).shape[2]
    inner = pixel_weights[r : h - r, r : w - r]
    weights = np.repeat(-inner[..., None] / channels, channels, axis=2)
    return ssim_weighted_grad(a, b, weights)
