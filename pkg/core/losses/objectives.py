"""
Training Objectives
Reconstruction loss, region-weighted loss and the sequence harmonizer losses,
each returning a scalar plus gradients w.r.t. the rendered colour and alpha
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from config.config import LossWeights
from core.errors import PreconditionError, ShapeMismatchError
from core.losses.image import (
    SSIM_WINDOW,
    l1_color_grad,
    l1_color_loss,
    mask_grad,
    mask_loss,
    ssim_loss,
    ssim_loss_grad,
    ssim_pixel_map,
    ssim_pixel_map_weighted_grad,
)
from core.losses.perceptual import PerceptualBackend, get_perceptual_backend

Box = tuple[int, int, int, int]


@dataclass
class RegionSet:
    """Axis-aligned pixel boxes (x0, y0, x1, y1), end-exclusive"""

    boxes: list[Box] = field(default_factory=list)

    def __post_init__(self):
        self.boxes = [tuple(int(v) for v in box) for box in self.boxes]
        for box in self.boxes:
            x0, y0, x1, y1 = box
            if not (x0 < x1 and y0 < y1):
                raise PreconditionError(f"Degenerate region box {box}")

    def __len__(self) -> int:
        return len(self.boxes)

    def __bool__(self) -> bool:
        return bool(self.boxes)

    def validate(self, width: int, height: int) -> None:
        for x0, y0, x1, y1 in self.boxes:
            if x0 < 0 or y0 < 0 or x1 > width or y1 > height:
                raise PreconditionError(f"Region box {(x0, y0, x1, y1)} exceeds {width}×{height} image")

    def mask(self, width: int, height: int) -> np.ndarray:
        """Pixel-membership union of all boxes, (H, W) bool"""
        out = np.zeros((height, width), dtype=bool)
        for x0, y0, x1, y1 in self.boxes:
            out[max(y0, 0) : min(y1, height), max(x0, 0) : min(x1, width)] = True
        return out


@dataclass
class LossBreakdown:
    l1: float = 0.0
    mask: float = 0.0
    ssim: float = 0.0
    perceptual: float = 0.0
    region: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass
class LossResult:
    breakdown: LossBreakdown
    grad_color: np.ndarray
    grad_alpha: np.ndarray

    @property
    def total(self) -> float:
        return self.breakdown.total


def weighted_recon(l1: float, mask: float, ssim_term: float, perceptual: float, w: LossWeights) -> float:
    """L1 + λ1·mask + λ2·ssim + λ3·perceptual"""
    return l1 + w.lambda1 * mask + w.lambda2 * ssim_term + w.lambda3 * perceptual


def _ssim_enabled(pred: np.ndarray) -> bool:
    return pred.shape[0] >= SSIM_WINDOW and pred.shape[1] >= SSIM_WINDOW


def _backend(w: LossWeights, backend: PerceptualBackend | None) -> PerceptualBackend | None:
    if backend is not None:
        return backend
    if w.lambda3 == 0.0 and w.perceptual_backend == "none":
        return None
    return get_perceptual_backend(w.perceptual_backend)


def recon_loss(
    pred: np.ndarray,
    target_img: np.ndarray,
    target_mask: np.ndarray | None,
    pred_alpha: np.ndarray,
    w: LossWeights,
    backend: PerceptualBackend | None = None,
) -> LossResult:
    """
    L_recon with its per-term breakdown and gradients

    A missing target_mask disables the mask term. Images smaller than the SSIM
    window contribute no SSIM term.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target_img = np.asarray(target_img, dtype=np.float64)
    if pred.shape != target_img.shape:
        raise ShapeMismatchError(f"Prediction {pred.shape} vs target {target_img.shape}")
    pred_alpha = np.asarray(pred_alpha, dtype=np.float64)
    backend = _backend(w, backend)

    breakdown = LossBreakdown(l1=l1_color_loss(pred, target_img))
    grad_color = l1_color_grad(pred, target_img)
    grad_alpha = np.zeros_like(pred_alpha)

    if target_mask is not None:
        breakdown.mask = mask_loss(pred_alpha, target_mask, w.mask_squared)
        grad_alpha = grad_alpha + w.lambda1 * mask_grad(pred_alpha, target_mask, w.mask_squared)
    if _ssim_enabled(pred):
        breakdown.ssim = ssim_loss(pred, target_img, w.ssim_as_similarity)
        if w.lambda2:
            grad_color = grad_color + w.lambda2 * ssim_loss_grad(pred, target_img, w.ssim_as_similarity)
    if backend is not None:
        breakdown.perceptual = backend.loss(pred, target_img)
        if w.lambda3:
            grad_color = grad_color + w.lambda3 * backend.grad(pred, target_img)

    breakdown.total = weighted_recon(breakdown.l1, breakdown.mask, breakdown.ssim, breakdown.perceptual, w)
    return LossResult(breakdown, grad_color, grad_alpha)


@dataclass
class PixelLossMaps:
    """Per-pixel decompositions of each reconstruction term, each (H, W)"""

    l1: np.ndarray
    mask: np.ndarray
    ssim: np.ndarray
    perceptual: np.ndarray

    def combined(self, w: LossWeights) -> np.ndarray:
        return self.l1 + w.lambda1 * self.mask + w.lambda2 * self.ssim + w.lambda3 * self.perceptual


def pixel_loss_maps(
    pred: np.ndarray,
    target_img: np.ndarray,
    target_mask: np.ndarray | None,
    pred_alpha: np.ndarray,
    backend: PerceptualBackend | None = None,
) -> PixelLossMaps:
    pred = np.asarray(pred, dtype=np.float64)
    target_img = np.asarray(target_img, dtype=np.float64)
    h, w = pred.shape[:2]
    zeros = np.zeros((h, w))
    return PixelLossMaps(
        l1=np.abs(pred - target_img).mean(axis=-1),
        mask=zeros if target_mask is None else np.abs(np.asarray(pred_alpha) - target_mask),
        ssim=ssim_pixel_map(pred, target_img) if _ssim_enabled(pred) else zeros,
        perceptual=zeros if backend is None else backend.pixel_map(pred, target_img),
    )


def region_weighted_loss(maps: PixelLossMaps, regions: RegionSet, omega: float, w: LossWeights, recon: float) -> float:
    """L_recon + ω · Σ over region pixels of the combined per-pixel terms"""
    if omega < 0:
        raise PreconditionError(f"omega must be >= 0, got {omega}")
    if not regions or omega == 0.0:
        return recon
    h, wd = maps.l1.shape
    member = regions.mask(wd, h)
    return recon + omega * float(np.sum(maps.combined(w)[member]))


def region_loss(
    pred: np.ndarray,
    target_img: np.ndarray,
    target_mask: np.ndarray | None,
    pred_alpha: np.ndarray,
    regions: RegionSet | None,
    w: LossWeights,
    backend: PerceptualBackend | None = None,
) -> LossResult:
    """Region-weighted objective with gradients; equals recon_loss without regions or with ω = 0"""
    result = recon_loss(pred, target_img, target_mask, pred_alpha, w, backend)
    if not regions or w.omega == 0.0:
        return result

    pred = np.asarray(pred, dtype=np.float64)
    target_img = np.asarray(target_img, dtype=np.float64)
    backend = _backend(w, backend)
    h, wd = pred.shape[:2]
    member = regions.mask(wd, h).astype(np.float64)
    maps = pixel_loss_maps(pred, target_img, target_mask, pred_alpha, backend)
    region = float(np.sum(maps.combined(w) * member))

    omega = w.omega
    channels = pred.shape[2]
    grad_color = result.grad_color + omega * np.sign(pred - target_img) * member[..., None] / channels
    grad_alpha = result.grad_alpha
    if target_mask is not None:
        grad_alpha = grad_alpha + omega * w.lambda1 * np.sign(pred_alpha - target_mask) * member
    if _ssim_enabled(pred) and w.lambda2:
        grad_color = grad_color + omega * w.lambda2 * ssim_pixel_map_weighted_grad(pred, target_img, member)
    if w.lambda3 and backend is not None and hasattr(backend, "pixel_map_grad"):
        grad_color = grad_color + omega * w.lambda3 * backend.pixel_map_grad(pred, target_img, member)

    breakdown = result.breakdown
    breakdown.region = region
    breakdown.total = breakdown.total + omega * region
    return LossResult(breakdown, grad_color, grad_alpha)


def _check_sequences(pred_seq, target_seq, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred_seq, dtype=np.float64)
    target = np.asarray(target_seq, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"Sequence shapes differ: {pred.shape} vs {target.shape}")
    if len(pred) < min_len:
        raise PreconditionError(f"Need at least {min_len} frames, got {len(pred)}")
    return pred, target


def frame_diff_loss(pred_seq, target_seq) -> float:
    """Mean |(p[i+1] - p[i]) - (t[i+1] - t[i])| over consecutive pairs and pixels"""
    pred, target = _check_sequences(pred_seq, target_seq, min_len=2)
    residual = np.diff(pred, axis=0) - np.diff(target, axis=0)
    return float(np.mean(np.abs(residual)))


def harmonizer_total(l1: float, perceptual: float, diff: float, gan: float, w: LossWeights) -> float:
    """L1 + LPIPS + α·L_diff + β·L_GAN; the GAN term is skipped when β = 0"""
    total = l1 + perceptual + w.alpha * diff
    if w.beta:
        total += w.beta * gan
    return total


def total_harmonizer_loss(
    pred_seq,
    target_seq,
    gan_term: float,
    w: LossWeights,
    backend: PerceptualBackend | None = None,
) -> float:
    pred, target = _check_sequences(pred_seq, target_seq, min_len=1)
    backend = backend or get_perceptual_backend(w.perceptual_backend)
    l1 = float(np.mean(np.abs(pred - target)))
    perceptual = float(np.mean([backend.loss(p, t) for p, t in zip(pred, target)]))
    diff = frame_diff_loss(pred, target) if len(pred) >= 2 else 0.0
    return harmonizer_total(l1, perceptual, diff, gan_term, w)
