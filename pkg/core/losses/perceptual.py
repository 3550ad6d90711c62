"""
Perceptual Loss Backends
Pluggable slot for the perceptual term; the built-in backend is an
average-pooled image pyramid MSE, a stand-in rather than a learned metric
"""

from collections.abc import Callable
from typing import Protocol

import numpy as np

from core.errors import ConfigError, ShapeMismatchError


class PerceptualBackend(Protocol):
    name: str

    def loss(self, a: np.ndarray, b: np.ndarray) -> float: ...

    def grad(self, a: np.ndarray, b: np.ndarray) -> np.ndarray: ...

    def pixel_map(self, a: np.ndarray, b: np.ndarray) -> np.ndarray: ...


def avg_pool2(img: np.ndarray) -> np.ndarray:
    """2×2 average pooling; an odd trailing row/column is dropped"""
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    x = img[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def avg_pool2_adjoint(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape)
    h, w = grad.shape[0] * 2, grad.shape[1] * 2
    q = 0.25 * grad
    out[0:h:2, 0:w:2] = q
    out[1:h:2, 0:w:2] = q
    out[0:h:2, 1:w:2] = q
    out[1:h:2, 1:w:2] = q
    return out


class PyramidPerceptual:
    """Mean over pyramid levels of per-level MSE"""

    name = "pyramid"

    def __init__(self, levels: int = 3):
        self.levels = levels

    def _pyramid(self, img: np.ndarray) -> list[np.ndarray]:
        out = [img]
        for _ in range(self.levels - 1):
            prev = out[-1]
            out.append(avg_pool2(prev) if prev.shape[0] >= 2 and prev.shape[1] >= 2 else prev)
        return out

    def loss(self, a: np.ndarray, b: np.ndarray) -> float:
        a, b = _check(a, b)
        levels = zip(self._pyramid(a), self._pyramid(b))
        return float(np.mean([np.mean((la - lb) ** 2) for la, lb in levels]))

    def grad(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = _check(a, b)
        pa, pb = self._pyramid(a), self._pyramid(b)
        grad = np.zeros_like(pa[-1])
        for level in range(self.levels - 1, -1, -1):
            diff = pa[level] - pb[level]
            grad = grad + 2.0 * diff / (diff.size * self.levels)
            if level > 0:
                below = pa[level - 1]
                pooled = below.shape[0] >= 2 and below.shape[1] >= 2
                grad = avg_pool2_adjoint(grad, below.shape) if pooled else grad
        return grad

    def pixel_map(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Finest-level squared error, channel mean, (H, W)"""
        a, b = _check(a, b)
        sq = (a - b) ** 2
        return sq.mean(axis=-1) if sq.ndim == 3 else sq

    def pixel_map_grad(self, a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> np.ndarray:
        a, b = _check(a, b)
        channels = a.shape[-1] if a.ndim == 3 else 1
        w = weights[..., None] if a.ndim == 3 else weights
        return 2.0 * (a - b) * w / channels


def _check(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Shape mismatch: {a.shape} vs {b.shape}")
    return a, b


_BACKENDS: dict[str, Callable[[], PerceptualBackend]] = {"pyramid": PyramidPerceptual}


def register_perceptual_backend(name: str, factory: Callable[[], PerceptualBackend]) -> None:
    _BACKENDS[name] = factory


def get_perceptual_backend(name: str = "pyramid") -> PerceptualBackend:
    if name == "none":
        raise ConfigError("Perceptual backend disabled (perceptual_backend: none)")
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ConfigError(f"Unknown perceptual backend '{name}', installed: {sorted(_BACKENDS)}") from None


def perceptual_loss(a: np.ndarray, b: np.ndarray, backend: PerceptualBackend | None = None) -> float:
    return (backend or get_perceptual_backend()).loss(a, b)
