"""
Sequence Enhancers
Frame-sequence refiners plugged into iterative enhancement
"""

import subprocess
import tempfile
from pathlib import Path
from typing import Protocol

import numpy as np
from loguru import logger
from scipy.ndimage import gaussian_filter

from config.config import EnhanceConfig
from core.errors import EnhancerError, ParseError
from core.io.sequence import read_image_sequence, write_image_sequence


class SequenceEnhancer(Protocol):
    """Maps a frame sequence to a refined sequence of the same length and resolution"""

    def __call__(self, frames: list[np.ndarray]) -> list[np.ndarray]: ...


def check_enhanced(frames: list[np.ndarray], enhanced: list[np.ndarray]) -> list[np.ndarray]:
    if len(enhanced) != len(frames):
        raise EnhancerError(f"Enhancer returned {len(enhanced)} frames for {len(frames)}")
    for i, (a, b) in enumerate(zip(frames, enhanced)):
        if np.shape(a) != np.shape(b):
            raise EnhancerError(f"Frame {i}: enhancer changed shape {np.shape(a)} -> {np.shape(b)}")
        if not np.all(np.isfinite(b)):
            raise EnhancerError(f"Frame {i}: enhancer produced non-finite pixels")
    return [np.asarray(b, dtype=np.float64) for b in enhanced]


class IdentityEnhancer:
    def __call__(self, frames: list[np.ndarray]) -> list[np.ndarray]:
        return [np.array(f, dtype=np.float64) for f in frames]


class UnsharpMaskEnhancer:
    """Sharpen each frame: x + amount · (x - blur(x)), clipped to [0, 1]"""

    def __init__(self, sigma: float = 1.0, amount: float = 0.5):
        self.sigma = sigma
        self.amount = amount

    def __call__(self, frames: list[np.ndarray]) -> list[np.ndarray]:
        out = []
        for frame in frames:
            frame = np.asarray(frame, dtype=np.float64)
            blurred = gaussian_filter(frame, sigma=(self.sigma, self.sigma, 0), mode="nearest")
            out.append(np.clip(frame + self.amount * (frame - blurred), 0.0, 1.0))
        return out


class ExternalEnhancer:
    """
    Shell out to a command that reads and writes the image-sequence format

    The command gets three extra arguments: input dir, output dir and the input
    manifest path. It must exit 0 and leave the same number of frames in the
    output dir.
    """

    def __init__(self, command: list[str], fps: float = 24.0, timeout_s: float | None = None):
        if not command:
            raise EnhancerError("External enhancer needs a command")
        self.command = list(command)
        self.fps = fps
        self.timeout_s = timeout_s

    def __call__(self, frames: list[np.ndarray]) -> list[np.ndarray]:
        with tempfile.TemporaryDirectory(prefix="enhance-") as tmp:
            src, dst = Path(tmp) / "in", Path(tmp) / "out"
            manifest = write_image_sequence(frames, src, self.fps)
            dst.mkdir()
            args = [*self.command, str(src), str(dst), str(manifest)]
            logger.info(f"enhancer_run command={args[0]} frames={len(frames)}")
            try:
                proc = subprocess.run(args, capture_output=True, text=True, timeout=self.timeout_s, check=False)
            except (OSError, subprocess.TimeoutExpired) as e:
                raise EnhancerError(f"Enhancer failed to run: {e}") from e
            if proc.returncode != 0:
                raise EnhancerError(f"Enhancer exited {proc.returncode}: {proc.stderr.strip()[:500]}")
            try:
                enhanced, _ = read_image_sequence(dst)
            except (ParseError, FileNotFoundError) as e:
                raise EnhancerError(f"Enhancer output unreadable: {e}") from e
        return enhanced


def make_enhancer(cfg: EnhanceConfig) -> SequenceEnhancer:
    if cfg.enhancer == "identity":
        return IdentityEnhancer()
    if cfg.enhancer == "unsharp":
        return UnsharpMaskEnhancer(cfg.unsharp_sigma, cfg.unsharp_amount)
    return ExternalEnhancer(cfg.command, cfg.fps)
