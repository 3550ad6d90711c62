"""
Image Sequences
Directory of frame_%05d.png files plus a manifest.txt giving fps and order
"""

from pathlib import Path

import numpy as np

from core.errors import ParseError, PreconditionError
from core.io.images import load_image, save_png

MANIFEST = "manifest.txt"
FRAME_PATTERN = "frame_{:05d}.png"


def write_image_sequence(frames: list[np.ndarray], directory: str | Path, fps: float = 24.0) -> Path:
    """Write the frames and the manifest; returns the manifest path"""
    if not frames:
        raise PreconditionError("Cannot write an empty image sequence")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(frames):
        name = FRAME_PATTERN.format(i)
        save_png(frame, directory / name)
        names.append(name)
    manifest = directory / MANIFEST
    manifest.write_text(f"fps={fps!r}\n" + "".join(f"{n}\n" for n in names), encoding="utf-8")
    return manifest


def read_manifest(path: str | Path) -> tuple[list[str], float]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("fps="):
        raise ParseError("Manifest must start with 'fps=<value>'", path=path, line=1)
    try:
        fps = float(lines[0][4:])
    except ValueError:
        raise ParseError(f"Invalid fps '{lines[0][4:]}'", path=path, line=1) from None
    names = [line.strip() for line in lines[1:] if line.strip()]
    return names, fps


def read_image_sequence(directory: str | Path) -> tuple[list[np.ndarray], float | None]:
    """
    Frames in manifest order, or in filename order when there is no manifest

    Returns:
        (float RGB frames, fps or None without a manifest)
    """
    directory = Path(directory)
    manifest = directory / MANIFEST
    if manifest.exists():
        names, fps = read_manifest(manifest)
    else:
        names, fps = sorted(p.name for p in directory.glob("frame_*.png")), None
    if not names:
        raise ParseError("Image sequence has no frames", path=directory)
    frames = []
    for name in names:
        path = directory / name
        if not path.exists():
            raise ParseError(f"Frame listed in manifest is missing: {name}", path=manifest)
        frames.append(load_image(path))
    return frames, fps
