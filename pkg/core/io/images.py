"""
Image Codecs
8-bit PNG through Pillow and a dependency-free binary PPM (P6) codec.
Float images in [0, 1] are quantised with round-half-up.
"""

import io
import re
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.errors import ParseError, PreconditionError, TruncatedFileError, UnsupportedFormatError

PNG_SUFFIXES = {".png"}
PPM_SUFFIXES = {".ppm", ".pnm"}
_PPM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantise to 8 bits: floats via floor(x·255 + 0.5) after clipping, uint8 passes through"""
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    if not np.all(np.isfinite(img)):
        raise PreconditionError("Image contains non-finite values")
    return np.floor(np.clip(img.astype(np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def to_float(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 255.0


def _check_rgb(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] not in (3, 4) or img.shape[0] == 0 or img.shape[1] == 0:
        raise PreconditionError(f"Expected an (H, W, 3|4) image, got {img.shape}")
    return img


# PNG -----------------------------------------------------------------------


def encode_png(img: np.ndarray) -> bytes:
    data = _check_rgb(to_uint8(img))
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(data), "RGBA" if data.shape[2] == 4 else "RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes, path: str | Path | None = None) -> np.ndarray:
    """uint8 (H, W, 3) or (H, W, 4); grey and palette images come back as RGB"""
    if not data:
        raise ParseError("Empty image file", path=path, offset=0)
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format != "PNG":
                raise UnsupportedFormatError(f"Expected PNG, found {im.format}", path=path)
            im = im.convert("RGBA" if im.mode in ("RGBA", "LA", "PA") else "RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    except ParseError:
        raise
    except (UnidentifiedImageError, Image.DecompressionBombError, OSError, SyntaxError, ValueError, EOFError) as e:
        raise ParseError(f"Unreadable PNG: {e}", path=path) from e


def save_png(img: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def load_png(path: str | Path) -> np.ndarray:
    return decode_png(Path(path).read_bytes(), path)


# PPM -----------------------------------------------------------------------


def encode_ppm(img: np.ndarray) -> bytes:
    data = _check_rgb(to_uint8(img))[..., :3]
    h, w = data.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(data).tobytes()


def decode_ppm(data: bytes, path: str | Path | None = None) -> np.ndarray:
    """Binary P6 with maxval <= 255, returned as uint8 (H, W, 3)"""
    if not data:
        raise ParseError("Empty image file", path=path, offset=0)
    pos = 0
    tokens = []
    for _ in range(4):
        match = _PPM_TOKEN.match(data, pos)
        if not match:
            raise ParseError("Incomplete PPM header", path=path, offset=pos)
        tokens.append(match.group(1))
        pos = match.end()
    if tokens[0] != b"P6":
        raise UnsupportedFormatError(f"Unsupported PPM magic {tokens[0][:8]!r}", path=path, offset=0)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise ParseError(f"Non-numeric PPM header field: {e}", path=path, offset=pos) from None
    if width <= 0 or height <= 0:
        raise ParseError(f"Invalid PPM size {width}x{height}", path=path, offset=pos)
    if not 0 < maxval < 256:
        raise UnsupportedFormatError(f"PPM maxval {maxval} not supported", path=path, offset=pos)
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ParseError("Missing whitespace after PPM header", path=path, offset=pos)
    pos += 1
    expected = width * height * 3
    body = data[pos : pos + expected]
    if len(body) < expected:
        raise TruncatedFileError(f"PPM body has {len(body)} of {expected} bytes", path=path, offset=pos + len(body))
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    if maxval != 255:
        pixels = np.floor(pixels.astype(np.float64) * 255.0 / maxval + 0.5).astype(np.uint8)
    return pixels.copy()


def save_ppm(img: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(encode_ppm(img))


def load_ppm(path: str | Path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes(), path)


# By suffix -----------------------------------------------------------------


def save_image(img: np.ndarray, path: str | Path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix in PNG_SUFFIXES:
        save_png(img, path)
    elif suffix in PPM_SUFFIXES:
        save_ppm(img, path)
    else:
        raise UnsupportedFormatError(f"Unknown image suffix '{suffix}'", path=path)


def load_image(path: str | Path) -> np.ndarray:
    """Float RGB in [0, 1], shape (H, W, 3); any alpha channel is dropped"""
    suffix = Path(path).suffix.lower()
    if suffix in PNG_SUFFIXES:
        raw = load_png(path)
    elif suffix in PPM_SUFFIXES:
        raw = load_ppm(path)
    else:
        raise UnsupportedFormatError(f"Unknown image suffix '{suffix}'", path=path)
    return to_float(raw[..., :3])


def load_mask(path: str | Path) -> np.ndarray:
    """Foreground mask in [0, 1], shape (H, W), from the first channel"""
    return load_image(path)[..., 0]


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    mask = np.asarray(mask, dtype=np.float64)
    save_image(np.repeat(mask[..., None], 3, axis=2), path)
