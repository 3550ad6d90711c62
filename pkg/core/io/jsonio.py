"""Shared JSON document reading with structured parse errors"""

import json
from pathlib import Path
from typing import Any

import numpy as np

from core.errors import ParseError


def read_json(path: str | Path) -> Any:
    text = Path(path).read_bytes()
    try:
        return json.loads(text.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ParseError("File is not UTF-8", path=path, offset=e.start) from None
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", path=path, line=e.lineno, offset=e.pos) from None
    except RecursionError:
        raise ParseError("JSON nested too deeply", path=path) from None


def write_json(data: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def require(doc: Any, key: str, path, kind: type | tuple[type, ...] = object) -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"Missing field '{key}'", path=path)
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ParseError(f"Field '{key}' has the wrong type ({type(value).__name__})", path=path)
    return value


def as_array(value: Any, shape: tuple[int, ...], path, what: str) -> np.ndarray:
    """Numeric array of the given shape (-1 matches any length)"""
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError(f"{what} must be numeric", path=path) from None
    if arr.ndim != len(shape) or any(s not in (-1, a) for s, a in zip(shape, arr.shape)):
        raise ParseError(f"{what} has shape {arr.shape}, expected {shape}", path=path)
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{what} contains non-finite values", path=path)
    return arr
