"""
Metrics Files
Flat key=value lines, or a JSON document when the path ends in .json
"""

import json
import math
from pathlib import Path
from typing import Any

from core.errors import ParseError


def flatten(record: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested dicts become dotted keys"""
    flat: dict[str, Any] = {}
    for key, value in record.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, dict):
            flat.update(flatten(value, name))
        else:
            flat[name] = value
    return flat


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


def _json_safe(value: Any) -> Any:
    # JSON has no inf/nan literals
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_metrics(path: str | Path, record: dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(_json_safe(record), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return
    lines = [f"{k}={_format(v)}" for k, v in sorted(flatten(record).items())]
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def _parse_value(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_metrics(path: str | Path) -> dict[str, Any]:
    """Read either variant; key=value files come back flat"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"Invalid JSON: {e.msg}", path=path, line=e.lineno) from None
    record = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep or not key:
            raise ParseError("Expected key=value", path=path, line=number)
        record[key] = _parse_value(value)
    return record
