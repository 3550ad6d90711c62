"""
PLY Point Sets
ASCII and binary little-endian vertex parsing (x, y, z and optional
red, green, blue) plus a binary writer for positions and colours
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from core.errors import ParseError, PreconditionError, TruncatedFileError, UnsupportedFormatError
from core.gaussians.cloud import GaussianCloud
from core.gaussians.sh import COLOR_OFFSET, SH_C0
from core.io.images import to_uint8

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}  # fmt: skip
FORMATS = ("ascii", "binary_little_endian", "binary_big_endian")


@dataclass
class PointSet:
    """positions (N, 3) float64; colors (N, 3) uint8 or None"""

    positions: np.ndarray
    colors: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class _Element:
    name: str
    count: int
    properties: list[tuple[str, str]]  # (name, numpy type); list properties use "list"
    line: int

    @property
    def has_lists(self) -> bool:
        return any(kind == "list" for _, kind in self.properties)

    def dtype(self, order: str) -> np.dtype:
        return np.dtype([(name, order + kind) for name, kind in self.properties])


def _parse_header(data: bytes, path) -> tuple[str, list[_Element], int]:
    end = data.find(b"end_header")
    if not data.startswith(b"ply"):
        raise ParseError("Missing 'ply' magic", path=path, line=1, offset=0)
    if end < 0:
        raise ParseError("Header has no end_header line", path=path, offset=len(data))
    newline = data.find(b"\n", end)
    body_start = len(data) if newline < 0 else newline + 1
    try:
        lines = data[:end].decode("ascii").splitlines()
    except UnicodeDecodeError as e:
        raise ParseError("Header is not ASCII", path=path, offset=e.start) from None

    fmt = None
    elements: list[_Element] = []
    for number, raw in enumerate(lines[1:], start=2):
        words = raw.split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        keyword = words[0]
        if keyword == "format":
            if len(words) != 3 or words[1] not in FORMATS:
                raise ParseError(f"Unknown format line '{raw}'", path=path, line=number)
            if words[1] == "binary_big_endian":
                raise UnsupportedFormatError("Big-endian PLY bodies are not supported", path=path, line=number)
            fmt = words[1]
        elif keyword == "element":
            if len(words) != 3:
                raise ParseError(f"Malformed element line '{raw}'", path=path, line=number)
            try:
                count = int(words[2])
            except ValueError:
                raise ParseError(f"Element count '{words[2]}' is not an integer", path=path, line=number) from None
            if count < 0:
                raise ParseError("Negative element count", path=path, line=number)
            elements.append(_Element(words[1], count, [], number))
        elif keyword == "property":
            if not elements:
                raise ParseError("Property before any element", path=path, line=number)
            if words[-1] in {name for name, _ in elements[-1].properties}:
                raise ParseError(f"Duplicate property '{words[-1]}'", path=path, line=number)
            if len(words) == 5 and words[1] == "list":
                elements[-1].properties.append((words[4], "list"))
            elif len(words) == 3 and words[1] in PLY_TYPES:
                elements[-1].properties.append((words[2], PLY_TYPES[words[1]]))
            else:
                raise ParseError(f"Malformed property line '{raw}'", path=path, line=number)
        else:
            raise ParseError(f"Unknown header keyword '{keyword}'", path=path, line=number)
    if fmt is None:
        raise ParseError("Header has no format line", path=path)
    return fmt, elements, body_start


def _vertex_fields(vertex: _Element, path) -> None:
    names = {name for name, _ in vertex.properties}
    missing = [axis for axis in ("x", "y", "z") if axis not in names]
    if missing:
        raise ParseError(f"Vertex element lacks {missing}", path=path, line=vertex.line)
    for name, kind in vertex.properties:
        if name in ("x", "y", "z") and kind == "list":
            raise ParseError(f"Coordinate '{name}' cannot be a list", path=path, line=vertex.line)


def _ascii_vertices(data: bytes, start: int, elements: list[_Element], vertex: _Element, header_lines: int, path):
    text = data[start:].decode("ascii", errors="replace").splitlines()
    skip = 0
    for element in elements:
        if element is vertex:
            break
        skip += element.count
    rows = text[skip : skip + vertex.count]
    if len(rows) < vertex.count:
        raise TruncatedFileError(
            f"Expected {vertex.count} vertices, found {len(rows)}", path=path, line=header_lines + skip + len(rows) + 1
        )
    width = len(vertex.properties)
    table = np.empty((vertex.count, width))
    for i, row in enumerate(rows):
        tokens = row.split()
        if len(tokens) != width:
            raise ParseError(f"Vertex has {len(tokens)} values, expected {width}", path=path, line=header_lines + skip + i + 1)
        try:
            table[i] = [float(t) for t in tokens]
        except ValueError as e:
            raise ParseError(f"Non-numeric vertex value: {e}", path=path, line=header_lines + skip + i + 1) from None
    return {name: table[:, j] for j, (name, _) in enumerate(vertex.properties)}


def _binary_vertices(data: bytes, start: int, elements: list[_Element], vertex: _Element, path):
    offset = start
    for element in elements:
        if element is vertex:
            break
        if element.has_lists:
            raise UnsupportedFormatError(
                f"Binary element '{element.name}' with list properties precedes the vertices", path=path, line=element.line
            )
        offset += element.count * element.dtype("<").itemsize
    dtype = vertex.dtype("<")
    need = vertex.count * dtype.itemsize
    if offset + need > len(data):
        raise TruncatedFileError(
            f"Vertex block needs {need} bytes, {max(len(data) - offset, 0)} available", path=path, offset=len(data)
        )
    table = np.frombuffer(data, dtype=dtype, count=vertex.count, offset=offset)
    return {name: table[name].astype(np.float64) for name, _ in vertex.properties}


def parse_ply(data: bytes, path: str | Path | None = None) -> PointSet:
    fmt, elements, body_start = _parse_header(data, path)
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise ParseError("No vertex element", path=path)
    _vertex_fields(vertex, path)
    if vertex.has_lists:
        raise UnsupportedFormatError("List properties on vertices are not supported", path=path, line=vertex.line)
    if fmt == "ascii":
        header_lines = data[:body_start].count(b"\n")
        columns = _ascii_vertices(data, body_start, elements, vertex, header_lines, path)
    else:
        columns = _binary_vertices(data, body_start, elements, vertex, path)

    positions = np.stack([columns["x"], columns["y"], columns["z"]], axis=1) if vertex.count else np.zeros((0, 3))
    if not np.all(np.isfinite(positions)):
        raise ParseError("Vertex positions contain non-finite values", path=path)
    colors = None
    if all(c in columns for c in ("red", "green", "blue")):
        rgb = np.stack([columns["red"], columns["green"], columns["blue"]], axis=1) if vertex.count else np.zeros((0, 3))
        if not np.all(np.isfinite(rgb)):
            raise ParseError("Vertex colours contain non-finite values", path=path)
        colors = np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)
    return PointSet(positions, colors)


def load_ply(path: str | Path) -> PointSet:
    points = parse_ply(Path(path).read_bytes(), path)
    logger.debug(f"ply_loaded path={path} vertices={len(points)} colors={points.colors is not None}")
    return points


def encode_ply(positions: np.ndarray, colors: np.ndarray | None = None, as_text: bool = False) -> bytes:
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    props = ["float x", "float y", "float z"]
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if colors is not None:
        colors = to_uint8(colors).reshape(-1, 3)
        if len(colors) != n:
            raise PreconditionError(f"{len(colors)} colours for {n} positions")
        props += ["uchar red", "uchar green", "uchar blue"]
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    header = ["ply", f"format {'ascii' if as_text else 'binary_little_endian'} 1.0", f"element vertex {n}"]
    header += [f"property {p}" for p in props] + ["end_header"]
    head = ("\n".join(header) + "\n").encode("ascii")

    table = np.zeros(n, dtype=np.dtype(fields))
    for j, axis in enumerate("xyz"):
        table[axis] = positions[:, j]
    if colors is not None:
        for j, channel in enumerate(("red", "green", "blue")):
            table[channel] = colors[:, j]
    if not as_text:
        return head + table.tobytes()
    rows = []
    for row in table:
        values = [repr(float(row[a])) for a in "xyz"]
        if colors is not None:
            values += [str(int(row[c])) for c in ("red", "green", "blue")]
        rows.append(" ".join(values))
    return head + "".join(f"{r}\n" for r in rows).encode("ascii")


def cloud_colors(cloud: GaussianCloud) -> np.ndarray:
    """View-independent (DC) colour of each Gaussian in [0, 1]"""
    return np.clip(SH_C0 * cloud.sh[:, 0, :] + COLOR_OFFSET, 0.0, 1.0)


def save_ply(source: GaussianCloud | PointSet | np.ndarray, path: str | Path, as_text: bool = False) -> None:
    """Write positions (float32) and colours (uint8, round-half-up)"""
    if isinstance(source, GaussianCloud):
        positions, colors = source.positions, cloud_colors(source)
    elif isinstance(source, PointSet):
        positions, colors = source.positions, source.colors
    else:
        positions, colors = np.asarray(source), None
    Path(path).write_bytes(encode_ply(positions, colors, as_text))
    logger.debug(f"ply_saved path={path} vertices={len(positions)}")
