"""
Checkpoints
HGSC container: magic, format version, then named sections. Gaussian
attribute arrays are stored as little-endian float32, every other float
array as little-endian float64, so save -> load -> save is byte-identical.

Layout:
    b"HGSC" | u32 version | u32 section count
    per section: u16 name length | name | u64 payload length | payload
Array-table payload:
    u32 count, then per array: u16 name length | name | u8 dtype | u8 ndim | u64 dims... | data
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger

from core.articulation.avatar import CLOUD_FIELDS, HumanAvatar
from core.articulation.deformer import Deformer
from core.articulation.lbs import LbsWeightMatrix
from core.articulation.mlp import MlpDecoder
from core.articulation.skeleton import Skeleton
from core.articulation.triplane import TriplaneEncoder
from core.errors import AvatarError, ParseError, TruncatedFileError, UnsupportedVersionError
from core.gaussians.cloud import STORAGE_DTYPE, GaussianCloud, SpaceTag
from core.training.adam import AdamState
from core.training.reconstruction import Reconstruction

MAGIC = b"HGSC"
FORMAT_VERSION = 1
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i4"), 3: np.dtype("<i8")}
DTYPE_CODES = {dt: code for code, dt in DTYPES.items()}
DECODERS = ("nonrigid", "skinning", "color")
MAX_NDIM = 8
KNOWN_SECTIONS = (
    "meta",
    "provenance",
    "scene_cloud",
    "human_cloud",
    "skeleton",
    "lbs",
    "triplane",
    "decoders",
    "train_state",
)


@dataclass
class Checkpoint:
    """Everything needed to resume, render or animate a reconstruction"""

    recon: Reconstruction
    train_state: AdamState | None = None
    iteration: int = 0
    config_hash: str = ""
    seed: int = 0
    version: int = FORMAT_VERSION

    def summary(self) -> dict:
        human, scene = self.recon.human, self.recon.scene
        return {
            "version": self.version,
            "gaussians": len(self.recon),
            "human_gaussians": len(human) if human else 0,
            "scene_gaussians": len(scene) if scene else 0,
            "joints": human.skeleton.n_joints if human else 0,
            "sh_degree": (human.canonical if human else scene).sh_degree,
            "iteration": self.iteration,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }


# Encoding --------------------------------------------------------------------


def _encode_arrays(arrays: dict[str, tuple[np.ndarray, str]]) -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, (arr, dtype) in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<"))
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<BB", DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def _encode_json(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _cloud_arrays(cloud: GaussianCloud) -> dict[str, tuple[np.ndarray, str]]:
    return {name: (getattr(cloud, name), STORAGE_DTYPE.str) for name in CLOUD_FIELDS}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    recon = ckpt.recon
    sections: list[tuple[str, bytes]] = []
    meta = {
        "has_human": recon.human is not None,
        "has_scene": recon.scene is not None,
        "scene_translation": recon.scene_translation.tolist(),
        "iteration": ckpt.iteration,
    }
    if recon.human is not None:
        meta["joint_names"] = list(recon.human.skeleton.joint_names)
    sections.append(("meta", _encode_json(meta)))
    sections.append(("provenance", _encode_json({"config_hash": ckpt.config_hash, "seed": ckpt.seed})))
    if recon.scene is not None:
        sections.append(("scene_cloud", _encode_arrays(_cloud_arrays(recon.scene))))
    if recon.human is not None:
        avatar = recon.human
        skel = avatar.skeleton
        deformer = avatar.deformer
        sections.append(("human_cloud", _encode_arrays(_cloud_arrays(avatar.canonical))))
        sections.append(
            (
                "skeleton",
                _encode_arrays(
                    {
                        "parents": (np.array(skel.parents), "<i4"),
                        "rest_local_transforms": (skel.rest_local_transforms, "<f8"),
                        "shape_params": (skel.shape_params, "<f8"),
                    }
                ),
            )
        )
        sections.append(
            (
                "lbs",
                _encode_arrays(
                    {
                        "base_weights": (avatar.weights.base_weights, "<f8"),
                        "learned_logit_offsets": (avatar.weights.learned_logit_offsets, "<f8"),
                    }
                ),
            )
        )
        tri = deformer.triplane
        sections.append(
            (
                "triplane",
                _encode_arrays(
                    {"planes": (tri.planes, "<f8"), "bbox_min": (tri.bbox_min, "<f8"), "bbox_max": (tri.bbox_max, "<f8")}
                ),
            )
        )
        decoder_params = {}
        for prefix in DECODERS:
            decoder_params.update(getattr(deformer, prefix).parameters(prefix))
        sections.append(("decoders", _encode_arrays({k: (v, "<f8") for k, v in decoder_params.items()})))
    if ckpt.train_state is not None:
        state = ckpt.train_state
        arrays: dict[str, tuple[np.ndarray, str]] = {
            "step": (np.array(state.step), "<i8"),
            "skipped": (np.array(state.skipped), "<i8"),
        }
        for name in sorted(state.m):
            arrays[f"m/{name}"] = (state.m[name], "<f8")
            arrays[f"v/{name}"] = (state.v[name], "<f8")
        sections.append(("train_state", _encode_arrays(arrays)))

    out = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(sections))]
    for name, payload in sections:
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<Q", len(payload)) + payload)
    return b"".join(out)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(ckpt)
    path.write_bytes(data)
    logger.info(f"checkpoint_saved path={path} gaussians={len(ckpt.recon)} bytes={len(data)}")


# Decoding --------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, path, base: int = 0):
        self.data = data
        self.pos = 0
        self.path = path
        self.base = base

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise TruncatedFileError(
                f"Need {n} bytes, {len(self.data) - self.pos} left", path=self.path, offset=self.base + self.pos
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (length,) = self.unpack("<H")
        raw = self.take(length)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("Section or array name is not UTF-8", path=self.path, offset=self.base + self.pos) from None


def _decode_arrays(payload: bytes, path, base: int) -> dict[str, np.ndarray]:
    reader = _Reader(payload, path, base)
    (count,) = reader.unpack("<I")
    arrays = {}
    for _ in range(count):
        name = reader.name()
        code, ndim = reader.unpack("<BB")
        if code not in DTYPES:
            raise ParseError(f"Array '{name}' has unknown dtype code {code}", path=path, offset=base + reader.pos)
        if ndim > MAX_NDIM:
            raise ParseError(f"Array '{name}' has {ndim} dimensions", path=path, offset=base + reader.pos)
        shape = reader.unpack(f"<{ndim}Q") if ndim else ()
        dtype = DTYPES[code]
        size = int(np.prod(shape, dtype=object)) if shape else 1
        raw = reader.take(size * dtype.itemsize)
        try:
            arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
        except ValueError as e:
            raise ParseError(f"Array '{name}' has invalid shape {shape}: {e}", path=path, offset=base + reader.pos) from None
        arrays[name] = arr.astype(np.float64) if dtype.kind == "f" else arr.astype(np.int64)
    return arrays


def _decode_json(payload: bytes, path, base: int) -> dict:
    try:
        doc = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"Section is not valid JSON: {e}", path=path, offset=base) from None
    except RecursionError:
        raise ParseError("JSON section nested too deeply", path=path, offset=base) from None
    if not isinstance(doc, dict):
        raise ParseError("JSON section must be an object", path=path, offset=base)
    return doc


def _need(arrays: dict[str, np.ndarray], section: str, names, path) -> list[np.ndarray]:
    missing = [n for n in names if n not in arrays]
    if missing:
        raise ParseError(f"Section '{section}' lacks arrays {missing}", path=path)
    return [arrays[n] for n in names]


def _cloud(arrays: dict[str, np.ndarray], section: str, space: SpaceTag, path) -> GaussianCloud:
    return GaussianCloud(*_need(arrays, section, CLOUD_FIELDS, path), space=space)


def _decoder(arrays: dict[str, np.ndarray], prefix: str, path) -> MlpDecoder:
    weights, biases = [], []
    while f"{prefix}.w{len(weights)}" in arrays:
        i = len(weights)
        weights.append(arrays[f"{prefix}.w{i}"])
        biases.append(_need(arrays, "decoders", [f"{prefix}.b{i}"], path)[0])
    if not weights:
        raise ParseError(f"Decoder '{prefix}' missing from checkpoint", path=path)
    return MlpDecoder(weights, biases)


def _avatar(sections: dict[str, dict], meta: dict, path) -> HumanAvatar:
    for name in ("human_cloud", "skeleton", "lbs", "triplane", "decoders"):
        if name not in sections:
            raise ParseError(f"Human checkpoint lacks section '{name}'", path=path)
    parents, rest, shape = _need(sections["skeleton"], "skeleton", ("parents", "rest_local_transforms", "shape_params"), path)
    skeleton = Skeleton(tuple(int(p) for p in parents), rest, shape, tuple(meta.get("joint_names", [])))
    weights = LbsWeightMatrix(*_need(sections["lbs"], "lbs", ("base_weights", "learned_logit_offsets"), path))
    planes, lo, hi = _need(sections["triplane"], "triplane", ("planes", "bbox_min", "bbox_max"), path)
    decoders = sections["decoders"]
    deformer = Deformer(TriplaneEncoder(planes, lo, hi), *(_decoder(decoders, p, path) for p in DECODERS))
    canonical = _cloud(sections["human_cloud"], "human_cloud", SpaceTag.CANONICAL, path)
    return HumanAvatar(canonical, skeleton, weights, deformer)


def _train_state(arrays: dict[str, np.ndarray], path) -> AdamState:
    step, skipped = _need(arrays, "train_state", ("step", "skipped"), path)
    m = {k[2:]: v for k, v in arrays.items() if k.startswith("m/")}
    v = {k[2:]: a for k, a in arrays.items() if k.startswith("v/")}
    if set(m) != set(v):
        raise ParseError("Optimizer moments m and v cover different parameters", path=path)
    return AdamState(m, v, int(step), int(skipped))


def decode_checkpoint(data: bytes, path: str | Path | None = None) -> Checkpoint:
    """
    Raises:
        ParseError: bad magic, malformed sections or inconsistent content
        TruncatedFileError: file ends inside a declared section
        UnsupportedVersionError: written by another format version
    """
    reader = _Reader(data, path)
    if len(data) < len(MAGIC) or reader.take(len(MAGIC)) != MAGIC:
        raise ParseError("Not an HGSC checkpoint (bad magic)", path=path, offset=0)
    version, count = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"Checkpoint version {version}, this build reads {FORMAT_VERSION}", path=path, offset=4)

    raw_sections: dict[str, tuple[bytes, int]] = {}
    for _ in range(count):
        name = reader.name()
        (length,) = reader.unpack("<Q")
        start = reader.pos
        payload = reader.take(length)
        if name not in KNOWN_SECTIONS:
            logger.warning(f"checkpoint_unknown_section name={name!r} bytes={length}")
            continue
        raw_sections[name] = (payload, start)
    if reader.pos != len(data):
        raise ParseError(f"{len(data) - reader.pos} trailing bytes after the last section", path=path, offset=reader.pos)
    if "meta" not in raw_sections:
        raise ParseError("Checkpoint has no meta section", path=path)

    json_sections = {"meta", "provenance"}
    sections: dict[str, dict] = {}
    for name, (payload, start) in raw_sections.items():
        decode = _decode_json if name in json_sections else _decode_arrays
        sections[name] = decode(payload, path, start)
    meta = sections["meta"]
    provenance = sections.get("provenance", {})

    try:
        if meta.get("has_scene") and "scene_cloud" not in sections:
            raise ParseError("Scene checkpoint lacks section 'scene_cloud'", path=path)
        human = _avatar(sections, meta, path) if meta.get("has_human") else None
        scene = _cloud(sections["scene_cloud"], "scene_cloud", SpaceTag.WORLD, path) if meta.get("has_scene") else None
        recon = Reconstruction(human, scene, meta.get("scene_translation", [0.0, 0.0, 0.0]))
        state = _train_state(sections["train_state"], path) if "train_state" in sections else None
        return Checkpoint(
            recon=recon,
            train_state=state,
            iteration=int(meta.get("iteration", 0)),
            config_hash=str(provenance.get("config_hash", "")),
            seed=int(provenance.get("seed", 0)),
            version=version,
        )
    except ParseError:
        raise
    except KeyError as e:
        raise ParseError(f"Missing section {e}", path=path) from None
    except (AvatarError, ValueError, TypeError, IndexError, ArithmeticError) as e:
        raise ParseError(f"Inconsistent checkpoint content: {e}", path=path) from None


def load_checkpoint(path: str | Path) -> Checkpoint:
    ckpt = decode_checkpoint(Path(path).read_bytes(), path)
    logger.info(f"checkpoint_loaded path={path} gaussians={len(ckpt.recon)} version={ckpt.version}")
    return ckpt
