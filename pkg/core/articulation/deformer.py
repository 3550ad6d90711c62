"""
Canonical Deformer
Triplane features decoded into non-rigid offsets, skinning-weight logits and
colour residuals, then applied to a canonical cloud
"""

from dataclasses import dataclass

import numpy as np

from core.articulation.mlp import MlpCache, MlpDecoder
from core.articulation.triplane import TriplaneEncoder
from core.errors import ShapeMismatchError
from core.gaussians.cloud import Gaussian, GaussianCloud, SpaceTag
from core.gaussians.quaternion import (
    left_matrix,
    normalize_backward,
    quat_multiply,
    quat_normalize,
    right_matrix,
)
from core.gaussians.sh import coeff_count


def _offset_quats(dq: np.ndarray) -> np.ndarray:
    dq = np.asarray(dq, dtype=np.float64)
    return np.concatenate([np.ones(dq.shape[:-1] + (1,)), dq], axis=-1)


def apply_nonrigid(g: Gaussian, deltas: tuple[np.ndarray, np.ndarray, np.ndarray]) -> Gaussian:
    """x_d = x_c + Δx, log s_d = log s_c + Δs, q_d = normalize(q_c · (1, Δq))"""
    dx, ds, dq = (np.asarray(d, dtype=np.float64) for d in deltas)
    return Gaussian(
        position=g.position + dx,
        rotation=quat_normalize(quat_multiply(g.rotation, _offset_quats(dq))),
        log_scale=g.log_scale + ds,
        opacity_logit=g.opacity_logit,
        sh=g.sh.copy(),
    )


def apply_nonrigid_cloud(
    cloud: GaussianCloud, dx: np.ndarray, ds: np.ndarray, dq: np.ndarray
) -> tuple[GaussianCloud, np.ndarray]:
    """Batched apply_nonrigid; also returns the unnormalised composed quaternions"""
    raw = quat_multiply(cloud.rotations, _offset_quats(dq))
    deformed = GaussianCloud(
        positions=cloud.positions + dx,
        rotations=quat_normalize(raw) if len(cloud) else raw,
        log_scales=cloud.log_scales + ds,
        opacity_logits=cloud.opacity_logits,
        sh=cloud.sh,
        space=SpaceTag.DEFORMED,
    )
    return deformed, raw


@dataclass
class DeformCache:
    canonical: GaussianCloud
    features: np.ndarray
    nonrigid: MlpCache
    skinning: MlpCache
    color: MlpCache
    composed_quats: np.ndarray
    rotation_offsets: np.ndarray
    skin_logits: np.ndarray


@dataclass
class Deformer:
    """
    Per-point decoders driven by a shared triplane

    Attributes:
        triplane: canonical-space feature encoder
        nonrigid: d -> 9 (Δx, Δs, Δq)
        skinning: d -> J weight logits
        color: d -> 1 + 3K residual on opacity logit and SH
    """

    triplane: TriplaneEncoder
    nonrigid: MlpDecoder
    skinning: MlpDecoder
    color: MlpDecoder

    def __post_init__(self):
        d = self.triplane.feature_dim
        for name in ("nonrigid", "skinning", "color"):
            dec = getattr(self, name)
            if dec.in_dim != d:
                raise ShapeMismatchError(f"{name} decoder expects {dec.in_dim} inputs, triplane gives {d}")
        if self.nonrigid.out_dim != 9:
            raise ShapeMismatchError(f"Non-rigid decoder must output 9 values, has {self.nonrigid.out_dim}")

    @property
    def sh_degree(self) -> int:
        return int(round(np.sqrt((self.color.out_dim - 1) / 3))) - 1

    @classmethod
    def create(
        cls,
        bbox_min: np.ndarray,
        bbox_max: np.ndarray,
        n_joints: int,
        sh_degree: int = 0,
        resolution: int = 64,
        feature_dim: int = 64,
        nonrigid_hidden: list[int] | None = None,
        skinning_hidden: list[int] | None = None,
        color_hidden: list[int] | None = None,
        seed: int = 0,
    ) -> "Deformer":
        return cls(
            triplane=TriplaneEncoder.create(bbox_min, bbox_max, resolution, feature_dim, seed=seed),
            nonrigid=MlpDecoder.create(feature_dim, nonrigid_hidden or [128, 128, 128], 9, seed=seed + 1),
            skinning=MlpDecoder.create(feature_dim, skinning_hidden or [128, 128, 128], n_joints, seed=seed + 2),
            color=MlpDecoder.create(
                feature_dim, color_hidden or [128], 1 + 3 * coeff_count(sh_degree), seed=seed + 3
            ),
        )

    def forward(self, canonical: GaussianCloud) -> tuple[GaussianCloud, np.ndarray, DeformCache]:
        """
        Deform a canonical cloud

        Returns:
            deformed cloud (opacity/SH residuals applied), skinning logits (N, J), cache
        """
        feats = self.triplane.query(canonical.positions)
        nr_out, nr_cache = self.nonrigid.forward(feats)
        skin_logits, skin_cache = self.skinning.forward(feats)
        col_out, col_cache = self.color.forward(feats)
        if col_out.shape[1] != 1 + 3 * canonical.sh.shape[1]:
            raise ShapeMismatchError("Color decoder width does not match the cloud's SH degree")

        deformed, raw = apply_nonrigid_cloud(canonical, nr_out[:, 0:3], nr_out[:, 3:6], nr_out[:, 6:9])
        deformed = deformed.replace(
            opacity_logits=canonical.opacity_logits + col_out[:, 0],
            sh=canonical.sh + col_out[:, 1:].reshape(canonical.sh.shape),
        )
        cache = DeformCache(canonical, feats, nr_cache, skin_cache, col_cache, raw, nr_out[:, 6:9], skin_logits)
        return deformed, skin_logits, cache

    def backward(
        self,
        cache: DeformCache,
        grad_positions: np.ndarray,
        grad_rotations: np.ndarray,
        grad_log_scales: np.ndarray,
        grad_opacity: np.ndarray,
        grad_sh: np.ndarray,
        grad_skin_logits: np.ndarray,
    ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
        """
        Back-propagate deformed-cloud gradients

        Returns:
            (canonical attribute grads, decoder/triplane parameter grads)
        """
        canonical = cache.canonical
        n = len(canonical)
        grad_raw = normalize_backward(cache.composed_quats, grad_rotations) if n else grad_rotations
        offsets = _offset_quats(cache.rotation_offsets)
        grad_qc = np.einsum("nji,nj->ni", right_matrix(offsets), grad_raw)
        grad_offset = np.einsum("nji,nj->ni", left_matrix(canonical.rotations), grad_raw)

        grad_nr = np.concatenate([grad_positions, grad_log_scales, grad_offset[:, 1:]], axis=1)
        grad_col = np.concatenate([grad_opacity[:, None], grad_sh.reshape(n, -1)], axis=1)

        nr_grads, gf_nr = self.nonrigid.backward(cache.nonrigid, grad_nr)
        skin_grads, gf_skin = self.skinning.backward(cache.skinning, grad_skin_logits)
        col_grads, gf_col = self.color.backward(cache.color, grad_col)
        grad_planes = self.triplane.backward(canonical.positions, gf_nr + gf_skin + gf_col)

        canonical_grads = {
            "positions": grad_positions,
            "rotations": grad_qc,
            "log_scales": grad_log_scales,
            "opacity_logits": grad_opacity,
            "sh": grad_sh,
        }
        param_grads = {
            "triplane.planes": grad_planes,
            **nr_grads.as_dict("nonrigid"),
            **skin_grads.as_dict("skinning"),
            **col_grads.as_dict("color"),
        }
        return canonical_grads, param_grads

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "triplane.planes": self.triplane.planes,
            **self.nonrigid.parameters("nonrigid"),
            **self.skinning.parameters("skinning"),
            **self.color.parameters("color"),
        }

    def with_parameters(self, params: dict[str, np.ndarray]) -> "Deformer":
        return Deformer(
            triplane=TriplaneEncoder(
                params.get("triplane.planes", self.triplane.planes), self.triplane.bbox_min, self.triplane.bbox_max
            ),
            nonrigid=self.nonrigid.with_parameters(params, "nonrigid"),
            skinning=self.skinning.with_parameters(params, "skinning"),
            color=self.color.with_parameters(params, "color"),
        )

    def copy(self) -> "Deformer":
        return Deformer(self.triplane.copy(), self.nonrigid.copy(), self.skinning.copy(), self.color.copy())
