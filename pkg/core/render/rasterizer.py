"""
Gaussian Rasterizer
Tile-based front-to-back splatting with analytic gradients, plus a per-pixel
oracle renderer sharing the same compositing rule
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from config.config import RenderConfig
from core.errors import PreconditionError, ShapeMismatchError, StaleCacheError
from core.gaussians.cloud import GaussianCloud
from core.gaussians.quaternion import normalize_backward, rotation_matrices, rotation_matrix_grad_to_quat
from core.gaussians.sh import COLOR_OFFSET, degree_from_count, sh_basis, sh_basis_jacobian
from core.render.camera import Camera

SPLAT_CHUNK = 256
SAFE_DIV = 1e-12


@dataclass
class RenderOutput:
    """color (H, W, 3), alpha (H, W) = 1 - final transmittance, depth (H, W)"""

    color: np.ndarray
    alpha: np.ndarray
    depth: np.ndarray

    @property
    def transmittance(self) -> np.ndarray:
        return 1.0 - self.alpha


@dataclass
class CloudGrads:
    """Gradients w.r.t. every cloud attribute plus the screen-space means"""

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    sh: np.ndarray
    means2d: np.ndarray

    @classmethod
    def zeros(cls, cloud: GaussianCloud) -> "CloudGrads":
        n = len(cloud)
        return cls(
            positions=np.zeros((n, 3)),
            rotations=np.zeros((n, 4)),
            log_scales=np.zeros((n, 3)),
            opacity_logits=np.zeros(n),
            sh=np.zeros_like(cloud.sh),
            means2d=np.zeros((n, 2)),
        )

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "positions": self.positions,
            "rotations": self.rotations,
            "log_scales": self.log_scales,
            "opacity_logits": self.opacity_logits,
            "sh": self.sh,
        }

    def slice(self, start: int, stop: int) -> "CloudGrads":
        return CloudGrads(
            self.positions[start:stop],
            self.rotations[start:stop],
            self.log_scales[start:stop],
            self.opacity_logits[start:stop],
            self.sh[start:stop],
            self.means2d[start:stop],
        )


@dataclass
class _Projected:
    visible: np.ndarray
    order: np.ndarray
    cam_points: np.ndarray
    means2d: np.ndarray
    cov2d: np.ndarray
    conics: np.ndarray
    radii: np.ndarray
    depths: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray
    color_raw: np.ndarray
    q_unit: np.ndarray
    rot: np.ndarray
    scales: np.ndarray
    cov3d: np.ndarray
    tr: np.ndarray
    basis: np.ndarray
    dirs: np.ndarray
    dists: np.ndarray


@dataclass
class _Tile:
    x0: int
    y0: int
    x1: int
    y1: int
    ids: np.ndarray
    final_t: np.ndarray = field(default=None)
    accum: np.ndarray = field(default=None)


@dataclass
class _RenderCache:
    cloud: GaussianCloud
    camera: Camera
    background: np.ndarray
    proj: _Projected
    tiles: list[_Tile]


def depth_sort(depths: np.ndarray) -> np.ndarray:
    """Ascending depth, ties by ascending index"""
    return np.argsort(np.asarray(depths, dtype=np.float64), kind="stable")


def _project_all(cloud: GaussianCloud, cam: Camera, settings: RenderConfig) -> _Projected:
    n = len(cloud)
    w_rot = cam.rotation
    cam_points = cloud.positions @ w_rot.T + cam.translation
    depths = cam_points[:, 2]
    visible = depths > settings.near
    tz = np.where(visible, depths, 1.0)
    tx, ty = cam_points[:, 0], cam_points[:, 1]

    norms = np.linalg.norm(cloud.rotations, axis=1, keepdims=True)
    q_unit = cloud.rotations / np.where(norms > 0, norms, 1.0)
    rot = rotation_matrices(q_unit)
    scales = cloud.scales
    m = rot * scales[:, None, :]
    cov3d = m @ np.swapaxes(m, 1, 2)

    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / tz
    jac[:, 0, 2] = -cam.fx * tx / tz**2
    jac[:, 1, 1] = cam.fy / tz
    jac[:, 1, 2] = -cam.fy * ty / tz**2
    tr = jac @ w_rot
    cov2d = tr @ cov3d @ np.swapaxes(tr, 1, 2)
    cov2d[:, 0, 0] += settings.dilation
    cov2d[:, 1, 1] += settings.dilation

    a, b, c = cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]
    det = a * c - b * b
    visible &= det > 0
    safe_det = np.where(det > 0, det, 1.0)
    conics = np.stack([c / safe_det, -b / safe_det, a / safe_det], axis=1)
    lam_max = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radii = settings.support_sigmas * np.sqrt(np.maximum(lam_max, 0.0))
    means2d = np.stack([cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy], axis=1)

    offsets = cloud.positions - cam.center
    dists = np.linalg.norm(offsets, axis=1)
    dirs = offsets / np.where(dists > 0, dists, 1.0)[:, None]
    basis = sh_basis(dirs, degree_from_count(cloud.sh.shape[1]))
    color_raw = np.einsum("nk,nkc->nc", basis, cloud.sh) + COLOR_OFFSET

    visible_ids = np.flatnonzero(visible)
    order = visible_ids[depth_sort(depths[visible_ids])]
    return _Projected(
        visible=visible,
        order=order,
        cam_points=cam_points,
        means2d=means2d,
        cov2d=cov2d,
        conics=conics,
        radii=radii,
        depths=depths,
        opacities=cloud.opacities,
        colors=np.clip(color_raw, 0.0, 1.0),
        color_raw=color_raw,
        q_unit=q_unit,
        rot=rot,
        scales=scales,
        cov3d=cov3d,
        tr=tr,
        basis=basis,
        dirs=dirs,
        dists=dists,
    )


def _pixel_grid(x0: int, y0: int, x1: int, y1: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[y0:y1, x0:x1]
    return xs.ravel() + 0.5, ys.ravel() + 0.5


def _splat_alpha(proj: _Projected, ids: np.ndarray, px: np.ndarray, py: np.ndarray, settings: RenderConfig):
    """Per-(pixel, splat) alpha after the support cutoff and clamp"""
    dx = px[:, None] - proj.means2d[ids, 0][None, :]
    dy = py[:, None] - proj.means2d[ids, 1][None, :]
    ca, cb, cc = proj.conics[ids, 0], proj.conics[ids, 1], proj.conics[ids, 2]
    maha = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
    gauss = np.exp(-0.5 * maha)
    raw = proj.opacities[ids] * gauss
    inside = maha <= settings.support_sigmas**2
    alpha = np.where(inside, np.minimum(raw, settings.alpha_clamp), 0.0)
    differentiable = inside & (raw < settings.alpha_clamp)
    return alpha, gauss, dx, dy, differentiable


def _chunk_weights(alpha: np.ndarray, trans: np.ndarray, done: np.ndarray, settings: RenderConfig):
    """Apply early termination to one chunk; returns (alpha, exclusive T, new T, done)"""
    alpha = np.where(done[:, None], 0.0, alpha)
    if settings.early_termination:
        inclusive = trans[:, None] * np.cumprod(1.0 - alpha, axis=1)
        keep = inclusive >= settings.transmittance_eps
        done = done | ~keep.all(axis=1)
        alpha = np.where(keep, alpha, 0.0)
    inclusive = trans[:, None] * np.cumprod(1.0 - alpha, axis=1)
    exclusive = np.concatenate([trans[:, None], inclusive[:, :-1]], axis=1)
    return alpha, exclusive, inclusive[:, -1], done


def _composite(proj: _Projected, ids: np.ndarray, px: np.ndarray, py: np.ndarray, settings: RenderConfig, chunk: int):
    """Front-to-back compositing; returns (accumulated color, final T, depth)"""
    p = len(px)
    trans = np.ones(p)
    accum = np.zeros((p, 3))
    depth = np.zeros(p)
    done = np.zeros(p, dtype=bool)
    for start in range(0, len(ids), chunk):
        sub = ids[start : start + chunk]
        alpha, _, _, _, _ = _splat_alpha(proj, sub, px, py, settings)
        alpha, exclusive, trans, done = _chunk_weights(alpha, trans, done, settings)
        weights = alpha * exclusive
        accum += weights @ proj.colors[sub]
        depth += weights @ proj.depths[sub]
        if done.all():
            break
    covered = 1.0 - trans
    depth = np.divide(depth, covered, out=np.zeros(p), where=covered > SAFE_DIV)
    return accum, trans, depth


def _check_inputs(cloud: GaussianCloud, cam: Camera, background) -> np.ndarray:
    if cam.width == 0 or cam.height == 0:
        raise PreconditionError(f"Cannot render a {cam.width}×{cam.height} image")
    bg = np.asarray(background, dtype=np.float64).reshape(-1)
    if bg.shape != (3,):
        raise ShapeMismatchError(f"Background must be an RGB triple, got shape {bg.shape}")
    return bg


class GaussianRasterizer:
    """
    Tiled rasterizer holding the cache of its last forward pass

    One instance per thread of work; backward() must receive the same cloud and
    camera objects passed to the preceding forward().
    """

    def __init__(self, settings: RenderConfig | None = None):
        self.settings = settings or RenderConfig()
        self._cache: _RenderCache | None = None

    def _tiles(self, proj: _Projected, cam: Camera) -> list[_Tile]:
        size = self.settings.tile_size
        tiles = []
        ids = proj.order
        mx, my, r = proj.means2d[ids, 0], proj.means2d[ids, 1], proj.radii[ids]
        for y0 in range(0, cam.height, size):
            y1 = min(y0 + size, cam.height)
            for x0 in range(0, cam.width, size):
                x1 = min(x0 + size, cam.width)
                hit = (mx + r >= x0 + 0.5) & (mx - r <= x1 - 0.5) & (my + r >= y0 + 0.5) & (my - r <= y1 - 0.5)
                tiles.append(_Tile(x0, y0, x1, y1, ids[hit]))
        return tiles

    def _map(self, fn, items: list) -> list:
        if self.settings.workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.settings.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def forward(self, cloud: GaussianCloud, cam: Camera, background=None) -> RenderOutput:
        bg = _check_inputs(cloud, cam, self.settings.background if background is None else background)
        proj = _project_all(cloud, cam, self.settings)
        tiles = self._tiles(proj, cam)

        color = np.empty((cam.height, cam.width, 3))
        alpha = np.empty((cam.height, cam.width))
        depth = np.empty((cam.height, cam.width))

        def run(tile: _Tile):
            px, py = _pixel_grid(tile.x0, tile.y0, tile.x1, tile.y1)
            return _composite(proj, tile.ids, px, py, self.settings, SPLAT_CHUNK)

        for tile, (accum, trans, tile_depth) in zip(tiles, self._map(run, tiles)):
            tile.final_t, tile.accum = trans, accum
            shape = (tile.y1 - tile.y0, tile.x1 - tile.x0)
            color[tile.y0 : tile.y1, tile.x0 : tile.x1] = (accum + trans[:, None] * bg).reshape(*shape, 3)
            alpha[tile.y0 : tile.y1, tile.x0 : tile.x1] = (1.0 - trans).reshape(shape)
            depth[tile.y0 : tile.y1, tile.x0 : tile.x1] = tile_depth.reshape(shape)

        self._cache = _RenderCache(cloud, cam, bg, proj, tiles)
        logger.trace(f"render gaussians={len(cloud)} visible={len(proj.order)} tiles={len(tiles)}")
        return RenderOutput(color, alpha, depth)

    def backward(
        self, cloud: GaussianCloud, cam: Camera, grad_color: np.ndarray, grad_alpha: np.ndarray | None = None
    ) -> CloudGrads:
        """
        Analytic gradients of a scalar loss w.r.t. every Gaussian attribute

        Args:
            grad_color: dL/dcolor, (H, W, 3)
            grad_alpha: dL/dalpha, (H, W) or None

        Raises:
            StaleCacheError: if no forward pass for this cloud and camera is cached
        """
        cache = self._cache
        if cache is None or cache.cloud is not cloud or cache.camera is not cam or len(cloud) != len(cache.proj.depths):
            raise StaleCacheError("render_backward needs the forward pass of the same cloud and camera")
        grad_color = np.asarray(grad_color, dtype=np.float64)
        grad_alpha = np.zeros((cam.height, cam.width)) if grad_alpha is None else np.asarray(grad_alpha, dtype=np.float64)
        if grad_color.shape != (cam.height, cam.width, 3) or grad_alpha.shape != (cam.height, cam.width):
            raise ShapeMismatchError("Upstream gradient shapes do not match the rendered image")

        proj = cache.proj
        n = len(cloud)
        settings = self.settings

        def run(tile: _Tile):
            return self._tile_backward(proj, tile, cache.background, grad_color, grad_alpha)

        g_mean = np.zeros((n, 2))
        g_conic = np.zeros((n, 3))
        g_opacity = np.zeros(n)
        g_rgb = np.zeros((n, 3))
        for tile, partial in zip(cache.tiles, self._map(run, cache.tiles)):
            if partial is None:
                continue
            ids = tile.ids
            g_mean[ids] += partial[0]
            g_conic[ids] += partial[1]
            g_opacity[ids] += partial[2]
            g_rgb[ids] += partial[3]

        grads = _projection_backward(cloud, cam, proj, g_mean, g_conic, g_rgb, settings)
        opac = proj.opacities
        grads.opacity_logits = g_opacity * opac * (1.0 - opac)
        return grads

    def _tile_backward(self, proj: _Projected, tile: _Tile, bg, grad_color, grad_alpha):
        if len(tile.ids) == 0:
            return None
        settings = self.settings
        px, py = _pixel_grid(tile.x0, tile.y0, tile.x1, tile.y1)
        gc = grad_color[tile.y0 : tile.y1, tile.x0 : tile.x1].reshape(-1, 3)
        ga = grad_alpha[tile.y0 : tile.y1, tile.x0 : tile.x1].reshape(-1)
        final_t = tile.final_t
        # dL/dcolor · final pixel colour; per-splat suffixes are this minus the running prefix
        gc_total = np.sum(gc * (tile.accum + final_t[:, None] * bg), axis=1)

        k = len(tile.ids)
        g_mean = np.zeros((k, 2))
        g_conic = np.zeros((k, 3))
        g_opacity = np.zeros(k)
        g_rgb = np.zeros((k, 3))

        trans = np.ones(len(px))
        gc_prefix = np.zeros(len(px))
        done = np.zeros(len(px), dtype=bool)
        for start in range(0, k, SPLAT_CHUNK):
            sub = tile.ids[start : start + SPLAT_CHUNK]
            part = slice(start, start + len(sub))
            alpha, gauss, dx, dy, differentiable = _splat_alpha(proj, sub, px, py, settings)
            alpha, exclusive, trans, done = _chunk_weights(alpha, trans, done, settings)
            weights = alpha * exclusive
            gc_color = gc @ proj.colors[sub].T
            gc_inclusive = gc_prefix[:, None] + np.cumsum(weights * gc_color, axis=1)
            gc_prefix = gc_inclusive[:, -1]
            gc_suffix = gc_total[:, None] - gc_inclusive

            one_minus = 1.0 - alpha
            safe = one_minus > SAFE_DIV
            inv = np.divide(1.0, one_minus, out=np.zeros_like(one_minus), where=safe)
            d_alpha = gc_color * exclusive - gc_suffix * inv
            d_alpha += ga[:, None] * final_t[:, None] * inv
            d_alpha = np.where(differentiable & (alpha > 0), d_alpha, 0.0)

            g_rgb[part] = weights.T @ gc
            g_opacity[part] = (d_alpha * gauss).sum(axis=0)
            d_maha = -0.5 * d_alpha * proj.opacities[sub][None, :] * gauss
            ca, cb, cc = proj.conics[sub, 0], proj.conics[sub, 1], proj.conics[sub, 2]
            g_conic[part, 0] = (d_maha * dx * dx).sum(axis=0)
            g_conic[part, 1] = (d_maha * 2.0 * dx * dy).sum(axis=0)
            g_conic[part, 2] = (d_maha * dy * dy).sum(axis=0)
            g_mean[part, 0] = (d_maha * -2.0 * (ca * dx + cb * dy)).sum(axis=0)
            g_mean[part, 1] = (d_maha * -2.0 * (cb * dx + cc * dy)).sum(axis=0)
            if done.all():
                break
        return g_mean, g_conic, g_opacity, g_rgb


def _projection_backward(
    cloud: GaussianCloud,
    cam: Camera,
    proj: _Projected,
    g_mean: np.ndarray,
    g_conic: np.ndarray,
    g_rgb: np.ndarray,
    settings: RenderConfig,
) -> CloudGrads:
    """Chain screen-space gradients back through EWA projection and SH colour"""
    grads = CloudGrads.zeros(cloud)
    vis = proj.visible
    if not np.any(vis):
        return grads
    grads.means2d = g_mean

    # conic -> 2D covariance
    ca, cb, cc = proj.conics[:, 0], proj.conics[:, 1], proj.conics[:, 2]
    q = np.stack([np.stack([ca, cb], -1), np.stack([cb, cc], -1)], axis=1)
    g_q = np.stack(
        [np.stack([g_conic[:, 0], 0.5 * g_conic[:, 1]], -1), np.stack([0.5 * g_conic[:, 1], g_conic[:, 2]], -1)],
        axis=1,
    )
    g_cov2d = -q @ g_q @ q

    # 2D covariance -> 3D covariance and projection Jacobian
    tr = proj.tr
    g_cov3d = np.swapaxes(tr, 1, 2) @ g_cov2d @ tr
    g_tr = 2.0 * g_cov2d @ tr @ proj.cov3d
    g_jac = g_tr @ cam.rotation.T

    t = proj.cam_points
    tx, ty = t[:, 0], t[:, 1]
    tz = np.where(vis, t[:, 2], 1.0)
    fx, fy = cam.fx, cam.fy
    g_t = np.zeros_like(t)
    g_t[:, 0] = g_jac[:, 0, 2] * (-fx / tz**2) + g_mean[:, 0] * fx / tz
    g_t[:, 1] = g_jac[:, 1, 2] * (-fy / tz**2) + g_mean[:, 1] * fy / tz
    g_t[:, 2] = (
        g_jac[:, 0, 0] * (-fx / tz**2)
        + g_jac[:, 0, 2] * (2.0 * fx * tx / tz**3)
        + g_jac[:, 1, 1] * (-fy / tz**2)
        + g_jac[:, 1, 2] * (2.0 * fy * ty / tz**3)
        - g_mean[:, 0] * fx * tx / tz**2
        - g_mean[:, 1] * fy * ty / tz**2
    )
    g_pos = g_t @ cam.rotation

    # view-dependent colour
    g_raw = g_rgb * ((proj.color_raw > 0.0) & (proj.color_raw < 1.0))
    grads.sh = proj.basis[:, :, None] * g_raw[:, None, :]
    if cloud.sh.shape[1] > 1:
        jac_basis = sh_basis_jacobian(proj.dirs, degree_from_count(cloud.sh.shape[1]))
        g_dir = np.einsum("nkd,nkc,nc->nd", jac_basis, cloud.sh, g_raw)
        radial = np.sum(g_dir * proj.dirs, axis=1, keepdims=True)
        g_pos += (g_dir - proj.dirs * radial) / np.where(proj.dists > 0, proj.dists, 1.0)[:, None]

    # 3D covariance -> scale and rotation
    m = proj.rot * proj.scales[:, None, :]
    g_m = 2.0 * g_cov3d @ m
    g_rot = g_m * proj.scales[:, None, :]
    g_scale = np.sum(g_m * proj.rot, axis=1)
    g_qunit = rotation_matrix_grad_to_quat(proj.q_unit, g_rot)

    mask = vis[:, None]
    grads.positions = np.where(mask, g_pos, 0.0)
    grads.log_scales = np.where(mask, g_scale * proj.scales, 0.0)
    grads.rotations = np.where(mask, normalize_backward(cloud.rotations, g_qunit), 0.0)
    grads.sh = np.where(vis[:, None, None], grads.sh, 0.0)
    grads.means2d = np.where(mask, g_mean, 0.0)
    return grads


def render(cloud: GaussianCloud, cam: Camera, background=None, settings: RenderConfig | None = None) -> RenderOutput:
    """Stateless tiled render"""
    return GaussianRasterizer(settings).forward(cloud, cam, background)


def render_backward(
    rasterizer: GaussianRasterizer,
    cloud: GaussianCloud,
    cam: Camera,
    grad_color: np.ndarray,
    grad_alpha: np.ndarray | None = None,
) -> CloudGrads:
    return rasterizer.backward(cloud, cam, grad_color, grad_alpha)


def render_naive(
    cloud: GaussianCloud, cam: Camera, background=None, settings: RenderConfig | None = None
) -> RenderOutput:
    """
    Oracle renderer: every pixel composites every visible Gaussian in global
    depth order, without tiles or bounding-box culling
    """
    settings = settings or RenderConfig()
    bg = _check_inputs(cloud, cam, settings.background if background is None else background)
    proj = _project_all(cloud, cam, settings)
    color = np.empty((cam.height, cam.width, 3))
    alpha = np.empty((cam.height, cam.width))
    depth = np.empty((cam.height, cam.width))
    chunk = max(len(proj.order), 1)
    for y in range(cam.height):
        for x in range(cam.width):
            px, py = np.array([x + 0.5]), np.array([y + 0.5])
            accum, trans, pixel_depth = _composite(proj, proj.order, px, py, settings, chunk)
            color[y, x] = accum[0] + trans[0] * bg
            alpha[y, x] = 1.0 - trans[0]
            depth[y, x] = pixel_depth[0]
    return RenderOutput(color, alpha, depth)
