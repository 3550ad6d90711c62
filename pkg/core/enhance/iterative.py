"""
Iterative Enhancement
Outer loop: render novel views, enhance them, re-optimise the Gaussians
against the enhanced frames for a fixed number of inner steps
"""

from dataclasses import dataclass, field

from loguru import logger

from config.config import EnhanceConfig, RenderConfig, TrainConfig
from core.enhance.enhancers import SequenceEnhancer, check_enhanced
from core.enhance.sequence import PoseSequence
from core.enhance.trajectory import CameraTrajectory, generate_synthetic_views
from core.errors import EnhancerError, PreconditionError
from core.losses.perceptual import PerceptualBackend
from core.training.reconstruction import Reconstruction
from core.training.trainer import Trainer, TrainReport
from core.training.views import TrainingView

SCOPE_GROUPS = {
    "joint": ("human", "decoders", "scene"),
    "human_only": ("human", "decoders"),
}


@dataclass
class EnhanceResult:
    recon: Reconstruction
    outer_iterations: int = 0
    enhancer_calls: int = 0
    inner_steps: int = 0
    reports: list[TrainReport] = field(default_factory=list)
    aborted: bool = False


def _render_round(recon: Reconstruction, traj: CameraTrajectory, poses: PoseSequence | None, settings):
    if poses is None:
        cloud, _ = recon.compose()
        return generate_synthetic_views(cloud, traj, settings=settings), [None] * len(traj)
    if len(poses) != len(traj):
        raise PreconditionError(f"{len(poses)} poses for {len(traj)} trajectory cameras")
    clouds = [recon.compose(frame)[0] for frame in poses.frames]
    return generate_synthetic_views(clouds, traj, settings=settings), list(poses.frames)


def iterative_enhance(
    recon: Reconstruction,
    enhancer: SequenceEnhancer,
    traj: CameraTrajectory,
    train_cfg: TrainConfig | None = None,
    enhance_cfg: EnhanceConfig | None = None,
    render_cfg: RenderConfig | None = None,
    poses: PoseSequence | None = None,
    backend: PerceptualBackend | None = None,
) -> EnhanceResult:
    """
    Run enhance_outer_E rounds of render → enhance → enhance_inner_T training steps

    Enhanced frames carry no masks, so the mask term is off. The scope flag
    decides whether scene Gaussians are re-optimised too. If the enhancer fails
    or returns mismatched frames the loop stops and returns the last complete
    reconstruction with aborted=True.

    Args:
        recon: starting reconstruction G_0 (not modified)
        enhancer: frame-sequence refiner
        traj: cameras the synthetic views are rendered from
        poses: optional body pose per trajectory camera (rest pose otherwise)
    """
    train_cfg = train_cfg or TrainConfig()
    enhance_cfg = enhance_cfg or EnhanceConfig()
    outer, inner = train_cfg.enhance_outer_E, train_cfg.enhance_inner_T
    if outer < 1 or inner < 1:
        raise PreconditionError(f"Need E >= 1 and T >= 1, got E={outer} T={inner}")
    groups = [g for g in train_cfg.trainable if g in SCOPE_GROUPS[enhance_cfg.scope]]
    inner_cfg = train_cfg.model_copy(update={"iterations": inner, "trainable": groups})

    result = EnhanceResult(recon.copy())
    for e in range(1, outer + 1):
        frames, frame_poses = _render_round(result.recon, traj, poses, render_cfg)
        result.enhancer_calls += 1
        try:
            enhanced = check_enhanced(frames, enhancer(frames))
        except EnhancerError as err:
            logger.error(f"enhance_aborted outer={e} error={err}")
            result.aborted = True
            return result

        views = [
            TrainingView(image, cam, mask=None, pose=pose, view_id=f"novel{k:03d}")
            for k, (image, cam, pose) in enumerate(zip(enhanced, traj.cameras, frame_poses))
        ]
        trainer = Trainer(result.recon.copy(), views, inner_cfg, render_cfg, backend)
        report = trainer.run(inner)
        result.recon = trainer.recon
        result.reports.append(report)
        result.inner_steps += report.iterations
        result.outer_iterations = e
        logger.info(f"enhance_outer e={e}/{outer} steps={report.iterations} loss={report.losses[-1]:.6f}")

    logger.success(
        f"enhance_done outer={result.outer_iterations} enhancer_calls={result.enhancer_calls} "
        f"inner_steps={result.inner_steps} scope={enhance_cfg.scope}"
    )
    return result
