"""
Reconstruction Trainer
Render, compare, back-propagate and step every trainable parameter group,
with adaptive density control over the human and scene clouds
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from config.config import LearningRates, RenderConfig, TrainConfig
from core.errors import PreconditionError, TrainingDivergedError
from core.losses.objectives import LossBreakdown, RegionSet, region_loss
from core.losses.perceptual import PerceptualBackend
from core.render.rasterizer import GaussianRasterizer
from core.training.adam import AdamState, adam_step
from core.training.density import DensityStats, densify_and_prune
from core.training.evaluate import evaluate
from core.training.reconstruction import SCENE_PREFIX, Reconstruction, parameter_group
from core.training.views import TrainingView, ViewSampler, check_views

RegionMap = RegionSet | dict[str, RegionSet] | None

_FIELD_RATES = {
    "sh": "sh",
    "opacity_logits": "opacity",
    "log_scales": "scale",
    "rotations": "rotation",
    "lbs_offsets": "decoders",
}


def position_lr(rates: LearningRates, iteration: int, horizon: int) -> float:
    """Log-linear decay from position to position_final over the horizon"""
    t = min(max(iteration / max(horizon, 1), 0.0), 1.0)
    start, final = rates.position, rates.position_final
    if start <= 0.0 or final <= 0.0:
        return start * (1.0 - t) * rates.position_scale
    return math.exp((1.0 - t) * math.log(start) + t * math.log(final)) * rates.position_scale


def learning_rate(name: str, rates: LearningRates, iteration: int, horizon: int) -> float:
    prefix, _, attribute = name.partition(".")
    if prefix == "triplane":
        return rates.triplane
    if prefix in ("nonrigid", "skinning", "color"):
        return rates.decoders
    if attribute == "positions":
        return position_lr(rates, iteration, horizon)
    return getattr(rates, _FIELD_RATES[attribute])


@dataclass
class TrainReport:
    """Loss history, Gaussian counts and final held-out metrics of a run"""

    iterations: int = 0
    losses: list[float] = field(default_factory=list)
    loss_series: list[dict[str, float]] = field(default_factory=list)
    gaussian_counts: list[int] = field(default_factory=list)
    densify_events: int = 0
    skipped_steps: int = 0
    nonfinite_steps: int = 0
    final_metrics: dict | None = None
    wall_clock_s: float = 0.0

    def extend(self, other: "TrainReport") -> None:
        """Append a later run on the same trainer"""
        self.iterations += other.iterations
        self.losses.extend(other.losses)
        self.loss_series.extend(other.loss_series)
        self.gaussian_counts.extend(other.gaussian_counts)
        self.densify_events += other.densify_events
        self.skipped_steps += other.skipped_steps
        self.nonfinite_steps += other.nonfinite_steps
        self.final_metrics = other.final_metrics or self.final_metrics
        self.wall_clock_s += other.wall_clock_s

    def as_record(self) -> dict:
        record = {
            "iterations": self.iterations,
            "final_loss": self.losses[-1] if self.losses else math.nan,
            "gaussians": self.gaussian_counts[-1] if self.gaussian_counts else 0,
            "densify_events": self.densify_events,
            "skipped_steps": self.skipped_steps,
            "wall_clock_s": round(self.wall_clock_s, 3),
        }
        if self.final_metrics:
            record.update({f"heldout_{k}": v for k, v in self.final_metrics["mean"].items()})
        return record


class Trainer:
    """
    Owns a Reconstruction, its optimizer state and density statistics

    One Trainer is the single mutator of its state; run() may be called
    repeatedly (critique rounds, enhancement inner loops) and continues the
    optimizer state and iteration counter.
    """

    def __init__(
        self,
        recon: Reconstruction,
        views: list[TrainingView],
        cfg: TrainConfig | None = None,
        render_cfg: RenderConfig | None = None,
        backend: PerceptualBackend | None = None,
    ):
        check_views(views)
        self.cfg = cfg or TrainConfig()
        self.recon = recon
        self.views = list(views)
        self.backend = backend
        self.rasterizer = GaussianRasterizer(render_cfg)
        self.state = AdamState()
        self.iteration = 0
        self._sampler = ViewSampler(len(self.views), seed=self.cfg.seed, random=self.cfg.sample_views)
        self._rng = np.random.default_rng(self.cfg.seed + 1)
        self._extent = {prefix: self._part_extent(prefix) for prefix in self._parts()}
        self._stats = {prefix: DensityStats.zeros(self._part_len(prefix)) for prefix in self._parts()}

    # parts of the reconstruction that carry per-Gaussian rows
    def _parts(self) -> list[str]:
        parts = []
        if self.recon.scene is not None:
            parts.append(SCENE_PREFIX)
        if self.recon.human is not None:
            parts.append("human")
        return parts

    def _part_cloud(self, prefix: str):
        return self.recon.scene if prefix == SCENE_PREFIX else self.recon.human.canonical

    def _part_len(self, prefix: str) -> int:
        return len(self._part_cloud(prefix))

    def _part_extent(self, prefix: str) -> float:
        return self._part_cloud(prefix).bounding_sphere()[1]

    def _regions_for(self, view: TrainingView, regions: RegionMap) -> RegionSet | None:
        if isinstance(regions, dict):
            return regions.get(view.view_id)
        return regions

    def _lrs(self, names) -> dict[str, float]:
        return {
            name: learning_rate(name, self.cfg.lr, self.iteration, self.cfg.iterations) for name in names
        }

    def step(self, regions: RegionMap = None) -> LossBreakdown:
        """One optimisation step on one sampled view"""
        view = self.views[self._sampler.next()]
        cloud, compose_cache = self.recon.compose(view.pose)
        out = self.rasterizer.forward(cloud, view.camera)
        target_mask = view.mask if self.recon.scene is None else None
        result = region_loss(
            out.color,
            view.image,
            target_mask,
            out.alpha,
            self._regions_for(view, regions),
            self.cfg.loss,
            self.backend,
        )
        self.iteration += 1
        if not math.isfinite(result.total):
            return result.breakdown

        grads = self.rasterizer.backward(cloud, view.camera, result.grad_color, result.grad_alpha)
        param_grads = self.recon.backward(compose_cache, grads)
        trainable = set(self.cfg.trainable)
        param_grads = {k: v for k, v in param_grads.items() if parameter_group(k) in trainable}
        params = self.recon.parameters()
        new_params, self.state = adam_step(params, param_grads, self.state, self._lrs(param_grads))
        self.recon = self.recon.with_parameters(new_params)

        if self.cfg.density.enabled and self.iteration < self.cfg.density.stop_iter:
            width, height = view.resolution
            offset = 0
            for prefix in self._parts():
                n = self._part_len(prefix)
                if prefix in trainable:
                    self._stats[prefix].accumulate(grads.means2d[offset : offset + n], width, height)
                offset += n
        return result.breakdown

    def _density_due(self) -> bool:
        d = self.cfg.density
        return d.enabled and d.start_iter <= self.iteration < d.stop_iter and self.iteration % d.interval == 0

    def densify(self) -> int:
        """Run clone/split/prune on every trainable part; returns the number of parts changed"""
        changed = 0
        for prefix in self._parts():
            if prefix not in self.cfg.trainable:
                continue
            cloud = self._part_cloud(prefix)
            result = densify_and_prune(
                cloud, self._stats[prefix].average(), self.cfg.density, self._extent[prefix], self._rng
            )
            self._stats[prefix] = DensityStats.zeros(len(result.cloud))
            if not result.changed:
                continue
            changed += 1
            self.state = self.state.remap(prefix, result.source_index, result.is_new)
            if prefix == SCENE_PREFIX:
                self.recon = Reconstruction(self.recon.human, result.cloud, self.recon.scene_translation)
            else:
                human = self.recon.human.reindexed(result.cloud, result.source_index)
                self.recon = Reconstruction(human, self.recon.scene, self.recon.scene_translation)
            logger.info(
                f"density_event iter={self.iteration} part={prefix} cloned={result.cloned} "
                f"split={result.split} pruned={result.pruned} gaussians={len(result.cloud)}"
            )
        return changed

    def run(
        self,
        iterations: int | None = None,
        regions: RegionMap = None,
        heldout: list[TrainingView] | None = None,
    ) -> TrainReport:
        """
        Optimise for a number of iterations

        Args:
            iterations: steps to take (defaults to cfg.iterations)
            regions: one RegionSet for every view, or a mapping view_id -> RegionSet;
                falls back to cfg.region_set
            heldout: views evaluated once at the end

        Raises:
            PreconditionError: iterations < 1
            TrainingDivergedError: loss non-finite for max_nonfinite_steps consecutive steps
        """
        iterations = self.cfg.iterations if iterations is None else iterations
        if iterations < 1:
            raise PreconditionError(f"iterations must be >= 1, got {iterations}")
        if regions is None and self.cfg.region_set:
            regions = RegionSet(list(self.cfg.region_set))

        report = TrainReport(iterations=iterations)
        start = time.perf_counter()
        skipped_before = self.state.skipped
        consecutive = 0
        log_every = self.cfg.log_interval

        for i in range(1, iterations + 1):
            breakdown = self.step(regions)
            report.losses.append(breakdown.total)
            if math.isfinite(breakdown.total):
                consecutive = 0
            else:
                consecutive += 1
                report.nonfinite_steps += 1
                logger.warning(f"train_nonfinite iter={self.iteration} consecutive={consecutive}")
                if consecutive >= self.cfg.max_nonfinite_steps:
                    raise TrainingDivergedError(
                        f"Loss non-finite for {consecutive} consecutive steps at iteration {self.iteration}"
                    )
            if self._density_due() and self.densify():
                report.densify_events += 1

            if i % log_every == 0 or i == iterations:
                report.loss_series.append({"iteration": self.iteration, **breakdown.as_dict()})
                report.gaussian_counts.append(len(self.recon))
                logger.info(
                    f"train_step iter={self.iteration} loss={breakdown.total:.6f} l1={breakdown.l1:.6f} "
                    f"region={breakdown.region:.6f} gaussians={len(self.recon)}"
                )

        report.skipped_steps = self.state.skipped - skipped_before
        if heldout:
            # scored as saved, so a reloaded checkpoint re-evaluates to the same numbers
            saved = self.recon.at_storage_precision()
            report.final_metrics = evaluate(saved, heldout, self.rasterizer.settings, self.backend)
        report.wall_clock_s = time.perf_counter() - start
        logger.success(
            f"train_done iterations={iterations} loss={report.losses[-1]:.6f} "
            f"gaussians={len(self.recon)} seconds={report.wall_clock_s:.2f}"
        )
        return report


def train(
    recon: Reconstruction,
    views: list[TrainingView],
    cfg: TrainConfig | None = None,
    render_cfg: RenderConfig | None = None,
    regions: RegionMap = None,
    heldout: list[TrainingView] | None = None,
    backend: PerceptualBackend | None = None,
) -> tuple[Reconstruction, TrainReport]:
    """Optimise a copy of recon against views; the input is not modified"""
    trainer = Trainer(recon.copy(), views, cfg, render_cfg, backend)
    report = trainer.run(regions=regions, heldout=heldout)
    return trainer.recon, report
