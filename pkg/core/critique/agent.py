"""
Critique Agent
Multi-round self-reflection: render, ask the critic for bad regions,
retrain with region weighting, keep the round with the fewest defects
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from loguru import logger

from config.config import RenderConfig, TrainConfig
from core.critique.critic import CriticEndpoint, CritiqueRegion, CritiqueReport, Label, PromptRole
from core.errors import CriticProtocolError, CriticTransportError, EmptyTrainingSetError, PreconditionError
from core.losses.objectives import RegionSet
from core.render.rasterizer import GaussianRasterizer
from core.training.reconstruction import Reconstruction
from core.training.trainer import Trainer, TrainReport
from core.training.views import TrainingView

VERDICTS = ("keep", "discard")


def full_frame(width: int, height: int) -> CritiqueRegion:
    return CritiqueRegion((0, 0, width, height), Label.WELL_RECONSTRUCTED)


def parse_regions(doc: dict[str, Any], width: int, height: int, view_id: str = "") -> list[CritiqueRegion]:
    """
    Validate a localize document and clip its boxes to the image

    An empty region list (or one where every box clips away) becomes a single
    full-frame well_reconstructed region.

    Raises:
        CriticProtocolError: missing fields, bad box arity or unknown label
    """
    raw = doc.get("regions")
    if not isinstance(raw, list):
        raise CriticProtocolError(f"view={view_id}: 'regions' must be a list")
    regions = []
    for item in raw:
        if not isinstance(item, dict):
            raise CriticProtocolError(f"view={view_id}: region entries must be objects")
        box = item.get("box")
        if not isinstance(box, (list, tuple)) or len(box) != 4:
            raise CriticProtocolError(f"view={view_id}: box must have 4 coordinates, got {box!r}")
        try:
            coords = tuple(int(round(float(v))) for v in box)
            label = Label(item.get("label", ""))
        except (TypeError, ValueError) as e:
            raise CriticProtocolError(f"view={view_id}: invalid region {item!r}: {e}") from e
        region = CritiqueRegion(coords, label, str(item.get("note", "")))
        clipped = region.clipped(width, height)
        if clipped is None:
            logger.warning(f"critic_box_dropped view={view_id} box={coords}")
            continue
        if clipped.box != coords:
            logger.warning(f"critic_box_clipped view={view_id} box={coords} clipped={clipped.box}")
        regions.append(clipped)
    return regions or [full_frame(width, height)]


def parse_verdict(doc: dict[str, Any], view_id: str = "") -> tuple[str, str]:
    verdict = doc.get("verdict")
    if verdict not in VERDICTS:
        raise CriticProtocolError(f"view={view_id}: verdict must be one of {VERDICTS}, got {verdict!r}")
    return verdict, str(doc.get("note", ""))


def critique_views(
    critic: CriticEndpoint,
    images: list[np.ndarray],
    role: PromptRole = PromptRole.LOCALIZE,
    view_ids: list[str] | None = None,
    round: int = 1,
    max_workers: int = 1,
) -> list[CritiqueReport]:
    """
    One report per image, in input order

    Queries run concurrently when max_workers > 1; parsing is done afterwards
    so results do not depend on completion order.
    """
    if not images:
        raise PreconditionError("critique_views needs at least one image")
    view_ids = view_ids or [str(i) for i in range(len(images))]
    if len(view_ids) != len(images):
        raise PreconditionError(f"{len(view_ids)} view ids for {len(images)} images")

    def ask(i: int) -> dict[str, Any]:
        return critic.query(images[i], role, view_ids[i], round)

    indices = list(range(len(images)))
    if max_workers > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            docs = list(pool.map(ask, indices))
    else:
        docs = [ask(i) for i in indices]

    reports = []
    for view_id, image, doc in zip(view_ids, images, docs):
        if role is PromptRole.FILTER:
            verdict, note = parse_verdict(doc, view_id)
            reports.append(CritiqueReport(view_id, [], round, verdict, note))
        else:
            height, width = image.shape[:2]
            reports.append(CritiqueReport(view_id, parse_regions(doc, width, height, view_id), round))
    return reports


def merge_regions(reports: list[CritiqueReport]) -> RegionSet:
    """Union of every negatively labelled box; overlaps are kept, membership is per pixel"""
    return RegionSet([r.box for report in reports for r in report.negatives])


def regions_by_view(reports: list[CritiqueReport]) -> dict[str, RegionSet]:
    grouped: dict[str, list[CritiqueReport]] = {}
    for report in reports:
        grouped.setdefault(report.view_id, []).append(report)
    return {view_id: merge_regions(group) for view_id, group in grouped.items()}


def filter_frames(
    critic: CriticEndpoint,
    frames: list[tuple[np.ndarray, np.ndarray]],
    view_ids: list[str] | None = None,
    max_workers: int = 1,
) -> list[int]:
    """
    Indices of frames whose body-model overlay the critic accepts, in order

    Each frame is sent as the image and its overlay render side by side.

    Raises:
        EmptyTrainingSetError: every frame was discarded
    """
    if not frames:
        raise PreconditionError("filter_frames needs at least one frame")
    pairs = [np.concatenate([np.asarray(img), np.asarray(overlay)], axis=1) for img, overlay in frames]
    reports = critique_views(critic, pairs, PromptRole.FILTER, view_ids, round=0, max_workers=max_workers)
    kept = [i for i, report in enumerate(reports) if report.verdict == "keep"]
    for i, report in enumerate(reports):
        if report.verdict != "keep":
            logger.info(f"frame_discarded index={i} view={report.view_id} note={report.note!r}")
    if not kept:
        raise EmptyTrainingSetError(f"Critic discarded all {len(frames)} frames")
    logger.info(f"filter_frames kept={len(kept)} total={len(frames)}")
    return kept


def render_views(recon: Reconstruction, views: list[TrainingView], settings: RenderConfig | None = None) -> list[np.ndarray]:
    rasterizer = GaussianRasterizer(settings)
    images = []
    for view in views:
        cloud, _ = recon.compose(view.pose)
        images.append(rasterizer.forward(cloud, view.camera).color)
    return images


@dataclass
class RoundRecord:
    """Critique round i: the reconstruction that was shown to the critic and what it said"""

    round: int
    reports: list[CritiqueReport]
    recon: Reconstruction
    train_report: TrainReport | None = None

    @property
    def negatives(self) -> int:
        return sum(len(r.negatives) for r in self.reports)


@dataclass
class ReflectResult:
    recon: Reconstruction
    rounds: list[RoundRecord] = field(default_factory=list)
    selected_round: int = 0
    degraded: bool = False

    @property
    def reports(self) -> list[list[CritiqueReport]]:
        return [r.reports for r in self.rounds]


def select_round(rounds: list[RoundRecord]) -> RoundRecord:
    """Fewest negative regions; ties go to the earliest round"""
    return min(rounds, key=lambda r: (r.negatives, r.round))


def reflect_loop(
    trainer: Trainer,
    critic: CriticEndpoint,
    cfg: TrainConfig | None = None,
    max_workers: int = 1,
) -> ReflectResult:
    """
    Render → critique → region-weighted retraining, for at most critique_max_rounds rounds

    Returns as soon as a round is all-good. Otherwise returns the round with the
    fewest negative regions. A critic transport failure ends the loop early with
    the best round so far and degraded=True.
    """
    cfg = cfg or trainer.cfg
    if cfg.critique_max_rounds < 1:
        raise PreconditionError("critique_max_rounds must be >= 1")
    views = trainer.views
    view_ids = [v.view_id for v in views]
    rounds: list[RoundRecord] = []
    history: list[CritiqueReport] = []
    degraded = False

    for i in range(1, cfg.critique_max_rounds + 1):
        images = render_views(trainer.recon, views, trainer.rasterizer.settings)
        try:
            reports = critique_views(critic, images, PromptRole.LOCALIZE, view_ids, round=i, max_workers=max_workers)
        except CriticTransportError as e:
            logger.error(f"critique_aborted round={i} error={e}")
            degraded = True
            break
        record = RoundRecord(i, reports, trainer.recon.copy())
        rounds.append(record)
        history.extend(reports)
        logger.info(f"critique_round round={i} negatives={record.negatives} views={len(views)}")

        if record.negatives == 0:
            logger.success(f"critique_all_good round={i}")
            return ReflectResult(record.recon, rounds, i, degraded=False)
        if i == cfg.critique_max_rounds:
            break
        regions = regions_by_view(history if cfg.critique_cumulative_regions else reports)
        record.train_report = trainer.run(cfg.critique_round_iterations, regions=regions)

    if not rounds:
        return ReflectResult(trainer.recon.copy(), rounds, 0, degraded=True)
    best = select_round(rounds)
    logger.info(f"critique_selected round={best.round} negatives={best.negatives} rounds={len(rounds)}")
    return ReflectResult(best.recon, rounds, best.round, degraded)
