"""
Human-Scene Gaussian Avatar
Command-line entry point: reconstruct, critique, animate, enhance, render, eval, info
"""

import argparse
import sys
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from config.config import AppConfig, dump_config, load_config
from core.errors import USER_ERRORS, ConfigError, PreconditionError

COMMANDS = ("reconstruct", "critique", "animate", "enhance", "render", "eval", "info")


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _load_settings(args) -> AppConfig:
    settings = load_config(args.config)
    if args.seed is not None:
        settings.train.seed = args.seed
    if args.log_level:
        try:
            settings.logging.level = args.log_level
        except ValidationError as e:
            raise ConfigError(f"Invalid --log-level '{args.log_level}'") from e
    return settings


def _open_ledger(args, settings: AppConfig):
    if not (args.ledger or settings.storage.enabled):
        return None
    from core.data.database import RunLedger, get_session, init_database

    init_database(settings.storage.database_url)
    arguments = {k: str(v) for k, v in vars(args).items() if k != "handler"}
    return RunLedger(get_session(), args.command, settings.train.seed, settings.config_hash(), arguments)


def _require_out(args) -> Path:
    if not args.out:
        raise PreconditionError(f"'{args.command}' needs --out")
    return Path(args.out)


def _save(recon, args, settings, out: Path, trainer=None) -> None:
    from core.io.checkpoint import Checkpoint, save_checkpoint

    save_checkpoint(
        Checkpoint(
            recon=recon,
            train_state=trainer.state if trainer is not None else None,
            iteration=trainer.iteration if trainer is not None else 0,
            config_hash=settings.config_hash(),
            seed=settings.train.seed,
        ),
        out,
    )


def _filter_views(views, avatar, settings):
    """Drop views whose posed template overlay the critic rejects"""
    from core.critique.agent import filter_frames
    from core.critique.critic import make_critic
    from core.render.rasterizer import GaussianRasterizer

    rasterizer = GaussianRasterizer(settings.render)
    frames = []
    for view in views:
        posed, _ = avatar.pose(view.pose) if view.pose is not None else (avatar.canonical, None)
        out = rasterizer.forward(posed, view.camera)
        overlay = view.image * (1.0 - out.alpha[..., None]) + out.color * out.alpha[..., None]
        frames.append((view.image, overlay))
    kept = filter_frames(make_critic(settings.critic), frames, [v.view_id for v in views], settings.critic.max_workers)
    return [views[i] for i in kept]


def cmd_reconstruct(args, settings: AppConfig, ledger) -> int:
    from core.articulation.template import build_avatar
    from core.gaussians.mesh import scene_cloud_from_points
    from core.io.dataset import load_dataset
    from core.io.metrics_file import write_metrics
    from core.training.reconstruction import Reconstruction
    from core.training.trainer import Trainer

    out = _require_out(args)
    data = load_dataset(args.data)
    model = settings.model
    human = build_avatar(data.template.mesh, data.template.skeleton, model, settings.train.seed) if data.template else None
    scene = None
    if data.scene_points is not None:
        colors = data.scene_points.colors / 255.0 if data.scene_points.colors is not None else None
        scene = scene_cloud_from_points(data.scene_points.positions, colors, model.sh_degree, model.init_opacity)
    views = data.views
    if args.filter and human is not None:
        views = _filter_views(views, human, settings)

    trainer = Trainer(Reconstruction(human, scene, data.scene_translation), views, settings.train, settings.render)
    report = trainer.run(args.iterations, heldout=data.heldout or None)
    _save(trainer.recon, args, settings, out, trainer)
    record = report.as_record()
    if args.metrics:
        write_metrics(args.metrics, record)
    if ledger:
        ledger.record_metrics(record)
    return 0


def cmd_critique(args, settings: AppConfig, ledger) -> int:
    from core.critique.agent import reflect_loop
    from core.critique.critic import make_critic
    from core.io.checkpoint import load_checkpoint
    from core.io.dataset import load_dataset
    from core.io.jsonio import write_json
    from core.training.trainer import Trainer

    out = _require_out(args)
    ckpt = load_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    trainer = Trainer(ckpt.recon, data.views, settings.train, settings.render)
    result = reflect_loop(trainer, make_critic(settings.critic), settings.train, settings.critic.max_workers)
    _save(result.recon, args, settings, out)
    report = {
        "selected_round": result.selected_round,
        "degraded": result.degraded,
        "rounds": [
            {
                "round": r.round,
                "negatives": r.negatives,
                "reports": [
                    {"view_id": rep.view_id, "regions": [reg.as_dict() for reg in rep.regions]} for rep in r.reports
                ],
            }
            for r in result.rounds
        ],
    }
    if args.report:
        write_json(report, args.report)
    if ledger:
        ledger.record_rounds(result.rounds, result.selected_round)
    return 0


def _trajectory(args, settings: AppConfig, cloud, count: int | None = None):
    from core.enhance.trajectory import orbit_around
    from core.io.cameras import load_camera, load_trajectory

    if args.trajectory:
        return load_trajectory(args.trajectory)
    if not args.camera:
        raise PreconditionError("Need --trajectory, or --camera to take orbit intrinsics from")
    e = settings.enhance
    return orbit_around(
        cloud,
        load_camera(args.camera).intrinsics,
        count or e.orbit_count,
        e.orbit_radius_scale,
        e.orbit_height,
        e.fps,
    )


def cmd_animate(args, settings: AppConfig, ledger) -> int:
    from core.enhance.fusion import fuse_scene
    from core.enhance.sequence import apply_pose_sequence
    from core.enhance.trajectory import generate_synthetic_views
    from core.gaussians.mesh import scene_cloud_from_points
    from core.io.checkpoint import load_checkpoint
    from core.io.ply import load_ply
    from core.io.poses import load_pose_sequence
    from core.io.sequence import write_image_sequence

    out = _require_out(args)
    recon = load_checkpoint(args.checkpoint).recon
    if recon.human is None:
        raise PreconditionError("animate needs a checkpoint with a human avatar")
    seq = load_pose_sequence(args.poses, recon.human.skeleton.n_joints)
    scene = recon.scene
    if args.scene:
        points = load_ply(args.scene)
        colors = points.colors / 255.0 if points.colors is not None else None
        scene = scene_cloud_from_points(points.positions, colors, recon.human.canonical.sh_degree)
    translation = np.array(args.scene_translation) if args.scene_translation else recon.scene_translation
    posed = [fuse_scene(cloud, scene, translation) for cloud in apply_pose_sequence(recon.human, seq)]
    traj = _trajectory(args, settings, posed[0], count=len(posed))
    if len(traj) == 1 and len(posed) > 1:
        traj = type(traj)([(f.time, traj.cameras[0]) for f in seq.frames])
    frames = generate_synthetic_views(posed, traj, settings=settings.render)
    write_image_sequence(frames, out, seq.fps)
    logger.success(f"animate_done frames={len(frames)} out={out}")
    return 0


def cmd_enhance(args, settings: AppConfig, ledger) -> int:
    from core.enhance.enhancers import make_enhancer
    from core.enhance.iterative import iterative_enhance
    from core.io.checkpoint import load_checkpoint
    from core.io.poses import load_pose_sequence

    out = _require_out(args)
    recon = load_checkpoint(args.checkpoint).recon
    poses = None
    if args.poses and recon.human is not None:
        poses = load_pose_sequence(args.poses, recon.human.skeleton.n_joints)
    cloud, _ = recon.compose()
    traj = _trajectory(args, settings, cloud, count=len(poses) if poses else None)
    result = iterative_enhance(
        recon, make_enhancer(settings.enhance), traj, settings.train, settings.enhance, settings.render, poses
    )
    _save(result.recon, args, settings, out)
    if ledger:
        ledger.record_metrics(
            {"enhancer_calls": result.enhancer_calls, "inner_steps": result.inner_steps, "aborted": int(result.aborted)}
        )
    return 0 if not result.aborted else 2


def cmd_render(args, settings: AppConfig, ledger) -> int:
    from core.io.cameras import load_camera
    from core.io.checkpoint import load_checkpoint
    from core.io.images import save_image
    from core.io.poses import load_pose_sequence
    from core.render.rasterizer import render

    out = _require_out(args)
    recon = load_checkpoint(args.checkpoint).recon
    frame = None
    if args.poses and recon.human is not None:
        seq = load_pose_sequence(args.poses, recon.human.skeleton.n_joints)
        if not 0 <= args.frame < len(seq):
            raise PreconditionError(f"--frame {args.frame} outside 0..{len(seq) - 1}")
        frame = seq.frames[args.frame]
    cloud, _ = recon.compose(frame)
    image = render(cloud, load_camera(args.camera), settings=settings.render).color
    save_image(image, out)
    logger.success(f"render_done out={out}")
    return 0


def cmd_eval(args, settings: AppConfig, ledger) -> int:
    from core.io.checkpoint import load_checkpoint
    from core.io.dataset import load_dataset
    from core.io.metrics_file import write_metrics
    from core.training.evaluate import evaluate

    out = _require_out(args)
    recon = load_checkpoint(args.checkpoint).recon
    data = load_dataset(args.data)
    metrics = evaluate(recon, data.heldout or data.views, settings.render)
    write_metrics(out, metrics)
    if ledger:
        ledger.record_metrics(metrics["mean"])
        for view_id, values in metrics["per_view"].items():
            ledger.record_metrics(values, view_id)
    return 0


def cmd_info(args, settings: AppConfig, ledger) -> int:
    from core.io.checkpoint import MAGIC, load_checkpoint

    path = Path(args.target) if args.target else None
    if path is not None and path.read_bytes()[: len(MAGIC)] == MAGIC:
        for key, value in load_checkpoint(path).summary().items():
            print(f"{key}={value}")
        return 0
    settings = load_config(path) if path is not None else settings
    sys.stdout.write(dump_config(settings))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="override train.seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING, ...")
    common.add_argument("--ledger", action="store_true", help="record the run in the SQL ledger")

    parser = _Parser(prog="avatar", description="Animatable human-scene Gaussian reconstruction")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reconstruct", parents=[common], help="views + masks + cameras + poses -> checkpoint")
    p.add_argument("--data", required=True, help="dataset manifest (JSON)")
    p.add_argument("--iterations", type=int, help="override train.iterations")
    p.add_argument("--filter", action="store_true", help="drop frames the critic rejects")
    p.add_argument("--metrics", help="write the training report here")
    p.set_defaults(handler=cmd_reconstruct)

    p = sub.add_parser("critique", parents=[common], help="self-reflection rounds -> refined checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data", required=True, help="dataset manifest with the training views")
    p.add_argument("--report", help="write the per-round report here")
    p.set_defaults(handler=cmd_critique)

    for name, handler, text in (
        ("animate", cmd_animate, "pose sequence + trajectory -> image sequence"),
        ("enhance", cmd_enhance, "iterative enhancement -> refined checkpoint"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("checkpoint")
        p.add_argument("--poses", required=name == "animate", help="pose sequence (JSON)")
        p.add_argument("--trajectory", help="camera trajectory (JSON)")
        p.add_argument("--camera", help="camera whose intrinsics are used for the default orbit")
        if name == "animate":
            p.add_argument("--scene", help="scene point cloud (PLY) to fuse")
            p.add_argument("--scene-translation", type=float, nargs=3, metavar=("X", "Y", "Z"))
        p.set_defaults(handler=handler)

    p = sub.add_parser("render", parents=[common], help="checkpoint + camera -> image")
    p.add_argument("checkpoint")
    p.add_argument("--camera", required=True)
    p.add_argument("--poses", help="pose sequence (JSON); rest pose otherwise")
    p.add_argument("--frame", type=int, default=0)
    p.set_defaults(handler=cmd_render)

    p = sub.add_parser("eval", parents=[common], help="checkpoint + views -> metrics file")
    p.add_argument("checkpoint")
    p.add_argument("--data", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("info", parents=[common], help="summarise a checkpoint or config")
    p.add_argument("target", nargs="?", help="checkpoint or YAML config; defaults when omitted")
    p.set_defaults(handler=cmd_info)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main application entry point"""
    from core.logging_setup import setup_logging

    args = build_parser().parse_args(argv)
    ledger = None
    try:
        settings = _load_settings(args)
        setup_logging(
            settings.logging.level,
            settings.logging.file,
            settings.logging.rotation,
            settings.logging.retention,
        )
        if getattr(args, "iterations", None) is not None:
            settings.train.iterations = args.iterations
        ledger = _open_ledger(args, settings)
        logger.info(f"command_start command={args.command} seed={settings.train.seed}")
        code = args.handler(args, settings, ledger)
        if ledger:
            ledger.finish("done" if code == 0 else "failed")
        return code
    except USER_ERRORS as e:
        logger.error(f"command_failed command={args.command} error={type(e).__name__}: {e}")
        if ledger:
            ledger.finish("failed")
        return 1
    except Exception:
        logger.exception(f"internal_error command={args.command}")
        if ledger:
            ledger.finish("failed")
        return 2
    finally:
        if ledger:
            ledger.close()


if __name__ == "__main__":
    sys.exit(main())
