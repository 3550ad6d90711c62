"""
Integration Tests for the Command-Line Entry Point
"""

import numpy as np
import pytest
import yaml

from core.io.cameras import save_camera
from core.io.checkpoint import load_checkpoint
from core.io.images import load_image
from core.io.metrics_file import read_metrics
from core.render.camera import Camera, Intrinsics
from main import main

SMALL_CONFIG = {
    "train": {
        "iterations": 3,
        "seed": 7,
        "log_interval": 1,
        "density": {"enabled": False},
        "loss": {"lambda3": 0.0, "perceptual_backend": "none"},
        "critique_max_rounds": 2,
        "critique_round_iterations": 1,
        "enhance_outer_E": 1,
        "enhance_inner_T": 1,
    },
    "model": {
        "init_points": 60,
        "triplane_resolution": 4,
        "feature_dim": 4,
        "nonrigid_hidden": [8],
        "skinning_hidden": [8],
        "color_hidden": [8],
    },
    "render": {"tile_size": 8},
    "enhance": {"orbit_count": 2},
    "logging": {"level": "WARNING"},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL_CONFIG), encoding="utf-8")
    return path


@pytest.fixture
def camera_file(tmp_path):
    intrinsics = Intrinsics.from_fov(24, 24, 60.0)
    path = tmp_path / "camera.json"
    save_camera(Camera.look_at(np.array([0.0, 1.0, 4.0]), np.array([0.0, 1.0, 0.0]), intrinsics), path)
    return path


@pytest.fixture
def checkpoint(tmp_path, fixture_dataset, config_file):
    """Checkpoint from a three-iteration reconstruction"""
    out = tmp_path / "avatar.hgsc"
    code = main(["reconstruct", "--data", str(fixture_dataset), "--config", str(config_file), "--out", str(out)])
    assert code == 0
    return out


class TestUsage:
    """Test suite for argument handling and exit codes"""

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            main(["paint"])
        assert info.value.code == 1

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit) as info:
            main(["reconstruct"])
        assert info.value.code == 1

    def test_missing_out(self, fixture_dataset, config_file):
        assert main(["reconstruct", "--data", str(fixture_dataset), "--config", str(config_file)]) == 1

    def test_missing_data_file(self, tmp_path, config_file):
        args = ["reconstruct", "--data", str(tmp_path / "none.json"), "--config", str(config_file)]
        assert main([*args, "--out", str(tmp_path / "x.hgsc")]) == 1

    def test_bad_config(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("viewer:\n  port: 8080\n", encoding="utf-8")
        assert main(["info", "--config", str(bad)]) == 1

    def test_bad_log_level(self, tmp_path):
        assert main(["info", "--log-level", "LOUD"]) == 1
        loud = tmp_path / "loud.yaml"
        loud.write_text("logging:\n  level: LOUD\n", encoding="utf-8")
        assert main(["info", "--config", str(loud)]) == 1

    def test_log_level_flag(self, capsys):
        assert main(["info", "--log-level", "debug"]) == 0
        assert yaml.safe_load(capsys.readouterr().out)["logging"]["level"] == "DEBUG"

    def test_corrupt_checkpoint(self, tmp_path, config_file, camera_file):
        broken = tmp_path / "broken.hgsc"
        broken.write_bytes(b"not a checkpoint")
        args = ["render", str(broken), "--camera", str(camera_file), "--config", str(config_file)]
        assert main([*args, "--out", str(tmp_path / "x.png")]) == 1


class TestInfo:
    """Test suite for the info command"""

    def test_defaults_as_yaml(self, capsys):
        assert main(["info"]) == 0
        doc = yaml.safe_load(capsys.readouterr().out)
        assert set(doc) == {"train", "model", "render", "critic", "enhance", "storage", "logging"}

    def test_config_file(self, capsys, config_file):
        assert main(["info", str(config_file)]) == 0
        doc = yaml.safe_load(capsys.readouterr().out)
        assert doc["model"]["init_points"] == 60

    @pytest.mark.integration
    def test_checkpoint_summary(self, capsys, checkpoint, config_file):
        capsys.readouterr()
        assert main(["info", str(checkpoint), "--config", str(config_file)]) == 0
        lines = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
        assert lines["version"] == "1"
        assert int(lines["joints"]) > 0
        assert lines["seed"] == "7"


@pytest.mark.integration
class TestPipeline:
    """End-to-end runs on the synthetic fixture"""

    def test_reconstruct(self, tmp_path, fixture_dataset, config_file):
        out, metrics = tmp_path / "a.hgsc", tmp_path / "train.txt"
        args = ["reconstruct", "--data", str(fixture_dataset), "--config", str(config_file), "--out", str(out)]
        assert main([*args, "--metrics", str(metrics), "--iterations", "2"]) == 0

        ckpt = load_checkpoint(out)
        assert ckpt.iteration == 2
        assert ckpt.seed == 7
        assert ckpt.recon.human is not None
        assert read_metrics(metrics)["iterations"] == 2

    def test_reconstruct_deterministic(self, tmp_path, fixture_dataset, config_file):
        """Same seed and inputs give byte-identical checkpoints"""
        paths = [tmp_path / "a.hgsc", tmp_path / "b.hgsc"]
        for path in paths:
            args = ["reconstruct", "--data", str(fixture_dataset), "--config", str(config_file)]
            assert main([*args, "--out", str(path)]) == 0

        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_render_deterministic(self, tmp_path, checkpoint, config_file, camera_file):
        paths = [tmp_path / "r1.png", tmp_path / "r2.png"]
        for path in paths:
            args = ["render", str(checkpoint), "--camera", str(camera_file), "--config", str(config_file)]
            assert main([*args, "--out", str(path)]) == 0

        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert load_image(paths[0]).shape == (24, 24, 3)

    def test_eval(self, tmp_path, checkpoint, fixture_dataset, config_file):
        out = tmp_path / "metrics.txt"
        args = ["eval", str(checkpoint), "--data", str(fixture_dataset), "--config", str(config_file)]
        assert main([*args, "--out", str(out)]) == 0

        metrics = read_metrics(out)
        assert {"mean.psnr", "mean.ssim", "mean.perceptual"} <= set(metrics)
        assert "per_view.v003.psnr" in metrics

    def test_eval_matches_training_report(self, tmp_path, fixture_dataset, config_file):
        """Evaluating the saved checkpoint reproduces the held-out numbers of its run"""
        ckpt, train_metrics, eval_metrics = tmp_path / "a.hgsc", tmp_path / "train.txt", tmp_path / "eval.txt"
        args = ["reconstruct", "--data", str(fixture_dataset), "--config", str(config_file), "--out", str(ckpt)]
        assert main([*args, "--metrics", str(train_metrics)]) == 0
        args = ["eval", str(ckpt), "--data", str(fixture_dataset), "--config", str(config_file)]
        assert main([*args, "--out", str(eval_metrics)]) == 0

        trained, evaluated = read_metrics(train_metrics), read_metrics(eval_metrics)
        assert trained["heldout_psnr"] == evaluated["mean.psnr"]
        assert trained["heldout_ssim"] == evaluated["mean.ssim"]

    def test_critique(self, tmp_path, checkpoint, fixture_dataset, config_file):
        out, report = tmp_path / "refined.hgsc", tmp_path / "report.json"
        args = ["critique", str(checkpoint), "--data", str(fixture_dataset), "--config", str(config_file)]
        assert main([*args, "--out", str(out), "--report", str(report)]) == 0

        assert load_checkpoint(out).recon.human is not None
        assert report.exists()

    def test_animate(self, tmp_path, checkpoint, fixture_dataset, config_file, camera_file):
        out = tmp_path / "frames"
        poses = fixture_dataset.parent / "poses.json"
        args = ["animate", str(checkpoint), "--poses", str(poses), "--camera", str(camera_file)]
        assert main([*args, "--config", str(config_file), "--out", str(out)]) == 0

        assert len(sorted(out.glob("*.png"))) == 4

    def test_enhance(self, tmp_path, checkpoint, config_file, camera_file):
        out = tmp_path / "enhanced.hgsc"
        args = ["enhance", str(checkpoint), "--camera", str(camera_file), "--config", str(config_file)]
        assert main([*args, "--out", str(out)]) == 0

        assert load_checkpoint(out).recon.human is not None
