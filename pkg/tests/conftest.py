"""
Test Configuration for the Human-Scene Avatar Reconstructor
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Keep tests away from real critic endpoints
os.environ.setdefault("OPENAI_API_KEY", "test-key-for-testing")

from config.config import DensityControl, LossWeights, ModelConfig, RenderConfig, TrainConfig  # noqa: E402
from core.articulation.template import toy_avatar, toy_biped, toy_biped_mesh  # noqa: E402
from core.gaussians.cloud import GaussianCloud, SpaceTag  # noqa: E402
from core.gaussians.sh import rgb_to_sh0  # noqa: E402
from core.render.camera import Camera, Intrinsics  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator shared by randomized tests"""
    return np.random.default_rng(1234)


@pytest.fixture
def small_cloud():
    """Five world-space Gaussians a few units in front of the identity camera"""
    positions = np.array(
        [
            [0.0, 0.0, 3.0],
            [0.3, -0.2, 3.5],
            [-0.4, 0.25, 4.0],
            [0.1, 0.4, 2.5],
            [-0.2, -0.3, 3.2],
        ]
    )
    colors = np.array(
        [
            [0.8, 0.2, 0.2],
            [0.2, 0.7, 0.3],
            [0.3, 0.3, 0.8],
            [0.6, 0.5, 0.2],
            [0.4, 0.4, 0.4],
        ]
    )
    return GaussianCloud(
        positions=positions,
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (5, 1)),
        log_scales=np.log(np.full((5, 3), 0.15)),
        opacity_logits=np.array([0.0, 0.5, -0.5, 0.2, 0.1]),
        sh=rgb_to_sh0(colors)[:, None, :],
        space=SpaceTag.WORLD,
    )


@pytest.fixture
def camera():
    """32×32 pinhole at the origin looking down +z"""
    return Camera(32, 32, 30.0, 30.0, 16.0, 16.0, np.eye(4))


@pytest.fixture
def toy_mesh():
    return toy_biped_mesh()


@pytest.fixture
def toy_skeleton():
    return toy_biped()


@pytest.fixture
def small_model():
    """Tiny decoders so avatar tests run in milliseconds"""
    return ModelConfig(
        init_points=60,
        triplane_resolution=4,
        feature_dim=4,
        nonrigid_hidden=[8],
        skinning_hidden=[8],
        color_hidden=[8],
    )


@pytest.fixture
def small_avatar(small_model):
    return toy_avatar(small_model, seed=0)


@pytest.fixture
def avatar_camera():
    """24×24 view of the toy biped from the front"""
    intrinsics = Intrinsics.from_fov(24, 24, 60.0)
    return Camera.look_at(np.array([0.0, 1.0, 4.0]), np.array([0.0, 1.0, 0.0]), intrinsics)


@pytest.fixture
def fast_train_cfg():
    """Few iterations, no densification, no perceptual backend"""
    return TrainConfig(
        iterations=5,
        seed=7,
        log_interval=1,
        density=DensityControl(enabled=False),
        loss=LossWeights(lambda3=0.0, perceptual_backend="none"),
        critique_max_rounds=2,
        critique_round_iterations=2,
        enhance_outer_E=2,
        enhance_inner_T=2,
    )


@pytest.fixture
def render_cfg():
    return RenderConfig(tile_size=8)


@pytest.fixture
def fixture_dataset(tmp_path, small_model):
    """Synthetic toy-biped dataset written to disk; returns the manifest path"""
    from scripts.make_fixture import write_fixture

    return write_fixture(tmp_path / "dataset", views=3, heldout=1, size=24, model=small_model, seed=0)


@pytest.fixture
def db_session():
    """In-memory run ledger database"""
    from sqlalchemy import create_engine
    from sqlalchemy.orm import sessionmaker

    from core.data.database import Base

    engine = create_engine("sqlite:///:memory:")
    Base.metadata.create_all(engine)
    session = sessionmaker(bind=engine)()
    yield session
    session.close()
    engine.dispose()
