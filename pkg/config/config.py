"""
Configuration Management
Loads settings from config.yaml and .env
"""

import hashlib
import os
from pathlib import Path
from typing import Any, Literal

import yaml
from dotenv import load_dotenv
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigError

# Load environment variables
load_dotenv()

DEFAULT_CONFIG_PATH = Path(__file__).parent / "config.yaml"


class _Section(BaseModel):
    """Strict config section: unknown keys and non-finite floats are rejected"""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, validate_assignment=True)


class LossWeights(_Section):
    """Weights of the reconstruction, region and harmonizer objectives"""

    lambda1: float = Field(default=0.5, ge=0.0)  # mask
    lambda2: float = Field(default=0.01, ge=0.0)  # ssim
    lambda3: float = Field(default=0.01, ge=0.0)  # perceptual
    omega: float = Field(default=5.0, ge=0.0)
    alpha: float = Field(default=0.5, ge=0.0)
    beta: float = Field(default=0.025, ge=0.0)

    # Literal-formula switches; defaults are 1-SSIM and root mask norm
    ssim_as_similarity: bool = False
    mask_squared: bool = False
    perceptual_backend: str = "pyramid"


class LearningRates(_Section):
    """Per-group Adam learning rates"""

    position: float = Field(default=1.6e-4, ge=0.0)
    position_final: float = Field(default=1.6e-6, ge=0.0)
    position_scale: float = Field(default=1.0, gt=0.0)
    sh: float = Field(default=2.5e-3, ge=0.0)
    opacity: float = Field(default=5e-2, ge=0.0)
    scale: float = Field(default=5e-3, ge=0.0)
    rotation: float = Field(default=1e-3, ge=0.0)
    decoders: float = Field(default=1e-3, ge=0.0)
    triplane: float = Field(default=1e-3, ge=0.0)


class DensityControl(_Section):
    """Adaptive clone/split/prune schedule"""

    enabled: bool = True
    interval: int = Field(default=100, ge=1)
    start_iter: int = Field(default=500, ge=0)
    stop_iter: int = Field(default=15000, ge=0)
    grad_threshold: float = Field(default=2e-4, ge=0.0)
    prune_opacity: float = Field(default=0.005, ge=0.0)
    max_gaussians: int = Field(default=200_000, ge=1)
    percent_dense: float = Field(default=0.01, ge=0.0)
    split_factor: float = Field(default=1.6, gt=1.0)


class TrainConfig(_Section):
    """Reconstructor optimisation settings"""

    iterations: int = Field(default=10_000, ge=1)
    seed: int = 0
    lr: LearningRates = Field(default_factory=LearningRates)
    loss: LossWeights = Field(default_factory=LossWeights)
    density: DensityControl = Field(default_factory=DensityControl)
    region_set: list[tuple[int, int, int, int]] | None = None
    sample_views: bool = True
    trainable: list[Literal["human", "decoders", "scene"]] = Field(
        default_factory=lambda: ["human", "decoders", "scene"]
    )
    log_interval: int = Field(default=100, ge=1)
    max_nonfinite_steps: int = Field(default=10, ge=1)

    # Critique agent
    critique_max_rounds: int = Field(default=4, ge=1)
    critique_round_iterations: int = Field(default=2000, ge=1)
    critique_cumulative_regions: bool = False

    # Iterative enhancement (outer E, inner T)
    enhance_outer_E: int = Field(default=2, ge=1)
    enhance_inner_T: int = Field(default=2500, ge=1)


class ModelConfig(_Section):
    """Human Gaussian model sizes and initialisation"""

    init_points: int = Field(default=50_000, ge=1)
    init_opacity: float = Field(default=0.1, gt=0.0, lt=1.0)
    sh_degree: int = Field(default=0, ge=0, le=3)
    triplane_resolution: int = Field(default=64, ge=2)
    feature_dim: int = Field(default=64, ge=1)
    nonrigid_hidden: list[int] = Field(default_factory=lambda: [128, 128, 128])
    skinning_hidden: list[int] = Field(default_factory=lambda: [128, 128, 128])
    color_hidden: list[int] = Field(default_factory=lambda: [128])
    bbox_padding: float = Field(default=0.1, ge=0.0)


class RenderConfig(_Section):
    """Rasterizer settings"""

    tile_size: int = Field(default=16, ge=1)
    support_sigmas: float = Field(default=3.0, gt=0.0)
    alpha_clamp: float = Field(default=0.99, gt=0.0, le=1.0)
    dilation: float = Field(default=0.3, ge=0.0)
    near: float = Field(default=0.01, gt=0.0)
    early_termination: bool = True
    transmittance_eps: float = Field(default=1e-4, ge=0.0)
    workers: int = Field(default=1, ge=1)
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)


class CriticConfig(_Section):
    """Critic endpoint"""

    backend: Literal["scripted", "http", "openai"] = "scripted"
    url: str = "http://localhost:8000/critique"
    model: str = "Qwen/Qwen2-VL-7B-Instruct"
    api_key: str = ""
    timeout_s: float = Field(default=60.0, gt=0.0)
    retries: int = Field(default=2, ge=0)
    script_path: str | None = None
    prompt_dir: str | None = None
    max_workers: int = Field(default=4, ge=1)


class EnhanceConfig(_Section):
    """Sequence enhancer and novel-view trajectory"""

    enhancer: Literal["identity", "unsharp", "external"] = "identity"
    command: list[str] = Field(default_factory=list)
    scope: Literal["joint", "human_only"] = "joint"
    orbit_count: int = Field(default=16, ge=1)
    orbit_radius_scale: float = Field(default=1.2, gt=0.0)
    orbit_height: float = 0.0
    fps: float = Field(default=24.0, gt=0.0)
    unsharp_sigma: float = Field(default=1.0, gt=0.0)
    unsharp_amount: float = Field(default=0.5, ge=0.0)


class StorageConfig(_Section):
    """Optional run ledger"""

    enabled: bool = False
    database_url: str = "sqlite:///data/db/runs.db"


class LoggingConfig(_Section):
    """Log sinks"""

    level: str = "INFO"
    file: str | None = None
    rotation: str = "100 MB"
    retention: str = "30 days"

    @field_validator("level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        try:
            logger.level(value)
        except ValueError:
            raise ValueError(f"unknown log level '{value}'") from None
        return value


class AppConfig(BaseSettings):
    """Application configuration from environment and YAML"""

    train: TrainConfig = Field(default_factory=TrainConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    render: RenderConfig = Field(default_factory=RenderConfig)
    critic: CriticConfig = Field(default_factory=CriticConfig)
    enhance: EnhanceConfig = Field(default_factory=EnhanceConfig)
    storage: StorageConfig = Field(default_factory=StorageConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    model_config = SettingsConfigDict(
        env_prefix="AVATAR_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # unrelated .env entries; YAML keys are checked separately
        protected_namespaces=(),
    )

    def canonical_dict(self) -> dict[str, Any]:
        """Plain-data view without secrets"""
        data = self.model_dump(mode="json")
        data["critic"]["api_key"] = "***" if data["critic"]["api_key"] else ""
        return data

    def config_hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode("utf-8")).hexdigest()


SECTIONS = frozenset(AppConfig.model_fields)


def load_yaml_config(path: str | Path | None = None) -> dict[str, Any]:
    """Load configuration from YAML file"""
    config_path = Path(path) if path else DEFAULT_CONFIG_PATH

    if not config_path.exists():
        if path:
            raise FileNotFoundError(f"Config file not found: {config_path}")
        logger.warning(f"Config file not found: {config_path}")
        return {}

    with open(config_path, encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {config_path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigError(f"Top level of {config_path} must be a mapping")
    return data


def load_config(path: str | Path | None = None) -> AppConfig:
    """Merge YAML over defaults; unknown keys anywhere are errors"""
    yaml_config = load_yaml_config(path)

    unknown = sorted(set(yaml_config) - SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")

    try:
        config = AppConfig(**yaml_config)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"Invalid configuration: {problems}") from e

    if not config.critic.api_key:
        config.critic.api_key = _env_api_key()
    return config


def _env_api_key() -> str:
    return os.environ.get("OPENAI_API_KEY", "")


def dump_config(config: AppConfig) -> str:
    """Canonical YAML echo (sorted keys, secrets masked)"""
    return yaml.safe_dump(config.canonical_dict(), sort_keys=True, default_flow_style=False)


# Global configuration instance (created on first use)
_settings: AppConfig | None = None


def get_settings(path: str | Path | None = None) -> AppConfig:
    """Get or create the global configuration"""
    global _settings
    if _settings is None or path is not None:
        _settings = load_config(path)
    return _settings
