"""Configuration package"""

from config.config import (
    AppConfig,
    CriticConfig,
    DensityControl,
    EnhanceConfig,
    LearningRates,
    LoggingConfig,
    LossWeights,
    ModelConfig,
    RenderConfig,
    StorageConfig,
    TrainConfig,
    dump_config,
    get_settings,
    load_config,
    load_yaml_config,
)

__all__ = [
    "AppConfig",
    "CriticConfig",
    "DensityControl",
    "EnhanceConfig",
    "LearningRates",
    "LoggingConfig",
    "LossWeights",
    "ModelConfig",
    "RenderConfig",
    "StorageConfig",
    "TrainConfig",
    "dump_config",
    "get_settings",
    "load_config",
    "load_yaml_config",
]
