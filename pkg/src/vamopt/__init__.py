"""Pedestrian awareness-message rate modeling and sampling-rate optimization."""

__version__ = "0.1.0"

from .config import (ChannelParams, ConfigError, Experiment, GnmParams,
                     ScenarioConfig, VamThresholds, load_config, save_config)

__all__ = [
    "ChannelParams",
    "ConfigError",
    "Experiment",
    "GnmParams",
    "ScenarioConfig",
    "VamThresholds",
    "load_config",
    "save_config",
    "__version__",
]
