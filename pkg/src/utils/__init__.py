"""Utilities package"""
from .errors import (
    LocalAttentionError,
    ShapeError,
    ConfigError,
    ContractError,
    ArtifactError,
    DivergenceError,
    CorpusError,
)
from .logger import setup_logger, logger

__all__ = [
    "LocalAttentionError",
    "ShapeError",
    "ConfigError",
    "ContractError",
    "ArtifactError",
    "DivergenceError",
    "CorpusError",
    "setup_logger",
    "logger",
]
