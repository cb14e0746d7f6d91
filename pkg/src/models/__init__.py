"""Models package"""
from .schemas import (
    ModelConfig,
    TaskSpec,
    TrainHyper,
    EpochMetrics,
    TrainResult,
    SentenceRecord,
    SensitivityReport,
    BiasReport,
    BenchRow,
    RunManifest,
    make_model_config,
)

__all__ = [
    "ModelConfig",
    "TaskSpec",
    "TrainHyper",
    "EpochMetrics",
    "TrainResult",
    "SentenceRecord",
    "SensitivityReport",
    "BiasReport",
    "BenchRow",
    "RunManifest",
    "make_model_config",
]
