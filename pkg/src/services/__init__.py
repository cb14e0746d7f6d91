"""Services package"""
from .training_service import TrainingService
from .data_service import DataService
from .analysis_service import AnalysisService
from .bench_service import BenchService

__all__ = ["TrainingService", "DataService", "AnalysisService", "BenchService"]
