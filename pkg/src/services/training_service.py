"""
Training service: runs the loop and writes checkpoint, metrics and manifest
"""
import math
from pathlib import Path
from typing import List, Optional

from src import __version__
from src.models.schemas import EpochMetrics, ModelConfig, RunManifest, TaskSpec, TrainHyper, TrainResult
from src.training.checkpoint import save_checkpoint
from src.training.tasks import make_synthetic_task
from src.training.trainer import train
from src.utils.errors import DivergenceError
from src.utils.io import finish_manifest, write_csv, write_manifest
from src.utils.logger import logger

METRIC_FIELDS = ("epoch", "train_acc", "test_acc", "loss")


class TrainingService:
    """Service for training a classifier on a synthetic task"""

    def __init__(self):
        """Initialize training service"""
        logger.info("Training service initialized")

    def save_metrics(self, out_dir: Path, metrics: List[EpochMetrics]) -> Path:
        """
        Write metrics.csv (epoch, train_acc, test_acc, loss)

        Args:
            out_dir: Artifact directory
            metrics: Epochs completed so far

        Returns:
            Path to the CSV
        """
        return write_csv(out_dir / "metrics.csv", METRIC_FIELDS, (m.model_dump() for m in metrics))

    def save_positions(self, out_dir: Path, per_position: List[float]) -> Path:
        rows = (
            {"position": i, "test_acc": None if math.isnan(acc) else acc}
            for i, acc in enumerate(per_position)
        )
        return write_csv(out_dir / "positions.csv", ("position", "test_acc"), rows)

    def run(
        self,
        task: TaskSpec,
        config: ModelConfig,
        hyper: TrainHyper,
        seed: int,
        out_dir: Path,
        progress: Optional[bool] = None,
    ) -> TrainResult:
        """
        Train and persist every artifact of the run

        Args:
            task: Synthetic task
            config: Encoder configuration
            hyper: Optimizer settings
            seed: Run seed
            out_dir: Artifact directory (created if missing)
            progress: Show a progress bar

        Returns:
            TrainResult; on divergence the partial metrics are written, the
            manifest is marked "diverged" and DivergenceError propagates
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            command="train",
            tool_version=__version__,
            seed=seed,
            config=config.model_dump(mode="json"),
            task=task.model_dump(mode="json"),
            inputs={"hyper": hyper.model_dump()},
        )
        write_manifest(out_dir, manifest)

        dataset = make_synthetic_task(task)
        completed: List[EpochMetrics] = []
        try:
            model, result = train(dataset, config, hyper, seed, progress=progress, on_epoch=completed.append)
        except DivergenceError as e:
            manifest.outputs["metrics"] = str(self.save_metrics(out_dir, completed).name)
            finish_manifest(out_dir, manifest, "diverged", str(e))
            raise
        except Exception as e:
            finish_manifest(out_dir, manifest, "failed", str(e))
            raise

        checkpoint_path = save_checkpoint(out_dir / "checkpoint.npz", model, task)
        metrics_path = self.save_metrics(out_dir, result.metrics)
        positions_path = self.save_positions(out_dir, result.per_position_acc)
        manifest.outputs = {
            "checkpoint": checkpoint_path.name,
            "metrics": metrics_path.name,
            "positions": positions_path.name,
        }
        finish_manifest(out_dir, manifest, "complete")
        result.checkpoint_path = str(checkpoint_path)
        logger.info(f"Completed training: final test accuracy {result.final_test_acc:.4f}")
        return result
