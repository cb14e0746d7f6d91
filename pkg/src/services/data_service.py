"""
Dataset generation service: writes a synthetic task as JSON Lines
"""
import json
from pathlib import Path

from src import __version__
from src.models.schemas import RunManifest, TaskSpec
from src.training.tasks import iter_records, make_synthetic_task
from src.utils.io import finish_manifest
from src.utils.logger import logger

DATA_NAME = "data.jsonl"


class DataService:
    """Service for writing synthetic datasets"""

    def __init__(self):
        """Initialize data service"""
        logger.info("Data service initialized")

    def generate(self, task: TaskSpec, out_dir: Path) -> Path:
        """
        Write ``data.jsonl`` (one sequence per line with tokens, labels,
        split and label-dependency edges) plus the manifest

        Args:
            task: Task description
            out_dir: Artifact directory

        Returns:
            Path to the JSONL file
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dataset = make_synthetic_task(task)
        path = out_dir / DATA_NAME
        count = 0
        with open(path, "w", encoding="utf-8") as f:
            for record in iter_records(dataset):
                f.write(json.dumps(record) + "\n")
                count += 1
        logger.info(f"Wrote {count} sequences to {path}")

        manifest = RunManifest(
            command="gen-data",
            tool_version=__version__,
            seed=task.seed,
            task=task.model_dump(mode="json"),
            inputs={"label_rule": task.label_rule},
            outputs={"data": DATA_NAME},
        )
        finish_manifest(out_dir, manifest, "complete")
        return path
