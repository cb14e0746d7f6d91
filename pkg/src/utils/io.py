"""
Artifact writers: JSON reports, plot-ready CSV and the run manifest
"""
import csv
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

from src.models.schemas import RunManifest
from src.utils.logger import logger

MANIFEST_NAME = "manifest.json"


def write_json(path: Path, data: Any) -> Path:
    """
    Write ``data`` as indented JSON

    Args:
        path: Destination file
        data: JSON-serialisable value

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=4, ensure_ascii=False)
        f.write("\n")
    logger.info(f"Saved {path}")
    return path


def _cell(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Dict[str, Any]]) -> Path:
    """
    Write rows with a header; floats use their shortest round-trip form and
    None becomes an empty cell so reruns are byte-identical

    Args:
        path: Destination file
        fieldnames: Column order
        rows: One dict per row

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fieldnames})
    logger.info(f"Saved {path}")
    return path


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    """Write (or overwrite) the single manifest of an artifact directory"""
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(manifest.model_dump_json(indent=4))
        f.write("\n")
    return path


def finish_manifest(out_dir: Path, manifest: RunManifest, status: str, error: Optional[str] = None) -> Path:
    """Stamp the final status and finish time, then write"""
    manifest.status = status
    manifest.error = error
    manifest.finished_at = datetime.now()
    logger.info(f"Run {manifest.command} finished with status {status}")
    return write_manifest(out_dir, manifest)
