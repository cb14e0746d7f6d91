"""
Checkpoint container: a versioned .npz holding every named parameter plus
JSON metadata (model config, task, vocabulary and class sizes)
"""
import json
import zipfile
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from src.models.schemas import ModelConfig, TaskSpec
from src.training.model import TokenClassifier
from src.utils.errors import ArtifactError
from src.utils.logger import logger

FORMAT_VERSION = 1
_META_KEY = "meta"
_PARAM_PREFIX = "param:"
# fixed member timestamp so reruns write identical bytes
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def save_checkpoint(path: Path, model: TokenClassifier, task: Optional[TaskSpec] = None) -> Path:
    """
    Write ``model`` (and the task it was trained on) to ``path``

    Args:
        path: Destination .npz file
        model: Classifier to store
        task: Optional task description

    Returns:
        Path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": model.config.model_dump(mode="json"),
        "task": task.model_dump(mode="json") if task is not None else None,
        "vocab_size": model.vocab_size,
        "n_classes": model.n_classes,
    }
    arrays = {f"{_PARAM_PREFIX}{name}": value for name, value in sorted(model.params.items())}
    members = {_META_KEY: np.array(json.dumps(meta, sort_keys=True)), **arrays}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED, allowZip64=True) as zf:
        for name, value in members.items():
            with zf.open(zipfile.ZipInfo(f"{name}.npy", date_time=_ZIP_DATE), "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asanyarray(value), allow_pickle=False)
    logger.info(f"Saved checkpoint with {len(arrays)} arrays to {path}")
    return path


def load_checkpoint(path: Path) -> Tuple[TokenClassifier, Optional[TaskSpec]]:
    """
    Read a checkpoint written by save_checkpoint

    Args:
        path: .npz file

    Returns:
        (classifier, task or None)
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            if _META_KEY not in data.files:
                raise ArtifactError(f"{path} has no metadata entry; not a checkpoint")
            meta = json.loads(str(data[_META_KEY]))
            params = {
                key[len(_PARAM_PREFIX):]: np.ascontiguousarray(data[key], dtype=np.float64)
                for key in data.files
                if key.startswith(_PARAM_PREFIX)
            }
    except (OSError, ValueError) as e:
        raise ArtifactError(f"could not read checkpoint {path}: {e}") from e

    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactError(f"{path}: checkpoint format {version} is not supported (expected {FORMAT_VERSION})")
    try:
        config = ModelConfig(**meta["config"])
        task = TaskSpec(**meta["task"]) if meta.get("task") else None
    except Exception as e:
        raise ArtifactError(f"{path}: stored configuration is invalid: {e}") from e

    try:
        model = TokenClassifier(config, int(meta["vocab_size"]), int(meta["n_classes"]), params)
    except KeyError as e:
        raise ArtifactError(f"{path}: parameter {e} is missing for the stored configuration") from e
    _check_shapes(model, path)
    return model, task


def _check_shapes(model: TokenClassifier, path: Path) -> None:
    expected = TokenClassifier.initialize(
        model.config, model.vocab_size, model.n_classes, np.random.Generator(np.random.PCG64(0))
    ).params
    missing = sorted(set(expected) - set(model.params))
    if missing:
        raise ArtifactError(f"{path}: missing parameters {missing[:5]}")
    for name, ref in expected.items():
        if model.params[name].shape != ref.shape:
            raise ArtifactError(f"{path}: parameter {name} has shape {model.params[name].shape}, expected {ref.shape}")


def check_compatible(model: TokenClassifier, expected: ModelConfig, path: Path) -> None:
    """Raise ArtifactError when a checkpoint does not hold the expected architecture"""
    if not model.config.same_shape(expected):
        raise ArtifactError(
            f"{path} holds a different model than requested "
            f"(checkpoint preset {model.config.preset!r}, requested {expected.preset!r})"
        )
