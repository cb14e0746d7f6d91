"""
Synthetic token-tagging tasks.

local_parity           label[i] = (tok[i-1] + tok[i] + tok[i+1]) mod 2, zero padding
copy                   label[i] = tok[i]
first_token_broadcast  label[i] = tok[0]

Train and test sequences are drawn without repetition, so the two splits are
disjoint.
"""
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from src.core.tensor import make_rng
from src.models.schemas import TaskSpec
from src.utils.errors import ConfigError
from src.utils.logger import logger

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Dataset:
    spec: TaskSpec
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray

    def split(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        if name == "train":
            return self.train_x, self.train_y
        if name == "test":
            return self.test_x, self.test_y
        raise KeyError(name)


def task_labels(kind: str, tokens: np.ndarray) -> np.ndarray:
    """
    Labels for a (N, T) token array

    Args:
        kind: Task kind
        tokens: Integer tokens

    Returns:
        (N, T) integer labels
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if kind == "local_parity":
        padded = np.pad(tokens, ((0, 0), (1, 1)))
        return (padded[:, :-2] + padded[:, 1:-1] + padded[:, 2:]) % 2
    if kind == "copy":
        return tokens.copy()
    if kind == "first_token_broadcast":
        return np.repeat(tokens[:, :1], tokens.shape[1], axis=1)
    raise ConfigError(f"unknown task kind {kind!r}")


def label_edges(kind: str, seq_len: int) -> List[Edge]:
    """Position pairs the labels depend on, excluding each position itself"""
    if kind == "local_parity":
        return [(i - 1, i) for i in range(1, seq_len)]
    if kind == "first_token_broadcast":
        return [(0, i) for i in range(1, seq_len)]
    return []


def _unique_sequences(spec: TaskSpec, count: int) -> np.ndarray:
    space = spec.vocab_size ** spec.seq_len
    if count > space:
        raise ConfigError(
            f"{spec.kind}: {count} distinct sequences requested but only {space} exist "
            f"for vocab_size={spec.vocab_size}, seq_len={spec.seq_len}"
        )
    rng = make_rng(spec.seed)
    seen = set()
    rows: List[np.ndarray] = []
    while len(rows) < count:
        draw = rng.integers(0, spec.vocab_size, size=(max(count - len(rows), 16), spec.seq_len))
        for row in draw:
            key = row.tobytes()
            if key in seen:
                continue
            seen.add(key)
            rows.append(row)
            if len(rows) == count:
                break
    if not rows:
        return np.zeros((0, spec.seq_len), dtype=np.int64)
    return np.stack(rows).astype(np.int64)


def make_synthetic_task(spec: TaskSpec) -> Dataset:
    """
    Deterministic dataset for ``spec``

    Args:
        spec: Task description

    Returns:
        Dataset with disjoint train and test splits
    """
    tokens = _unique_sequences(spec, spec.n_train + spec.n_test)
    labels = task_labels(spec.kind, tokens) if len(tokens) else np.zeros_like(tokens)
    dataset = Dataset(
        spec=spec,
        train_x=tokens[: spec.n_train],
        train_y=labels[: spec.n_train],
        test_x=tokens[spec.n_train:],
        test_y=labels[spec.n_train:],
    )
    logger.debug(f"Generated {spec.kind}: {spec.n_train} train / {spec.n_test} test sequences of length {spec.seq_len}")
    return dataset


def iter_records(dataset: Dataset) -> Iterator[dict]:
    """JSONL records for both splits; the label edges make every file a valid analysis corpus"""
    edges = [list(e) for e in label_edges(dataset.spec.kind, dataset.spec.seq_len)]
    for split in ("train", "test"):
        xs, ys = dataset.split(split)
        for x, y in zip(xs, ys):
            yield {
                "tokens": [str(int(t)) for t in x],
                "labels": [int(v) for v in y],
                "split": split,
                "edges": edges,
            }
