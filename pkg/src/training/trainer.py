"""
Training loop: Adam on token-level cross-entropy, evaluation with the numpy forward
"""
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from config.settings import settings
from src.models.schemas import EpochMetrics, ModelConfig, TrainHyper, TrainResult
from src.training.autodiff import Tape, backward
from src.training.graph import classifier_graph, param_leaves
from src.training.model import TokenClassifier
from src.training.optim import AdamState, adam_step
from src.training.tasks import Dataset
from src.utils.errors import DivergenceError
from src.utils.logger import logger

IGNORE_LABEL = -1
EVAL_BATCH = 256


def evaluate(model: TokenClassifier, ids: np.ndarray, labels: np.ndarray) -> Tuple[float, List[float]]:
    """
    Accuracy over labelled tokens and per position

    Args:
        model: Classifier
        ids: (N, T) tokens
        labels: (N, T) labels, IGNORE_LABEL where unlabelled

    Returns:
        (overall accuracy, per-position accuracy); NaN where nothing is labelled
    """
    if len(ids) == 0:
        return math.nan, []
    correct = np.zeros(ids.shape[1])
    counted = np.zeros(ids.shape[1])
    for start in range(0, len(ids), EVAL_BATCH):
        x = ids[start:start + EVAL_BATCH]
        y = labels[start:start + EVAL_BATCH]
        keep = y != IGNORE_LABEL
        pred = model.predict(x)
        correct += np.sum((pred == y) & keep, axis=0)
        counted += np.sum(keep, axis=0)
    total = counted.sum()
    overall = float(correct.sum() / total) if total else math.nan
    per_position = [float(c / n) if n else math.nan for c, n in zip(correct, counted)]
    return overall, per_position


def train_step(
    model: TokenClassifier,
    ids: np.ndarray,
    labels: np.ndarray,
    state: AdamState,
    hyper: TrainHyper,
) -> Tuple[TokenClassifier, AdamState, float]:
    """
    Forward on the tape, backward, one Adam update

    Returns:
        (updated model, updated optimizer state, batch loss before the update)
    """
    tape = Tape()
    leaves = param_leaves(tape, model.params)
    logits = classifier_graph(tape, ids, leaves, model.config)
    loss = tape.cross_entropy(logits, labels, IGNORE_LABEL)
    grads = backward(tape, loss).by_name()
    params, state = adam_step(model.params, grads, state, hyper)
    return model.with_params(params), state, float(loss.value)


def train(
    dataset: Dataset,
    config: ModelConfig,
    hyper: TrainHyper,
    seed: int,
    progress: Optional[bool] = None,
    on_epoch: Optional[Callable[[EpochMetrics], None]] = None,
) -> Tuple[TokenClassifier, TrainResult]:
    """
    Train a token classifier on a synthetic task

    Args:
        dataset: Train/test splits
        config: Encoder configuration
        hyper: Optimizer settings
        seed: Run seed; initialization and shuffling streams are derived from it
        progress: Show a progress bar (default from settings)
        on_epoch: Called with each epoch's metrics as soon as they exist

    Returns:
        (trained model, TrainResult with per-epoch metrics and final per-position accuracy)
    """
    spec = dataset.spec
    model = initial_model(dataset, config, seed)
    _, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    order_rng = np.random.Generator(np.random.PCG64(shuffle_seq))
    state = AdamState()
    result = TrainResult()
    show = settings.progress if progress is None else progress
    logger.info(
        f"Training {config.preset or 'custom'} on {spec.kind} "
        f"(T={spec.seq_len}, {spec.n_train} train, {hyper.epochs} epochs, seed {seed})"
    )

    n_train = len(dataset.train_x)
    for epoch in tqdm(range(1, hyper.epochs + 1), desc="Training", unit="epoch", disable=not show):
        order = order_rng.permutation(n_train)
        losses: List[float] = []
        for step, start in enumerate(range(0, n_train, hyper.batch_size)):
            batch = order[start:start + hyper.batch_size]
            model, state, loss = train_step(model, dataset.train_x[batch], dataset.train_y[batch], state, hyper)
            if not math.isfinite(loss):
                logger.error(f"Loss became {loss} at epoch {epoch}, step {step}")
                raise DivergenceError(epoch, step, loss)
            losses.append(loss)

        train_acc, _ = evaluate(model, dataset.train_x, dataset.train_y)
        test_acc, per_position = evaluate(model, dataset.test_x, dataset.test_y)
        metrics = EpochMetrics(
            epoch=epoch,
            train_acc=train_acc,
            test_acc=test_acc,
            loss=float(np.mean(losses)) if losses else math.nan,
        )
        result.metrics.append(metrics)
        result.per_position_acc = per_position
        if on_epoch is not None:
            on_epoch(metrics)
        logger.info(
            f"Epoch {epoch}: loss {metrics.loss:.4f}, train acc {train_acc:.4f}, test acc {test_acc:.4f}"
        )

    result.final_test_acc = result.metrics[-1].test_acc if result.metrics else None
    return model, result


def initial_model(dataset: Dataset, config: ModelConfig, seed: int) -> TokenClassifier:
    """The model ``train`` starts from for the same seed"""
    init_seq, _ = np.random.SeedSequence(seed).spawn(2)
    spec = dataset.spec
    return TokenClassifier.initialize(
        config, spec.vocab_size, spec.n_classes, np.random.Generator(np.random.PCG64(init_seq))
    )
