"""
Reverse-mode gradients against central finite differences
"""
from typing import Dict, List, Tuple

import numpy as np

from src.core.tensor import make_rng
from src.training.autodiff import Tape, backward
from src.training.graph import classifier_graph, param_leaves
from src.training.model import TokenClassifier
from src.utils.logger import logger

REL_FLOOR = 1e-3


def analytic_gradients(model: TokenClassifier, ids: np.ndarray, labels: np.ndarray) -> Dict[str, np.ndarray]:
    tape = Tape()
    leaves = param_leaves(tape, model.params)
    loss = tape.cross_entropy(classifier_graph(tape, ids, leaves, model.config), labels)
    return backward(tape, loss).by_name()


def _sample_coordinates(model: TokenClassifier, n_coords: int, seed: int) -> List[Tuple[str, int]]:
    names = sorted(model.params)
    sizes = np.array([model.params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = make_rng(seed)
    picks = np.sort(rng.choice(total, size=min(n_coords, total), replace=False))
    coords = []
    for flat in picks:
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        coords.append((names[k], int(flat - offsets[k])))
    return coords


def grad_check(
    model: TokenClassifier,
    ids: np.ndarray,
    labels: np.ndarray,
    eps: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
) -> float:
    """
    Largest relative error between backward() and central differences
    over a sample of parameter coordinates

    Relative error is |a - n| / max(|a|, |n|, 1e-3); the floor keeps
    near-zero gradients from dominating.

    Args:
        model: Classifier to check
        ids: (N, T) or (T,) tokens
        labels: Labels shaped like ``ids``
        eps: Finite-difference step, > 0
        n_coords: Coordinates to sample (all of them when the model is smaller)
        seed: Sampling seed

    Returns:
        Maximum relative error
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = analytic_gradients(model, ids, labels)
    worst = 0.0
    for name, index in _sample_coordinates(model, n_coords, seed):
        base = model.params[name]
        losses = []
        for step in (eps, -eps):
            bumped = base.copy()
            bumped.flat[index] += step
            losses.append(model.with_params({**model.params, name: bumped}).loss(ids, labels))
        numeric = (losses[0] - losses[1]) / (2.0 * eps)
        analytic = float(grads[name].flat[index])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)
        worst = max(worst, err)
    logger.debug(f"Gradient check: max relative error {worst:.3e}")
    return worst
