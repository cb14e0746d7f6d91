"""
Adam with bias correction over a named parameter store
"""
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from src.core.tensor import Matrix
from src.models.schemas import TrainHyper
from src.utils.errors import ShapeError


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, Matrix] = field(default_factory=dict)
    v: Dict[str, Matrix] = field(default_factory=dict)


def adam_step(
    params: Dict[str, Matrix],
    grads: Dict[str, Matrix],
    state: AdamState,
    hyper: TrainHyper,
) -> Tuple[Dict[str, Matrix], AdamState]:
    """
    One Adam update. Inputs are not modified.

    Args:
        params: Current parameters
        grads: Gradients keyed like ``params`` (missing names count as zero)
        state: Moment estimates and step count
        hyper: Learning rate, betas and epsilon

    Returns:
        (updated parameters, updated state)
    """
    step = state.step + 1
    c1 = 1.0 - hyper.beta1 ** step
    c2 = 1.0 - hyper.beta2 ** step
    new_params: Dict[str, Matrix] = {}
    new_m: Dict[str, Matrix] = {}
    new_v: Dict[str, Matrix] = {}
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        elif g.shape != value.shape:
            raise ShapeError(f"gradient for {name} has the wrong shape", g.shape, value.shape)
        m = hyper.beta1 * state.m.get(name, np.zeros_like(value)) + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v.get(name, np.zeros_like(value)) + (1.0 - hyper.beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_params[name] = value - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=step, m=new_m, v=new_v)
