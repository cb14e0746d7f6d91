"""
Reverse-mode differentiation over numpy arrays.

A ``Tape`` records every primitive in execution order (a topological order).
Each entry keeps its inputs, its output, a forward function that recomputes
the output from the input values, and a backward function mapping the output
cotangent to input cotangents. Forward kernels are the ones in
``src.core.tensor`` so taped and untaped passes compute the same numbers.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core import tensor
from src.core.tensor import Matrix
from src.utils.errors import ContractError, ShapeError


class Var:
    """Node on a tape"""
    __slots__ = ("value", "name", "requires_grad")

    def __init__(self, value: np.ndarray, name: Optional[str] = None, requires_grad: bool = True):
        self.value = value
        self.name = name
        self.requires_grad = requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(name={self.name!r}, shape={self.value.shape})"


@dataclass
class TapeEntry:
    op: str
    inputs: Tuple[Var, ...]
    output: Var
    forward: Callable[..., np.ndarray]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast cotangent back to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


class Gradients:
    """Cotangents keyed by Var"""

    def __init__(self, grads: Dict[int, np.ndarray], index: Dict[int, Var]):
        self._grads = grads
        self._index = index

    def of(self, var: Var) -> np.ndarray:
        grad = self._grads.get(id(var))
        return np.zeros_like(var.value) if grad is None else grad

    def by_name(self) -> Dict[str, np.ndarray]:
        return {
            var.name: self.of(var)
            for var in self._index.values()
            if var.name is not None
        }


class Tape:
    """Recorder of primitive operations"""

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self.leaves: List[Var] = []

    # leaves

    def leaf(self, value: np.ndarray, name: Optional[str] = None) -> Var:
        var = Var(np.asarray(value, dtype=np.float64), name=name, requires_grad=True)
        self.leaves.append(var)
        return var

    def constant(self, value: np.ndarray) -> Var:
        return Var(np.asarray(value), requires_grad=False)

    def _record(self, op: str, inputs: Tuple[Var, ...], forward, backward_factory) -> Var:
        out_value = forward(*(v.value for v in inputs))
        out = Var(out_value, requires_grad=any(v.requires_grad for v in inputs))
        backward = backward_factory(*(v.value for v in inputs), out_value)
        self.entries.append(TapeEntry(op=op, inputs=inputs, output=out, forward=forward, backward=backward))
        return out

    # primitives

    def matmul(self, a: Var, b: Var) -> Var:
        def backward_factory(av, bv, _out):
            return lambda g: (
                _unbroadcast(np.matmul(g, _swap(bv)), av.shape),
                _unbroadcast(np.matmul(_swap(av), g), bv.shape),
            )
        return self._record("matmul", (a, b), tensor.matmul, backward_factory)

    def add(self, a: Var, b: Var) -> Var:
        def backward_factory(av, bv, _out):
            return lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape))
        return self._record("add", (a, b), np.add, backward_factory)

    def mul(self, a: Var, b: Var) -> Var:
        def backward_factory(av, bv, _out):
            return lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
        return self._record("mul", (a, b), np.multiply, backward_factory)

    def divide(self, a: Var, c: float) -> Var:
        def backward_factory(_av, _out):
            return lambda g: (g / c,)
        return self._record("divide", (a,), lambda av: av / c, backward_factory)

    def transpose(self, a: Var) -> Var:
        def backward_factory(_av, _out):
            return lambda g: (_swap(g),)
        return self._record("transpose", (a,), _swap, backward_factory)

    def softmax(self, a: Var) -> Var:
        def backward_factory(_av, y):
            return lambda g: (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)
        return self._record("softmax", (a,), tensor.softmax_rows, backward_factory)

    def masked_softmax(self, a: Var, bits: np.ndarray) -> Var:
        """Softmax over the support of ``bits``; zero weights carry zero gradient"""
        def forward(av):
            return tensor.masked_softmax_rows(av, bits)

        def backward_factory(_av, y):
            return lambda g: (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)
        return self._record("masked_softmax", (a,), forward, backward_factory)

    def relu(self, a: Var) -> Var:
        def backward_factory(av, _out):
            return lambda g: (g * (av > 0),)
        return self._record("relu", (a,), tensor.relu, backward_factory)

    def layer_norm(self, a: Var, gain: Var, bias: Var, eps: float) -> Var:
        def forward(av, gv, bv):
            return tensor.layer_norm_rows(av, gv, bv, eps)

        def backward_factory(av, gv, bv, _out):
            centered = av - np.mean(av, axis=-1, keepdims=True)
            inv = 1.0 / np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True) + eps)
            xhat = centered * inv

            def backward(g):
                gxhat = g * gv
                ga = inv * (
                    gxhat
                    - np.mean(gxhat, axis=-1, keepdims=True)
                    - xhat * np.mean(gxhat * xhat, axis=-1, keepdims=True)
                )
                return ga, _unbroadcast(g * xhat, gv.shape), _unbroadcast(g, bv.shape)
            return backward
        return self._record("layer_norm", (a, gain, bias), forward, backward_factory)

    def concat(self, parts: Sequence[Var]) -> Var:
        widths = [p.value.shape[-1] for p in parts]
        cuts = np.cumsum(widths)[:-1]

        def forward(*values):
            return np.concatenate(values, axis=-1)

        def backward_factory(*_values):
            return lambda g: tuple(np.split(g, cuts, axis=-1))
        return self._record("concat", tuple(parts), forward, backward_factory)

    def gather(self, table: Var, ids: np.ndarray) -> Var:
        ids = np.asarray(ids, dtype=np.int64)

        def forward(tv):
            return tv[ids]

        def backward_factory(tv, _out):
            def backward(g):
                grad = np.zeros_like(tv)
                np.add.at(grad, ids, g)
                return (grad,)
            return backward
        return self._record("gather", (table,), forward, backward_factory)

    def sum(self, a: Var) -> Var:
        def backward_factory(av, _out):
            return lambda g: (np.broadcast_to(g, av.shape).copy(),)
        return self._record("sum", (a,), lambda av: np.asarray(np.sum(av)), backward_factory)

    def cross_entropy(self, logits: Var, labels: np.ndarray, ignore_index: int = -1) -> Var:
        """Mean token-level cross-entropy over labels != ignore_index"""
        labels = np.asarray(labels, dtype=np.int64)
        keep = labels != ignore_index
        count = max(int(keep.sum()), 1)
        safe = np.where(keep, labels, 0)

        def forward(lv):
            return cross_entropy_value(lv, labels, ignore_index)

        def backward_factory(lv, _out):
            probs = tensor.softmax_rows(lv)
            onehot = np.zeros_like(lv)
            np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
            base = (probs - onehot) * keep[..., None] / count
            return lambda g: (base * g,)
        return self._record("cross_entropy", (logits,), forward, backward_factory)

    # replay and differentiation

    def replay(self) -> float:
        """
        Recompute every entry from current leaf values

        Returns:
            Maximum absolute deviation from the recorded outputs
        """
        fresh: Dict[int, np.ndarray] = {}
        worst = 0.0
        for entry in self.entries:
            values = [fresh.get(id(v), v.value) for v in entry.inputs]
            out = entry.forward(*values)
            fresh[id(entry.output)] = out
            diff = np.max(np.abs(np.asarray(out) - entry.output.value)) if np.size(out) else 0.0
            worst = max(worst, float(diff))
        return worst

    def vjp(self, output: Var, seed: np.ndarray) -> Gradients:
        """
        Pull ``seed`` (shaped like ``output``) back through the tape

        Args:
            output: Node to differentiate
            seed: Output cotangent

        Returns:
            Gradients for every node reached
        """
        if np.shape(seed) != output.value.shape:
            raise ShapeError("seed does not match output", np.shape(seed), output.value.shape)
        grads: Dict[int, np.ndarray] = {id(output): np.asarray(seed, dtype=np.float64)}
        index: Dict[int, Var] = {id(v): v for v in self.leaves}
        for entry in reversed(self.entries):
            g = grads.get(id(entry.output))
            if g is None:
                continue
            for var, gi in zip(entry.inputs, entry.backward(g)):
                if gi is None or not var.requires_grad:
                    continue
                prev = grads.get(id(var))
                grads[id(var)] = gi if prev is None else prev + gi
        return Gradients(grads, index)


def backward(tape: Tape, loss: Var) -> Gradients:
    """
    Gradients of a scalar loss with respect to every leaf

    Args:
        tape: Tape the loss was recorded on
        loss: Scalar node

    Returns:
        Gradients
    """
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    return tape.vjp(loss, np.ones_like(loss.value))


def cross_entropy_value(logits: Matrix, labels: np.ndarray, ignore_index: int = -1) -> np.ndarray:
    """Mean cross-entropy over kept labels, computed with a stable log-softmax"""
    labels = np.asarray(labels, dtype=np.int64)
    keep = labels != ignore_index
    count = max(int(keep.sum()), 1)
    safe = np.where(keep, labels, 0)
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    picked = np.take_along_axis(log_probs, safe[..., None], axis=-1)[..., 0]
    return np.asarray(-np.sum(picked * keep) / count)
