"""
Gradient sensitivity of a layer's attention output to that layer's input.

beta[i, j] is the Frobenius norm of dY[i] / dX[j], where X is the layer input
and Y the pre-residual multi-head attention output (or X + Y with
point="residual"). All T * d_v output coordinates are pulled back through one
recorded forward pass over a batch of identical copies of X, one output
coordinate per batch element.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.analysis.relations import TokenSets, sentence_sets
from src.core.encoder import EncoderModel, encode
from src.core.tensor import Matrix, check_square
from src.models.schemas import SensitivityReport
from src.training.autodiff import Tape
from src.training.graph import attention_block_graph
from src.utils.errors import ContractError
from src.utils.logger import logger

Gammas = Tuple[Optional[float], Optional[float], Optional[float]]
POINTS = ("attention", "residual")


def layer_input(model: EncoderModel, embedded: Matrix, layer: int) -> Matrix:
    """Input of ``layer``: position-encoded embeddings passed through the layers below"""
    return encode(embedded, model, upto=layer).final


def sensitivity_matrix(
    model: EncoderModel,
    embedded: Matrix,
    layer: int,
    point: str = "attention",
    chunk: int = 256,
) -> Matrix:
    """
    T x T sensitivity matrix of one layer

    Args:
        model: Encoder
        embedded: T x d_v token embeddings (before position encoding)
        layer: Layer index
        point: "attention" for Y, "residual" for X + Y
        chunk: Output coordinates pulled back per sweep

    Returns:
        Nonnegative T x T matrix
    """
    cfg = model.config
    if not 0 <= layer < cfg.n_layers:
        raise ContractError(f"layer {layer} outside a {cfg.n_layers}-layer model")
    if point not in POINTS:
        raise ContractError(f"point must be one of {POINTS}, got {point!r}")

    x = layer_input(model, embedded, layer)
    size, width = x.shape
    n_out = size * width
    batch = max(1, min(chunk, n_out))

    tape = Tape()
    xs = tape.leaf(np.broadcast_to(x, (batch, size, width)).copy(), name="x")
    consts = {name: tape.constant(value) for name, value in model.params.items()}
    y = attention_block_graph(tape, xs, consts, cfg, layer)
    if point == "residual":
        y = tape.add(xs, y)

    beta_sq = np.zeros((size, size))
    for start in range(0, n_out, batch):
        flat = np.arange(start, min(start + batch, n_out))
        rows, cols = np.divmod(flat, width)
        seed = np.zeros((batch, size, width))
        seed[np.arange(len(flat)), rows, cols] = 1.0
        grad = tape.vjp(y, seed).of(xs)[: len(flat)]
        np.add.at(beta_sq, rows, np.sum(grad * grad, axis=-1))
    return np.sqrt(beta_sq)


def _set_average(beta: Matrix, sets: Sequence[TokenSets], which: str) -> Optional[float]:
    per_token = []
    for s in sets:
        members = sorted(getattr(s, which))
        if members:
            per_token.append(float(np.mean(beta[s.i, members])))
    return float(np.mean(per_token)) if per_token else None


def gamma_scores(beta: Matrix, sets: Sequence[TokenSets]) -> Gammas:
    """
    Average sensitivity to local, non-local syntactic and unrelated tokens.
    Positions whose set is empty are left out of that average; a value is
    None when the set is empty for every position.

    Args:
        beta: T x T sensitivity matrix
        sets: TokenSets for every position

    Returns:
        (gamma_local, gamma_syntactic, gamma_unrelated)
    """
    check_square(beta, name="beta")
    if sorted(s.i for s in sets) != list(range(beta.shape[0])):
        raise ContractError("token sets must cover every position exactly once")
    return (
        _set_average(beta, sets, "local"),
        _set_average(beta, sets, "syntactic"),
        _set_average(beta, sets, "unrelated"),
    )


def sentence_sensitivity(
    model: EncoderModel,
    embedded: Matrix,
    edges: Sequence[Tuple[int, int]],
    layers: Sequence[int],
    point: str = "attention",
    window: int = 2,
) -> List[SensitivityReport]:
    """Beta and gammas of one sentence at each requested layer"""
    sets = sentence_sets(embedded.shape[0], edges, window)
    reports = []
    for layer in layers:
        beta = sensitivity_matrix(model, embedded, layer, point)
        g_local, g_syn, g_unrel = gamma_scores(beta, sets)
        reports.append(
            SensitivityReport(
                layer=layer,
                beta=beta.tolist(),
                gamma_local=g_local,
                gamma_syntactic=g_syn,
                gamma_unrelated=g_unrel,
            )
        )
    return reports


def _mean_defined(values: Sequence[Optional[float]]) -> Optional[float]:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else None


def average_reports(per_sentence: Sequence[Sequence[SensitivityReport]], layers: Sequence[int]) -> List[SensitivityReport]:
    """
    Uniform average over sentences of each layer's gammas; sentences where a
    gamma is undefined do not count towards it

    Args:
        per_sentence: One list of reports (one per layer) per sentence
        layers: Layers in the order of each inner list

    Returns:
        One corpus-level report per layer (beta omitted)
    """
    out = []
    for k, layer in enumerate(layers):
        rows = [reports[k] for reports in per_sentence]
        report = SensitivityReport(
            layer=layer,
            n_sentences=len(rows),
            gamma_local=_mean_defined([r.gamma_local for r in rows]),
            gamma_syntactic=_mean_defined([r.gamma_syntactic for r in rows]),
            gamma_unrelated=_mean_defined([r.gamma_unrelated for r in rows]),
        )
        for name in ("gamma_local", "gamma_syntactic", "gamma_unrelated"):
            if getattr(report, name) is None:
                logger.warning(f"Layer {layer}: {name} is undefined (empty set for every token)")
        out.append(report)
    return out
