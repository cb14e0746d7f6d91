"""
Differentiable encoder: the same computation as ``src.core.encoder`` written
against a Tape, in the same operation order
"""
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.attention import IN_SOFTMAX, cached_mask, mask_kinds
from src.core.masks import MaskKind
from src.core.encoder import LN_EPS, layer_name, qk_name
from src.core.tensor import sinusoidal_positions
from src.models.schemas import ModelConfig
from src.training.autodiff import Tape, Var

ParamVars = Dict[str, Var]


def param_leaves(tape: Tape, params: Dict[str, np.ndarray]) -> ParamVars:
    """One named leaf per stored array (tied heads share a leaf)"""
    return {name: tape.leaf(value, name=name) for name, value in params.items()}


def attention_graph(tape: Tape, x: Var, P: ParamVars, cfg: ModelConfig, layer: int) -> Var:
    """
    Multi-head attention output Y of one layer (pre-residual)

    Args:
        tape: Recording tape
        x: (..., T, d_v) layer input
        P: Parameter leaves
        cfg: Model configuration
        layer: Layer index

    Returns:
        (..., T, d_v) node
    """
    groups = cfg.group_index()
    kinds = mask_kinds(cfg.masks[layer])
    size = x.shape[-2]
    scale = math.sqrt(cfg.d_l)
    restricted = cfg.mask_mode == IN_SOFTMAX
    scores_by_group: Dict[int, Var] = {}
    alphas: Dict[Tuple[int, Optional[MaskKind]], Var] = {}
    contexts: List[Var] = []
    for h in range(cfg.heads):
        g = groups[(layer, h)]
        kind = kinds[h]
        bits = cached_mask(kind, size).bits if kind is not None else None
        key = (g, kind if restricted else None)
        alpha = alphas.get(key)
        if alpha is None:
            scores = scores_by_group.get(g)
            if scores is None:
                q = tape.matmul(x, P[qk_name(g, "w_q")])
                k = tape.matmul(x, P[qk_name(g, "w_k")])
                scores = tape.divide(tape.matmul(q, tape.transpose(k)), scale)
                scores_by_group[g] = scores
            alpha = tape.masked_softmax(scores, bits) if restricted and bits is not None else tape.softmax(scores)
            alphas[key] = alpha
        if bits is not None and not restricted:
            alpha_tilde = tape.mul(tape.constant(bits), alpha)
        else:
            alpha_tilde = alpha
        values = tape.matmul(x, P[layer_name(layer, f"head{h}/w_v")])
        contexts.append(tape.matmul(alpha_tilde, values))
    return tape.matmul(tape.concat(contexts), P[layer_name(layer, "w_o")])


def _feed_forward(tape: Tape, z: Var, P: ParamVars, layer: int) -> Var:
    hidden = tape.relu(tape.add(tape.matmul(z, P[layer_name(layer, "ffn/w1")]), P[layer_name(layer, "ffn/b1")]))
    return tape.add(tape.matmul(hidden, P[layer_name(layer, "ffn/w2")]), P[layer_name(layer, "ffn/b2")])


def _norm(tape: Tape, x: Var, P: ParamVars, layer: int, which: str) -> Var:
    return tape.layer_norm(x, P[layer_name(layer, f"{which}/gain")], P[layer_name(layer, f"{which}/bias")], LN_EPS)


def attention_block_graph(tape: Tape, x: Var, P: ParamVars, cfg: ModelConfig, layer: int) -> Var:
    """Pre-residual attention output as a function of the layer input (LN1 first under pre-norm)"""
    if cfg.norm == "pre":
        x = _norm(tape, x, P, layer, "ln1")
    return attention_graph(tape, x, P, cfg, layer)


def layer_graph(tape: Tape, x: Var, P: ParamVars, cfg: ModelConfig, layer: int) -> Var:
    """One encoder layer, post-norm or pre-norm per ``cfg.norm``"""
    y = attention_block_graph(tape, x, P, cfg, layer)
    if cfg.norm == "post":
        z = _norm(tape, tape.add(x, y), P, layer, "ln1")
        return _norm(tape, tape.add(z, _feed_forward(tape, z, P, layer)), P, layer, "ln2")
    z = tape.add(x, y)
    return tape.add(z, _feed_forward(tape, _norm(tape, z, P, layer, "ln2"), P, layer))


def encoder_graph(tape: Tape, embedded: Var, P: ParamVars, cfg: ModelConfig, upto: Optional[int] = None) -> Var:
    """Position encoding plus the layer stack"""
    positions = tape.constant(sinusoidal_positions(embedded.shape[-2], embedded.shape[-1]))
    x = tape.add(embedded, positions)
    n = cfg.n_layers if upto is None else min(upto, cfg.n_layers)
    for l in range(n):
        x = layer_graph(tape, x, P, cfg, l)
    return x


def classifier_graph(tape: Tape, ids: np.ndarray, P: ParamVars, cfg: ModelConfig, embedded: Optional[Var] = None) -> Var:
    """
    Token classifier logits: embedding lookup, encoder, per-token linear head

    Args:
        tape: Recording tape
        ids: (..., T) token ids
        P: Parameter leaves, including ``embed/tokens``, ``head/w``, ``head/b``
        cfg: Encoder configuration
        embedded: Optional precomputed embedding node (used to differentiate
            with respect to the inputs)

    Returns:
        (..., T, n_classes) logits node
    """
    if embedded is None:
        embedded = tape.gather(P["embed/tokens"], ids)
    hidden = encoder_graph(tape, embedded, P, cfg)
    return tape.add(tape.matmul(hidden, P["head/w"]), P["head/b"])
