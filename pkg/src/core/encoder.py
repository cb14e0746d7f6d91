"""
Encoder stack: masked multi-head attention, residual, feed-forward and
layer normalization, plus the named parameter store behind it
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.attention import AttentionRecord, LayerAttentionParams, QKEntry, mask_kinds, multi_head_forward
from src.core.masks import max_distance
from src.core.tensor import (
    Matrix,
    Rng,
    glorot_scale,
    layer_norm_rows,
    matmul,
    relu,
    seeded_uniform_init,
    sinusoidal_positions,
)
from src.models.schemas import ModelConfig
from src.utils.errors import ShapeError

LN_EPS = 1e-6


@dataclass(frozen=True)
class LayerParams:
    attention: LayerAttentionParams
    ln1_gain: Matrix
    ln1_bias: Matrix
    w1: Matrix
    b1: Matrix
    w2: Matrix
    b2: Matrix
    ln2_gain: Matrix
    ln2_bias: Matrix


@dataclass
class LayerResult:
    output: Matrix
    attention_output: Matrix
    records: List[AttentionRecord]


@dataclass
class EncoderOutput:
    """Per-layer inputs, attention outputs (pre-residual), outputs and records"""
    embedded: Matrix
    inputs: List[Matrix] = field(default_factory=list)
    attention_outputs: List[Matrix] = field(default_factory=list)
    outputs: List[Matrix] = field(default_factory=list)
    records: List[AttentionRecord] = field(default_factory=list)

    @property
    def final(self) -> Matrix:
        return self.outputs[-1] if self.outputs else self.embedded

    def record(self, layer: int, head: int) -> AttentionRecord:
        for r in self.records:
            if r.layer == layer and r.head == head:
                return r
        raise KeyError((layer, head))


def qk_name(group: int, which: str) -> str:
    return f"qk/{group}/{which}"


def layer_name(layer: int, suffix: str) -> str:
    return f"layer{layer}/{suffix}"


def init_encoder_params(cfg: ModelConfig, rng: Rng) -> Dict[str, Matrix]:
    """
    Fresh parameter store for ``cfg``; draw order is fixed so a seed fully
    determines the result

    Args:
        cfg: Model configuration
        rng: Generator to consume

    Returns:
        Mapping from parameter name to array
    """
    params: Dict[str, Matrix] = {}
    qk_scale = glorot_scale(cfg.d_v, cfg.d_l)
    for g in range(len(cfg.tie_groups)):
        params[qk_name(g, "w_q")] = seeded_uniform_init(cfg.d_v, cfg.d_l, qk_scale, rng)
        params[qk_name(g, "w_k")] = seeded_uniform_init(cfg.d_v, cfg.d_l, qk_scale, rng)
    o_scale = glorot_scale(cfg.heads * cfg.d_l, cfg.d_v)
    ff1_scale = glorot_scale(cfg.d_v, cfg.d_ff)
    ff2_scale = glorot_scale(cfg.d_ff, cfg.d_v)
    for l in range(cfg.n_layers):
        for h in range(cfg.heads):
            params[layer_name(l, f"head{h}/w_v")] = seeded_uniform_init(cfg.d_v, cfg.d_l, qk_scale, rng)
        params[layer_name(l, "w_o")] = seeded_uniform_init(cfg.heads * cfg.d_l, cfg.d_v, o_scale, rng)
        params[layer_name(l, "ln1/gain")] = np.ones(cfg.d_v)
        params[layer_name(l, "ln1/bias")] = np.zeros(cfg.d_v)
        params[layer_name(l, "ffn/w1")] = seeded_uniform_init(cfg.d_v, cfg.d_ff, ff1_scale, rng)
        params[layer_name(l, "ffn/b1")] = np.zeros(cfg.d_ff)
        params[layer_name(l, "ffn/w2")] = seeded_uniform_init(cfg.d_ff, cfg.d_v, ff2_scale, rng)
        params[layer_name(l, "ffn/b2")] = np.zeros(cfg.d_v)
        params[layer_name(l, "ln2/gain")] = np.ones(cfg.d_v)
        params[layer_name(l, "ln2/bias")] = np.zeros(cfg.d_v)
    return params


class EncoderModel:
    """Config plus a named parameter store, with structured per-layer views"""

    def __init__(self, config: ModelConfig, params: Dict[str, Matrix]):
        self.config = config
        self.params = params
        groups = config.group_index()
        entries = [
            QKEntry(w_q=params[qk_name(g, "w_q")], w_k=params[qk_name(g, "w_k")])
            for g in range(len(config.tie_groups))
        ]
        self._layers: List[LayerParams] = []
        for l in range(config.n_layers):
            attention = LayerAttentionParams(
                qk=tuple(entries[groups[(l, h)]] for h in range(config.heads)),
                w_v=tuple(params[layer_name(l, f"head{h}/w_v")] for h in range(config.heads)),
                w_o=params[layer_name(l, "w_o")],
                masks=mask_kinds(config.masks[l]),
                mask_mode=config.mask_mode,
            )
            self._layers.append(
                LayerParams(
                    attention=attention,
                    ln1_gain=params[layer_name(l, "ln1/gain")],
                    ln1_bias=params[layer_name(l, "ln1/bias")],
                    w1=params[layer_name(l, "ffn/w1")],
                    b1=params[layer_name(l, "ffn/b1")],
                    w2=params[layer_name(l, "ffn/w2")],
                    b2=params[layer_name(l, "ffn/b2")],
                    ln2_gain=params[layer_name(l, "ln2/gain")],
                    ln2_bias=params[layer_name(l, "ln2/bias")],
                )
            )

    @classmethod
    def initialize(cls, config: ModelConfig, rng: Rng) -> "EncoderModel":
        return cls(config, init_encoder_params(config, rng))

    def layer(self, l: int) -> LayerParams:
        return self._layers[l]


def feed_forward(z: Matrix, lp: LayerParams) -> Matrix:
    """Two affine maps with ReLU between, applied per token"""
    return matmul(relu(matmul(z, lp.w1) + lp.b1), lp.w2) + lp.b2


def encoder_layer_forward(x: Matrix, lp: LayerParams, layer: int = 0, norm: str = "post") -> LayerResult:
    """
    One encoder layer.
    post: Z = LN1(X + MHA(X)), X' = LN2(Z + FFN(Z))
    pre:  Z = X + MHA(LN1(X)), X' = Z + FFN(LN2(Z))

    Args:
        x: T x d_v input
        lp: Layer parameters
        layer: Layer index for the records
        norm: "post" or "pre"

    Returns:
        LayerResult with the layer output, the pre-residual attention output and records
    """
    if norm == "post":
        y, records = multi_head_forward(x, lp.attention, layer)
        z = layer_norm_rows(x + y, lp.ln1_gain, lp.ln1_bias, LN_EPS)
        out = layer_norm_rows(z + feed_forward(z, lp), lp.ln2_gain, lp.ln2_bias, LN_EPS)
    else:
        y, records = multi_head_forward(layer_norm_rows(x, lp.ln1_gain, lp.ln1_bias, LN_EPS), lp.attention, layer)
        z = x + y
        out = z + feed_forward(layer_norm_rows(z, lp.ln2_gain, lp.ln2_bias, LN_EPS), lp)
    return LayerResult(output=out, attention_output=y, records=records)


def add_positions(embedded: Matrix) -> Matrix:
    return embedded + sinusoidal_positions(embedded.shape[-2], embedded.shape[-1])


def encode(embedded: Matrix, model: EncoderModel, upto: Optional[int] = None) -> EncoderOutput:
    """
    Sinusoidal position encoding followed by the layer stack

    Args:
        embedded: T x d_v token embeddings
        model: Encoder
        upto: Stop after this many layers (default: all)

    Returns:
        EncoderOutput with every layer's intermediate values and records
    """
    cfg = model.config
    if embedded.shape[-1] != cfg.d_v:
        raise ShapeError("embedding width does not match d_v", embedded.shape, (embedded.shape[-2], cfg.d_v))
    x = add_positions(embedded)
    result = EncoderOutput(embedded=x)
    n = cfg.n_layers if upto is None else min(upto, cfg.n_layers)
    for l in range(n):
        result.inputs.append(x)
        step = encoder_layer_forward(x, model.layer(l), l, cfg.norm)
        result.attention_outputs.append(step.attention_output)
        result.outputs.append(step.output)
        result.records.extend(step.records)
        x = step.output
    return result


def receptive_field(cfg: ModelConfig) -> Tuple[List[Optional[int]], Optional[int]]:
    """
    Largest attended distance per layer (None when any head is unmasked)
    and the cumulative receptive radius of the final output

    Args:
        cfg: Model configuration

    Returns:
        (per-layer distances, total radius or None when unbounded)
    """
    per_layer: List[Optional[int]] = []
    for names in cfg.masks:
        kinds = mask_kinds(names)
        if any(k is None for k in kinds):
            per_layer.append(None)
        else:
            per_layer.append(max(max_distance(k) for k in kinds))
    if any(d is None for d in per_layer):
        return per_layer, None
    return per_layer, sum(per_layer)
