"""
Masked multi-head self-attention with W^q/W^k tying, the banded efficient
mode, and attention-parameter counting
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.masks import Mask, MaskKind, make_mask, parse_mask_name
from src.core.tensor import Matrix, masked_softmax_rows, matmul, softmax_rows
from src.utils.errors import ShapeError

AFTER_SOFTMAX = "after_softmax"
IN_SOFTMAX = "in_softmax"


@dataclass(frozen=True, eq=False)
class QKEntry:
    """One W^q/W^k pool entry; tied heads hold the same object"""
    w_q: Matrix
    w_k: Matrix


@dataclass(frozen=True)
class HeadParams:
    w_q: Matrix
    w_k: Matrix
    w_v: Matrix


@dataclass(frozen=True)
class LayerAttentionParams:
    qk: Tuple[QKEntry, ...]
    w_v: Tuple[Matrix, ...]
    w_o: Matrix
    masks: Tuple[Optional[MaskKind], ...]
    mask_mode: str = AFTER_SOFTMAX

    def __post_init__(self):
        if not (len(self.qk) == len(self.w_v) == len(self.masks)):
            raise ShapeError(
                "per-head lists differ in length",
                (len(self.qk),), (len(self.w_v),), (len(self.masks),),
            )

    @property
    def heads(self) -> int:
        return len(self.qk)

    @property
    def d_l(self) -> int:
        return self.qk[0].w_q.shape[1]

    def head(self, h: int) -> HeadParams:
        return HeadParams(w_q=self.qk[h].w_q, w_k=self.qk[h].w_k, w_v=self.w_v[h])


@dataclass(frozen=True)
class AttentionRecord:
    layer: int
    head: int
    alpha: Matrix
    alpha_tilde: Matrix


@lru_cache(maxsize=256)
def cached_mask(kind: MaskKind, size: int) -> Mask:
    return make_mask(kind, size)


def _check_head(x: Matrix, p: HeadParams, d_l: int) -> None:
    d_v = x.shape[-1]
    for name, w in (("W_q", p.w_q), ("W_k", p.w_k), ("W_v", p.w_v)):
        if w.shape != (d_v, d_l):
            raise ShapeError(f"{name} does not match input width and d_l", w.shape, (d_v, d_l))


def attention_scores(x: Matrix, w_q: Matrix, w_k: Matrix, d_l: int) -> Matrix:
    """X W_q (X W_k)^T / sqrt(d_l)"""
    q = matmul(x, w_q)
    k = matmul(x, w_k)
    return matmul(q, np.swapaxes(k, -1, -2)) / math.sqrt(d_l)


def _check_mask(x: Matrix, mask: Optional[Mask]) -> None:
    if mask is not None and mask.size != x.shape[-2]:
        raise ShapeError("mask size does not match sequence length", mask.bits.shape, x.shape)


def _masked_weights(scores: Matrix, alpha: Matrix, mask: Optional[Mask], mask_mode: str) -> Matrix:
    if mask is None:
        return alpha
    if mask_mode == IN_SOFTMAX:
        return masked_softmax_rows(scores, mask.bits)
    return mask.bits * alpha


def head_attention(
    x: Matrix,
    p: HeadParams,
    mask: Optional[Mask],
    d_l: int,
    layer: int = 0,
    head: int = 0,
    mask_mode: str = AFTER_SOFTMAX,
) -> Tuple[Matrix, AttentionRecord]:
    """
    Single head. In after_softmax mode the mask multiplies the full-row
    softmax and the surviving coefficients are not renormalized; in
    in_softmax mode the softmax only runs over the mask support. The record's
    alpha is the full-row softmax in both modes.

    Args:
        x: T x d_v input
        p: Projections
        mask: Optional T x T mask
        d_l: Head width used for score scaling
        layer: Layer index for the record
        head: Head index for the record
        mask_mode: "after_softmax" or "in_softmax"

    Returns:
        (T x d_l context, AttentionRecord)
    """
    _check_head(x, p, d_l)
    _check_mask(x, mask)
    scores = attention_scores(x, p.w_q, p.w_k, d_l)
    alpha = softmax_rows(scores)
    alpha_tilde = _masked_weights(scores, alpha, mask, mask_mode)
    context = matmul(alpha_tilde, matmul(x, p.w_v))
    return context, AttentionRecord(layer=layer, head=head, alpha=alpha, alpha_tilde=alpha_tilde)


def banded_attention(x: Matrix, p: HeadParams, k: int, d_l: int) -> Tuple[Matrix, Matrix]:
    """
    Efficient band-k attention: scores only for |i - j| <= k, softmax
    renormalized inside the band. Work is O(T * k * d_l) after projections.

    Args:
        x: T x d_v input
        p: Projections
        k: Band half-width, >= 1
        d_l: Head width

    Returns:
        (T x d_l context, alpha_band of shape T x (2k + 1)); column c of
        alpha_band holds the weight on position i + c - k
    """
    if k < 1:
        raise ValueError(f"band width must be >= 1, got {k}")
    _check_head(x, p, d_l)
    size = x.shape[0]
    q = matmul(x, p.w_q)
    keys = matmul(x, p.w_k)
    values = matmul(x, p.w_v)

    idx = np.arange(size)[:, None] + np.arange(-k, k + 1)[None, :]
    valid = (idx >= 0) & (idx < size)
    idx = np.clip(idx, 0, size - 1)

    scores = np.einsum("td,tcd->tc", q, keys[idx]) / math.sqrt(d_l)
    scores = np.where(valid, scores, -np.inf)
    scores = scores - np.max(scores, axis=-1, keepdims=True)
    weights = np.where(valid, np.exp(scores), 0.0)
    alpha_band = weights / np.sum(weights, axis=-1, keepdims=True)

    context = np.einsum("tc,tcd->td", alpha_band, values[idx])
    return context, alpha_band


def band_to_dense(alpha_band: Matrix, k: int) -> Matrix:
    """Expand T x (2k + 1) band storage to a dense T x T matrix"""
    size = alpha_band.shape[0]
    dense = np.zeros((size, size))
    for c, offset in enumerate(range(-k, k + 1)):
        rows = np.arange(max(0, -offset), min(size, size - offset))
        dense[rows, rows + offset] = alpha_band[rows, c]
    return dense


def renormalize_rows(alpha_tilde: Matrix) -> Matrix:
    """Divide each nonzero row by its sum; zero rows stay zero"""
    sums = np.sum(alpha_tilde, axis=-1, keepdims=True)
    safe = np.where(sums > 0, sums, 1.0)
    return alpha_tilde / safe


def multi_head_forward(
    x: Matrix, lp: LayerAttentionParams, layer: int = 0
) -> Tuple[Matrix, List[AttentionRecord]]:
    """
    All heads of one layer, concatenated and projected by W_o.
    Heads sharing a pool entry share one score buffer and one alpha buffer;
    in in_softmax mode they also share one restricted softmax per distinct mask.

    Args:
        x: T x d_v input
        lp: Layer parameters
        layer: Layer index for the records

    Returns:
        (T x d_v output, one AttentionRecord per head)
    """
    d_l = lp.d_l
    if lp.w_o.shape != (d_l * lp.heads, x.shape[-1]):
        raise ShapeError("W_o does not match heads * d_l x d_v", lp.w_o.shape, (d_l * lp.heads, x.shape[-1]))
    size = x.shape[-2]
    restricted = lp.mask_mode == IN_SOFTMAX
    by_entry: Dict[int, Tuple[Matrix, Matrix]] = {}
    restricted_by_mask: Dict[Tuple[int, MaskKind], Matrix] = {}
    contexts: List[Matrix] = []
    records: List[AttentionRecord] = []
    for h in range(lp.heads):
        p = lp.head(h)
        _check_head(x, p, d_l)
        entry = lp.qk[h]
        kind = lp.masks[h]
        mask = cached_mask(kind, size) if kind is not None else None
        if id(entry) not in by_entry:
            scores = attention_scores(x, entry.w_q, entry.w_k, d_l)
            by_entry[id(entry)] = (scores, softmax_rows(scores))
        scores, alpha = by_entry[id(entry)]
        if restricted and kind is not None:
            key = (id(entry), kind)
            if key not in restricted_by_mask:
                restricted_by_mask[key] = _masked_weights(scores, alpha, mask, lp.mask_mode)
            alpha_tilde = restricted_by_mask[key]
        else:
            alpha_tilde = _masked_weights(scores, alpha, mask, lp.mask_mode)
        contexts.append(matmul(alpha_tilde, matmul(x, p.w_v)))
        records.append(AttentionRecord(layer=layer, head=h, alpha=alpha, alpha_tilde=alpha_tilde))
    y = matmul(np.concatenate(contexts, axis=-1), lp.w_o)
    return y, records


def count_attention_params(cfg) -> int:
    """
    Attention parameters of a ModelConfig: W_q/W_k once per tie group,
    W_v once per head, W_o once per layer

    Args:
        cfg: ModelConfig

    Returns:
        Exact count
    """
    per_matrix = cfg.d_v * cfg.d_l
    qk = len(cfg.tie_groups) * 2 * per_matrix
    v = cfg.n_layers * cfg.heads * per_matrix
    o = cfg.n_layers * cfg.heads * cfg.d_l * cfg.d_v
    return qk + v + o


def count_attention_params_from_params(params: Mapping[str, Matrix]) -> int:
    """Count distinct attention arrays in an instantiated parameter store"""
    seen = set()
    total = 0
    for name, arr in params.items():
        is_attn = name.startswith("qk/") or name.endswith("/w_v") or name.endswith("/w_o")
        if is_attn and id(arr) not in seen:
            seen.add(id(arr))
            total += arr.size
    return total


def rounded_millions(n: int) -> str:
    """Millions truncated to two decimals (3,538,944 -> "3.53M")"""
    hundredths = n // 10_000
    return f"{hundredths // 100}.{hundredths % 100:02d}M"


def mask_kinds(names: Sequence[Optional[str]]) -> Tuple[Optional[MaskKind], ...]:
    return tuple(parse_mask_name(n) if n is not None else None for n in names)
