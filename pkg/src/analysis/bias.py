"""
Attention bias metric and per-head locality / non-local syntactic scores.

For a token i and a subset of positions, the bias is the mean attention paid
to the subset divided by the mean attention paid to the whole sentence; a
uniform row scores 1 for any subset and scaling a row changes nothing.
"""
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np

from src.analysis.relations import sentence_sets
from src.core.attention import AttentionRecord
from src.core.encoder import EncoderModel, encode
from src.core.tensor import Matrix
from src.models.schemas import BiasReport
from src.utils.errors import ContractError

Kind = Literal["locality", "syntactic"]
Scores = List[List[Optional[float]]]
THRESHOLDS = (1.0, 2.0, 3.0, 4.0, 5.0)
HEADMAP_THRESHOLD = 3.0


def attention_bias(alpha_row: np.ndarray, subset: Sequence[int]) -> Optional[float]:
    """
    (sum_{j in subset} a[j] / |subset|) / (sum_j a[j] / T)

    Args:
        alpha_row: Attention weights of one query token
        subset: Key positions

    Returns:
        Bias ratio, or None when the subset is empty or the row has no mass
    """
    if len(subset) == 0:
        return None
    size = alpha_row.shape[0]
    if any(not 0 <= j < size for j in subset):
        raise ContractError(f"subset index outside a row of length {size}")
    total = float(np.sum(alpha_row))
    if total <= 0.0:
        return None
    return (float(np.sum(alpha_row[list(subset)])) / len(subset)) / (total / size)


def _subset(sets, kind: Kind, include_self: bool) -> List[int]:
    if kind == "locality":
        members = set(sets.local)
        if not include_self:
            members.discard(sets.i)
        return sorted(members)
    return sorted(sets.syntactic)


def sentence_bias_scores(
    records: Sequence[AttentionRecord],
    n_layers: int,
    heads: int,
    size: int,
    edges: Sequence[Tuple[int, int]],
    kind: Kind,
    use_masked: bool = True,
    include_self: bool = True,
    window: int = 2,
) -> np.ndarray:
    """
    Per-head bias averaged over the tokens of one sentence

    Returns:
        (n_layers, heads) array, NaN where no token of the sentence qualifies
    """
    all_sets = sentence_sets(size, edges, window)
    out = np.full((n_layers, heads), np.nan)
    for record in records:
        alpha = record.alpha_tilde if use_masked else record.alpha
        values = []
        for sets in all_sets:
            value = attention_bias(alpha[sets.i], _subset(sets, kind, include_self))
            if value is not None:
                values.append(value)
        if values:
            out[record.layer, record.head] = float(np.mean(values))
    return out


def combine_sentence_scores(per_sentence: Sequence[np.ndarray]) -> Scores:
    """Uniform average over sentences of each head's score, skipping undefined ones"""
    if not per_sentence:
        raise ContractError("no sentences to average")
    stacked = np.stack(per_sentence)
    defined = ~np.isnan(stacked)
    counts = defined.sum(axis=0)
    sums = np.where(defined, stacked, 0.0).sum(axis=0)
    return [
        [float(sums[l, h] / counts[l, h]) if counts[l, h] else None for h in range(stacked.shape[2])]
        for l in range(stacked.shape[1])
    ]


def head_bias_scores(
    model: EncoderModel,
    sentences: Sequence[Tuple[Matrix, Sequence[Tuple[int, int]]]],
    kind: Kind,
    use_masked: bool = True,
    include_self: bool = True,
    window: int = 2,
) -> Scores:
    """
    Locality or non-local syntactic bias score of every head

    Args:
        model: Encoder
        sentences: (T x d_v embeddings, dependency edges) per sentence
        kind: "locality" (subset L_i) or "syntactic" (subset S_i)
        use_masked: Score alpha_tilde (the weights the model uses) instead of raw alpha
        include_self: Keep token i in its own local subset
        window: Half-width of the local window

    Returns:
        n_layers x heads nested list; None for heads with no qualifying token
    """
    if not sentences:
        raise ContractError("head_bias_scores needs a nonempty corpus")
    cfg = model.config
    per_sentence = []
    for embedded, edges in sentences:
        out = encode(embedded, model)
        per_sentence.append(
            sentence_bias_scores(
                out.records, cfg.n_layers, cfg.heads, embedded.shape[0], edges,
                kind, use_masked, include_self, window,
            )
        )
    return combine_sentence_scores(per_sentence)


def _flatten(scores: Scores) -> List[float]:
    return [s for row in scores for s in row if s is not None]


def threshold_curve(scores: Scores, thresholds: Sequence[float] = THRESHOLDS) -> List[float]:
    """
    Fraction of heads whose score is strictly greater than each threshold

    Args:
        scores: Per-head scores (None entries are left out)
        thresholds: Thresholds to evaluate

    Returns:
        One fraction per threshold
    """
    values = np.asarray(_flatten(scores))
    if values.size == 0:
        raise ContractError("threshold_curve needs at least one defined score")
    return [float(np.mean(values > t)) for t in thresholds]


def headmap(locality: Scores, syntactic: Scores, threshold: float = HEADMAP_THRESHOLD) -> List[List[str]]:
    """Label each head local / syntactic / both / none at ``threshold``"""
    labels = []
    for loc_row, syn_row in zip(locality, syntactic):
        row = []
        for loc, syn in zip(loc_row, syn_row):
            is_local = loc is not None and loc > threshold
            is_syn = syn is not None and syn > threshold
            row.append("both" if is_local and is_syn else "local" if is_local else "syntactic" if is_syn else "none")
        labels.append(row)
    return labels


def bias_report(
    locality: Scores,
    syntactic: Scores,
    n_sentences: int,
    use_masked: bool = True,
    thresholds: Sequence[float] = THRESHOLDS,
) -> BiasReport:
    """Bundle scores, threshold curves and the head map"""
    def curve(scores: Scores) -> List[float]:
        return threshold_curve(scores, thresholds) if _flatten(scores) else [0.0] * len(thresholds)

    return BiasReport(
        n_sentences=n_sentences,
        locality=locality,
        syntactic=syntactic,
        thresholds=list(thresholds),
        fraction_local=curve(locality),
        fraction_syntactic=curve(syntactic),
        headmap=headmap(locality, syntactic),
        use_masked=use_masked,
    )
