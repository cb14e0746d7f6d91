import math

import numpy as np
import pytest

from src.core.attention import (
    IN_SOFTMAX,
    HeadParams,
    LayerAttentionParams,
    QKEntry,
    band_to_dense,
    banded_attention,
    count_attention_params,
    count_attention_params_from_params,
    head_attention,
    mask_kinds,
    multi_head_forward,
    renormalize_rows,
    rounded_millions,
)
from src.core.encoder import init_encoder_params
from src.core.masks import MaskKind, make_mask
from src.core.presets import PUBLISHED_COUNTS, resolve_preset
from src.core.tensor import make_rng
from src.utils.errors import ShapeError


def random_head(rng, d_v=6, d_l=4):
    return HeadParams(
        w_q=rng.standard_normal((d_v, d_l)),
        w_k=rng.standard_normal((d_v, d_l)),
        w_v=rng.standard_normal((d_v, d_l)),
    )


def oracle_head(x, p, bits, d_l):
    size = x.shape[0]
    q, k, v = x @ p.w_q, x @ p.w_k, x @ p.w_v
    alpha = np.zeros((size, size))
    for i in range(size):
        scores = [float(np.dot(q[i], k[j])) / math.sqrt(d_l) for j in range(size)]
        top = max(scores)
        exps = [math.exp(s - top) for s in scores]
        total = sum(exps)
        for j in range(size):
            alpha[i, j] = exps[j] / total
    alpha_tilde = alpha * bits
    return alpha_tilde @ v, alpha, alpha_tilde


def test_head_attention_matches_oracle(rng):
    x = rng.standard_normal((7, 6))
    p = random_head(rng)
    mask = make_mask(MaskKind("band", 2), 7)
    context, record = head_attention(x, p, mask, 4)
    ctx_o, alpha_o, tilde_o = oracle_head(x, p, mask.bits, 4)
    assert np.allclose(record.alpha, alpha_o, atol=1e-12)
    assert np.allclose(record.alpha_tilde, tilde_o, atol=1e-12)
    assert np.allclose(context, ctx_o, atol=1e-12)
    assert np.allclose(record.alpha.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(record.alpha_tilde, mask.bits * record.alpha)
    assert np.all(record.alpha_tilde.sum(axis=1) <= 1.0 + 1e-12)


def test_all_ones_mask_equals_unmasked(rng):
    x = rng.standard_normal((5, 6))
    p = random_head(rng)
    full = make_mask(MaskKind("band", 4), 5)
    masked, _ = head_attention(x, p, full, 4)
    plain, _ = head_attention(x, p, None, 4)
    assert np.allclose(masked, plain, atol=1e-15)


def test_prev1_first_row_is_zero(rng):
    x = rng.standard_normal((3, 6))
    context, record = head_attention(x, random_head(rng), make_mask(MaskKind("prev", 1), 3), 4)
    assert np.all(context[0] == 0.0)
    assert np.all(record.alpha_tilde[0] == 0.0)


def test_zero_scores_give_uniform_weights_without_renormalization(rng):
    p = HeadParams(w_q=np.zeros((6, 4)), w_k=np.zeros((6, 4)), w_v=rng.standard_normal((6, 4)))
    _, record = head_attention(rng.standard_normal((3, 6)), p, make_mask(MaskKind("band", 1), 3), 4)
    assert np.allclose(record.alpha, 1.0 / 3.0, atol=1e-15)
    assert np.allclose(record.alpha_tilde[1], [1 / 3, 1 / 3, 1 / 3], atol=1e-15)
    assert np.allclose(record.alpha_tilde[0], [1 / 3, 1 / 3, 0.0], atol=1e-15)


def test_head_attention_shape_errors(rng):
    p = random_head(rng)
    with pytest.raises(ShapeError):
        head_attention(rng.standard_normal((3, 5)), p, None, 4)
    with pytest.raises(ShapeError):
        head_attention(rng.standard_normal((3, 6)), p, make_mask(MaskKind("band", 1), 4), 4)


def test_in_softmax_context_ignores_tokens_outside_mask(rng):
    size = 9
    x = rng.standard_normal((size, 6))
    p = random_head(rng)
    mask = make_mask(MaskKind("band", 1), size)
    base, record = head_attention(x, p, mask, 4, mask_mode=IN_SOFTMAX)
    assert np.allclose(record.alpha_tilde.sum(axis=1), 1.0, atol=1e-12)
    bumped = x.copy()
    bumped[6] += rng.standard_normal(6) * 5
    after, _ = head_attention(bumped, p, mask, 4, mask_mode=IN_SOFTMAX)
    # rows 0..4 do not reach position 6
    assert np.array_equal(after[:5], base[:5])
    assert not np.allclose(after[6], base[6])


def test_in_softmax_record_keeps_full_row_softmax(rng):
    x = rng.standard_normal((5, 6))
    p = random_head(rng)
    mask = make_mask(MaskKind("prev", 1), 5)
    _, restricted = head_attention(x, p, mask, 4, mask_mode=IN_SOFTMAX)
    _, plain = head_attention(x, p, mask, 4)
    assert np.array_equal(restricted.alpha, plain.alpha)
    assert np.allclose(restricted.alpha.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(restricted.alpha_tilde[0] == 0.0)
    assert np.allclose(restricted.alpha_tilde[1:].sum(axis=1), 1.0, atol=1e-12)

    lp = LayerAttentionParams(
        qk=(QKEntry(p.w_q, p.w_k),), w_v=(p.w_v,), w_o=np.eye(4, 6), masks=(MaskKind("prev", 1),),
        mask_mode=IN_SOFTMAX,
    )
    _, records = multi_head_forward(x, lp)
    assert np.array_equal(records[0].alpha, plain.alpha)
    assert np.array_equal(records[0].alpha_tilde, restricted.alpha_tilde)


def test_after_softmax_renormalized_rows_ignore_tokens_outside_mask(rng):
    size = 9
    x = rng.standard_normal((size, 6))
    p = random_head(rng)
    mask = make_mask(MaskKind("band", 1), size)
    _, before = head_attention(x, p, mask, 4)
    bumped = x.copy()
    bumped[6] += 3.0
    _, after = head_attention(bumped, p, mask, 4)
    a, b = renormalize_rows(before.alpha_tilde), renormalize_rows(after.alpha_tilde)
    assert np.allclose(a[:5], b[:5], atol=1e-12)


@pytest.mark.parametrize("size", [5, 64, 300])
@pytest.mark.parametrize("k", [1, 2, 6])
def test_banded_equals_renormalized_masked(size, k):
    rng = make_rng(size * 10 + k)
    x = rng.standard_normal((size, 8))
    p = random_head(rng, d_v=8, d_l=4)
    _, record = head_attention(x, p, make_mask(MaskKind("band", k), size), 4)
    aligned = renormalize_rows(record.alpha_tilde)
    context, alpha_band = banded_attention(x, p, k, 4)
    assert alpha_band.shape == (size, 2 * k + 1)
    assert np.allclose(alpha_band.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(band_to_dense(alpha_band, k), aligned, atol=1e-12)
    assert np.allclose(context, aligned @ (x @ p.w_v), atol=1e-12)


def test_full_band_equals_unmasked(rng):
    x = rng.standard_normal((6, 6))
    p = random_head(rng)
    plain, _ = head_attention(x, p, None, 4)
    context, _ = banded_attention(x, p, 5, 4)
    assert np.allclose(context, plain, atol=1e-12)


def test_banded_rejects_zero_width(rng):
    with pytest.raises(ValueError):
        banded_attention(rng.standard_normal((4, 6)), random_head(rng), 0, 4)


def test_single_head_with_identity_output_projection(rng):
    x = rng.standard_normal((4, 4))
    p = random_head(rng, d_v=4, d_l=4)
    lp = LayerAttentionParams(
        qk=(QKEntry(p.w_q, p.w_k),), w_v=(p.w_v,), w_o=np.eye(4), masks=(None,),
    )
    y, records = multi_head_forward(x, lp)
    context, _ = head_attention(x, p, None, 4)
    assert np.allclose(y, context, atol=1e-15)
    assert len(records) == 1


def test_tied_heads_share_alpha_buffer(rng):
    x = rng.standard_normal((6, 6))
    shared = QKEntry(rng.standard_normal((6, 4)), rng.standard_normal((6, 4)))
    other = QKEntry(rng.standard_normal((6, 4)), rng.standard_normal((6, 4)))
    lp = LayerAttentionParams(
        qk=(shared, shared, shared, other),
        w_v=tuple(rng.standard_normal((6, 4)) for _ in range(4)),
        w_o=rng.standard_normal((16, 6)),
        masks=mask_kinds(["identity", "band2", "prev1", "band2"]),
    )
    _, records = multi_head_forward(x, lp)
    assert records[1].alpha is records[0].alpha
    assert records[2].alpha is records[0].alpha
    assert records[3].alpha is not records[0].alpha
    assert not np.array_equal(records[1].alpha_tilde, records[2].alpha_tilde)


def test_tied_heads_in_softmax_share_alpha_per_mask(rng):
    x = rng.standard_normal((6, 6))
    shared = QKEntry(rng.standard_normal((6, 4)), rng.standard_normal((6, 4)))
    lp = LayerAttentionParams(
        qk=(shared, shared, shared),
        w_v=tuple(rng.standard_normal((6, 4)) for _ in range(3)),
        w_o=rng.standard_normal((12, 6)),
        masks=mask_kinds(["band1", "band1", "band2"]),
        mask_mode=IN_SOFTMAX,
    )
    _, records = multi_head_forward(x, lp)
    assert records[1].alpha is records[0].alpha and records[2].alpha is records[0].alpha
    assert records[1].alpha_tilde is records[0].alpha_tilde
    assert records[2].alpha_tilde is not records[0].alpha_tilde


def test_multi_head_rejects_bad_output_projection(rng):
    p = random_head(rng)
    lp = LayerAttentionParams(qk=(QKEntry(p.w_q, p.w_k),), w_v=(p.w_v,), w_o=np.eye(5), masks=(None,))
    with pytest.raises(ShapeError):
        multi_head_forward(rng.standard_normal((3, 6)), lp)


@pytest.mark.parametrize("name, expected", sorted(PUBLISHED_COUNTS.items()))
def test_published_parameter_counts(name, expected):
    assert count_attention_params(resolve_preset(name)) == expected


def test_fully_tied_count_formula():
    assert count_attention_params(resolve_preset("fully_tied")) == 6_291_456 - 47 * 2 * 512 * 64


@pytest.mark.parametrize("n, text", [
    (6_291_456, "6.29M"), (3_538_944, "3.53M"), (4_915_200, "4.91M"), (3_211_264, "3.21M"), (999, "0.00M"),
])
def test_rounded_millions_truncates(n, text):
    assert rounded_millions(n) == text


@pytest.mark.parametrize("name", ["baseline", "1LocHead_7TiedLoc_All6", "half_tied", "fully_tied", "bert_band6_120tied"])
def test_count_matches_instantiated_store(name):
    cfg = resolve_preset(name, d_v=8, d_l=2, d_ff=4)
    params = init_encoder_params(cfg, make_rng(0))
    assert count_attention_params_from_params(params) == count_attention_params(cfg)
