import json
import math

import numpy as np
import pytest

from src.core.config_files import load_model_config, parse_key_value
from src.core.encoder import (
    LN_EPS,
    EncoderModel,
    add_positions,
    encode,
    encoder_layer_forward,
    feed_forward,
    receptive_field,
)
from src.core.presets import PRESETS, preset_names, resolve_preset
from src.core.tensor import make_rng, sinusoidal_positions
from src.utils.errors import ConfigError
from tests.helpers import small_config


def ln(row):
    mean = sum(row) / len(row)
    var = sum((v - mean) ** 2 for v in row) / len(row)
    return [(v - mean) / math.sqrt(var + LN_EPS) for v in row]


def oracle_layer(x, params, cfg):
    """Post-norm layer with unmasked heads, unit LN gains and zero LN biases"""
    size = x.shape[0]
    contexts = []
    for h in range(cfg.heads):
        g = cfg.group_index()[(0, h)]
        q = x @ params[f"qk/{g}/w_q"]
        k = x @ params[f"qk/{g}/w_k"]
        v = x @ params[f"layer0/head{h}/w_v"]
        ctx = np.zeros((size, cfg.d_l))
        for i in range(size):
            s = [float(q[i] @ k[j]) / math.sqrt(cfg.d_l) for j in range(size)]
            e = [math.exp(t - max(s)) for t in s]
            for j in range(size):
                ctx[i] += e[j] / sum(e) * v[j]
        contexts.append(ctx)
    y = np.hstack(contexts) @ params["layer0/w_o"]
    z = np.array([ln(row) for row in (x + y)])
    hidden = np.maximum(z @ params["layer0/ffn/w1"] + params["layer0/ffn/b1"], 0.0)
    f = hidden @ params["layer0/ffn/w2"] + params["layer0/ffn/b2"]
    return np.array([ln(row) for row in (z + f)])


def test_layer_matches_oracle(rng):
    cfg = small_config(n_layers=1)
    model = EncoderModel.initialize(cfg, make_rng(3))
    x = rng.standard_normal((4, cfg.d_v))
    out = encoder_layer_forward(x, model.layer(0)).output
    assert np.allclose(out, oracle_layer(x, model.params, cfg), atol=1e-12)


def test_degenerate_weights_reduce_to_two_norms(rng):
    cfg = small_config(n_layers=1)
    model = EncoderModel.initialize(cfg, make_rng(3))
    for name in ("layer0/w_o", "layer0/ffn/w1", "layer0/ffn/w2"):
        model.params[name][...] = 0.0
    x = rng.standard_normal((4, cfg.d_v))
    out = encoder_layer_forward(x, model.layer(0)).output
    expected = np.array([ln(ln(row)) for row in x])
    assert np.allclose(out, expected, atol=1e-12)


def test_feed_forward_is_per_token(rng):
    cfg = small_config(n_layers=1)
    lp = EncoderModel.initialize(cfg, make_rng(3)).layer(0)
    x = rng.standard_normal((5, cfg.d_v))
    batch = feed_forward(x, lp)
    for i in range(5):
        assert np.allclose(feed_forward(x[i:i + 1], lp)[0], batch[i], atol=1e-15)


def test_zero_layers_returns_position_encoded_input(rng):
    cfg = small_config(n_layers=0)
    model = EncoderModel.initialize(cfg, make_rng(0))
    embedded = rng.standard_normal((3, cfg.d_v))
    out = encode(embedded, model)
    assert np.array_equal(out.final, embedded + sinusoidal_positions(3, cfg.d_v))
    assert out.records == []


def test_encode_records_every_head(rng):
    cfg = small_config(n_layers=2, heads=3, masks=[["band1", None, "prev1"], [None, "identity", "next2"]])
    model = EncoderModel.initialize(cfg, make_rng(0))
    out = encode(rng.standard_normal((5, cfg.d_v)), model)
    assert len(out.records) == 6
    assert len(out.inputs) == len(out.outputs) == len(out.attention_outputs) == 2
    assert out.record(1, 2).alpha_tilde.shape == (5, 5)
    assert np.array_equal(out.inputs[1], out.outputs[0])
    for r in out.records:
        assert np.allclose(r.alpha.sum(axis=1), 1.0, atol=1e-12)


def test_pre_norm_layer_runs(rng):
    cfg = small_config(norm="pre")
    model = EncoderModel.initialize(cfg, make_rng(0))
    out = encode(rng.standard_normal((4, cfg.d_v)), model)
    assert out.final.shape == (4, cfg.d_v)
    assert np.all(np.isfinite(out.final))


def perturbed_rows(model, embedded, j, rng):
    base = encode(embedded, model).final
    bumped = embedded.copy()
    bumped[j] += rng.standard_normal(embedded.shape[1])
    return base, encode(bumped, model).final


def test_band1_two_layers_receptive_field(rng):
    cfg = small_config(n_layers=2, masks=[["band1", "band1"]] * 2, mask_mode="in_softmax")
    model = EncoderModel.initialize(cfg, make_rng(5))
    size = 9
    embedded = rng.standard_normal((size, cfg.d_v))
    for j in range(size):
        base, after = perturbed_rows(model, embedded, j, rng)
        for i in range(size):
            if abs(i - j) > 2:
                assert np.array_equal(base[i], after[i])
            elif i == j:
                assert not np.array_equal(base[i], after[i])


def test_six_layer_band2_reaches_exactly_twelve(rng):
    cfg = small_config(n_layers=6, masks=[["band2", "band2"]] * 6, mask_mode="in_softmax")
    model = EncoderModel.initialize(cfg, make_rng(11))
    embedded = rng.standard_normal((15, cfg.d_v))
    base, after = perturbed_rows(model, embedded, 13, rng)
    assert np.array_equal(base[0], after[0])
    base, after = perturbed_rows(model, embedded, 12, rng)
    assert not np.array_equal(base[0], after[0])


def test_receptive_field():
    cfg = small_config(n_layers=3, masks=[["band1", "prev2"], ["band2", "identity"], ["next1", "band1"]])
    assert receptive_field(cfg) == ([2, 2, 1], 5)
    assert receptive_field(small_config(masks=[["band1", None], ["band1", "band1"]])) == ([None, 1], None)


def test_config_h_heads_reuse_first_alpha(rng):
    cfg = resolve_preset("2LocHeads_6TiedLoc_All6", d_v=16, d_l=4, d_ff=8)
    model = EncoderModel.initialize(cfg, make_rng(0))
    out = encode(rng.standard_normal((6, 16)), model)
    for layer in range(6):
        first, second = out.record(layer, 0).alpha, out.record(layer, 4).alpha
        for h in (1, 2, 3):
            assert out.record(layer, h).alpha is first
        for h in (5, 6, 7):
            assert out.record(layer, h).alpha is second
        assert first is not second


def test_add_positions(rng):
    e = rng.standard_normal((3, 4))
    assert np.array_equal(add_positions(e), e + sinusoidal_positions(3, 4))


# presets

def test_preset_catalogue():
    assert len(preset_names()) == 20
    baseline = resolve_preset("baseline")
    assert (baseline.n_layers, baseline.heads, baseline.d_v, baseline.d_l) == (6, 8, 512, 64)
    assert len(baseline.tie_groups) == 48
    assert all(m is None for row in baseline.masks for m in row)


def test_full_local_layout():
    cfg = resolve_preset("8LocHeads_All6")
    for row in cfg.masks:
        assert sorted(row) == sorted(["prev1", "prev2", "next1", "next2", "band1", "band2", "identity", "identity"])


def test_two_local_heads():
    cfg = resolve_preset("2LocHeads_All6")
    assert all(row == ["band1", "band2"] + [None] * 6 for row in cfg.masks)


def test_first_and_last_three():
    first, last = resolve_preset("8LocHeads_First3"), resolve_preset("8LocHeads_Last3")
    assert all(m is not None for m in first.masks[0]) and all(m is None for m in first.masks[5])
    assert all(m is None for m in last.masks[0]) and all(m is not None for m in last.masks[5])


def test_tied_presets():
    assert len(resolve_preset("fully_tied").tie_groups) == 1
    half = resolve_preset("half_tied")
    assert len(half.tie_groups) == 1 + 24
    assert len(half.tie_groups[0]) == 24


def test_bert_presets():
    cfg = resolve_preset("bert_band6_132tied")
    assert (cfg.n_layers, cfg.heads, cfg.d_v) == (12, 12, 768)
    assert all(m == "band6" for row in cfg.masks for m in row)
    assert len(cfg.tie_groups[0]) == 132
    assert len(cfg.tie_groups) == 1 + 12
    assert len(resolve_preset("bert_band2_untied").tie_groups) == 144


def test_tiny_presets():
    band2 = resolve_preset("tiny_band2")
    assert (band2.n_layers, band2.heads, band2.d_v, band2.d_l, band2.d_ff) == (2, 4, 64, 16, 128)
    control = resolve_preset("tiny_band1_l1")
    assert control.n_layers == 1 and control.mask_mode == "in_softmax"


def test_unknown_preset_lists_valid_names():
    with pytest.raises(ConfigError, match="fully_tied"):
        resolve_preset("nope")


def test_resolve_preset_overrides_keep_layout():
    cfg = resolve_preset("half_tied", d_v=32, d_l=8, d_ff=16, mask_mode="in_softmax")
    ref = resolve_preset("half_tied")
    assert cfg.masks == ref.masks and cfg.tie_groups == ref.tie_groups
    assert (cfg.d_v, cfg.d_l, cfg.d_ff, cfg.mask_mode) == (32, 8, 16, "in_softmax")


@pytest.mark.parametrize("name", list(PRESETS))
def test_every_preset_is_a_partition(name):
    cfg = resolve_preset(name)
    refs = [ref for group in cfg.tie_groups for ref in group]
    assert sorted(refs) == [(l, h) for l in range(cfg.n_layers) for h in range(cfg.heads)]


# configuration validation and files

def test_tie_groups_must_partition():
    with pytest.raises(ConfigError):
        small_config(tie_groups=[[(0, 0), (0, 1)], [(1, 0)]])
    with pytest.raises(ConfigError):
        small_config(tie_groups=[[(0, 0), (0, 1)], [(0, 1), (1, 0), (1, 1)]])


def test_bad_mask_name_rejected():
    with pytest.raises(ConfigError):
        small_config(masks=[["band1", "wide3"], [None, None]])


def test_key_value_config(tmp_path):
    path = tmp_path / "model.cfg"
    path.write_text(
        "# two layers\n"
        "n_layers = 2\nheads = 2\nd_v = 8\nd_l = 4\nd_ff = 12\n"
        "mask_mode = in_softmax\n"
        "layer.0.masks = band1 -   # second head unmasked\n"
        "tie = 0:0 1:0\n",
        encoding="utf-8",
    )
    cfg = load_model_config(path)
    assert cfg.masks == [["band1", None], [None, None]]
    assert cfg.tie_groups[0] == [(0, 0), (1, 0)]
    assert len(cfg.tie_groups) == 3
    assert cfg.mask_mode == "in_softmax"


def test_key_value_over_preset():
    fields = parse_key_value("preset = tiny_band2\nd_v = 32\n")
    assert fields["preset"] == "tiny_band2" and fields["d_v"] == 32


def test_json_config(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({
        "n_layers": 1, "heads": 2, "d_v": 8, "d_l": 4, "d_ff": 8,
        "masks": [["prev1", None]], "tie_groups": [[[0, 0], [0, 1]]],
    }), encoding="utf-8")
    cfg = load_model_config(path)
    assert cfg.tie_groups == [[(0, 0), (0, 1)]]


@pytest.mark.parametrize("text", ["n_layers 2\n", "colour = blue\n", "n_layers = two\n", "tie = 0-0\n"])
def test_bad_key_value_lines(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_model_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_model_config(tmp_path / "absent.json")


def test_same_shape_ignores_preset_label():
    a = resolve_preset("tiny_band2")
    b = a.model_copy(update={"preset": "renamed"})
    assert a.same_shape(b)
    assert not a.same_shape(resolve_preset("tiny_baseline"))
