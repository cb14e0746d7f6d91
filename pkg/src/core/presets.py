"""
Named configurations: the baseline, the local-head layouts (b)-(f), the tied
layouts (g)-(l), the BERT-shaped band variants and desk-scale presets
"""
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from src.core.masks import FULL_LOCAL_LAYOUT
from src.models.schemas import ModelConfig, make_model_config
from src.utils.errors import ConfigError
from src.utils.logger import logger

MaskRow = List[Optional[str]]
Groups = List[List[Tuple[int, int]]]

BASE_DIMS = dict(n_layers=6, heads=8, d_v=512, d_l=64, d_ff=2048)
BERT_DIMS = dict(n_layers=12, heads=12, d_v=768, d_l=64, d_ff=3072)
TINY_DIMS = dict(n_layers=2, heads=4, d_v=64, d_l=16, d_ff=128)

# Published attention-parameter counts (exact integers behind the printed millions)
PUBLISHED_COUNTS: Dict[str, int] = {
    "baseline": 6_291_456,
    "4LocHeads_4TiedLoc_All6": 4_718_592,
    "2LocHeads_6TiedLoc_All6": 3_932_160,
    "1LocHead_7TiedLoc_All6": 3_538_944,
    "1LocHead_7TiedLoc_First3": 4_915_200,
    "half_tied": 4_784_128,
    "fully_tied": 3_211_264,
}


def _singletons(layers: Sequence[int], heads: int) -> Groups:
    return [[(l, h)] for l in layers for h in range(heads)]


def _one_group(layers: Sequence[int], heads: int) -> Groups:
    return [[(l, h) for l in layers for h in range(heads)]]


def _unmasked(heads: int) -> MaskRow:
    return [None] * heads


def _partial(local: Sequence[str], heads: int) -> MaskRow:
    return list(local) + [None] * (heads - len(local))


def _build(dims: dict, masks: List[MaskRow], groups: Groups, name: str) -> ModelConfig:
    return make_model_config(**dims, masks=masks, tie_groups=groups, preset=name)


def _baseline(name: str, dims: dict) -> ModelConfig:
    n, h = dims["n_layers"], dims["heads"]
    return _build(dims, [_unmasked(h) for _ in range(n)], _singletons(range(n), h), name)


def _local_heads(local: Sequence[str], layers: Sequence[int]) -> Callable[[str, dict], ModelConfig]:
    def build(name: str, dims: dict) -> ModelConfig:
        n, h = dims["n_layers"], dims["heads"]
        masks = [_partial(local, h) if l in layers else _unmasked(h) for l in range(n)]
        return _build(dims, masks, _singletons(range(n), h), name)
    return build


def _paired_tied(name: str, dims: dict) -> ModelConfig:
    # config g: heads (0,1), (2,3), ... share W^q/W^k; masks identity, band2 per pair
    n, h = dims["n_layers"], dims["heads"]
    masks = [["identity", "band2"] * (h // 2) for _ in range(n)]
    groups = [[(l, p), (l, p + 1)] for l in range(n) for p in range(0, h, 2)]
    return _build(dims, masks, groups, name)


def _two_groups_tied(name: str, dims: dict) -> ModelConfig:
    # config h: heads 0-3 use head 0's alpha, heads 4-7 use head 4's
    n, h = dims["n_layers"], dims["heads"]
    half = h // 2
    masks = [["identity", "band2", "prev1", "next1"] * 2 for _ in range(n)]
    groups = []
    for l in range(n):
        groups.append([(l, j) for j in range(half)])
        groups.append([(l, j) for j in range(half, h)])
    return _build(dims, masks, groups, name)


def _layer_tied(tied_layers: Sequence[int]) -> Callable[[str, dict], ModelConfig]:
    # configs i and j: one pool entry per local layer
    def build(name: str, dims: dict) -> ModelConfig:
        n, h = dims["n_layers"], dims["heads"]
        masks, groups = [], []
        for l in range(n):
            if l in tied_layers:
                masks.append(list(FULL_LOCAL_LAYOUT))
                groups.append([(l, j) for j in range(h)])
            else:
                masks.append(_unmasked(h))
                groups.extend(_singletons([l], h))
        return _build(dims, masks, groups, name)
    return build


def _cross_layer_tied(tied_layers: Sequence[int]) -> Callable[[str, dict], ModelConfig]:
    # configs k and l: one pool entry across every head of the local layers
    def build(name: str, dims: dict) -> ModelConfig:
        n, h = dims["n_layers"], dims["heads"]
        masks = [list(FULL_LOCAL_LAYOUT) if l in tied_layers else _unmasked(h) for l in range(n)]
        rest = [l for l in range(n) if l not in tied_layers]
        groups = _one_group(tied_layers, h) + _singletons(rest, h)
        return _build(dims, masks, groups, name)
    return build


def _bert(mask: str, tied_layers: Sequence[int]) -> Callable[[str, dict], ModelConfig]:
    def build(name: str, dims: dict) -> ModelConfig:
        n, h = dims["n_layers"], dims["heads"]
        masks = [[mask] * h for _ in range(n)]
        rest = [l for l in range(n) if l not in tied_layers]
        groups = (_one_group(tied_layers, h) if tied_layers else []) + _singletons(rest, h)
        return _build(dims, masks, groups, name)
    return build


def _all_masked(mask: str) -> Callable[[str, dict], ModelConfig]:
    def build(name: str, dims: dict) -> ModelConfig:
        n, h = dims["n_layers"], dims["heads"]
        return _build(dims, [[mask] * h for _ in range(n)], _singletons(range(n), h), name)
    return build


_FIRST3, _LAST3, _ALL6 = (0, 1, 2), (3, 4, 5), tuple(range(6))

PRESETS: Dict[str, Tuple[dict, Callable[[str, dict], ModelConfig]]] = {
    "baseline": (BASE_DIMS, _baseline),
    "2LocHeads_All6": (BASE_DIMS, _local_heads(("band1", "band2"), _ALL6)),
    "4LocHeads_All6": (BASE_DIMS, _local_heads(("band1", "band2", "band1", "band2"), _ALL6)),
    "8LocHeads_First3": (BASE_DIMS, _local_heads(FULL_LOCAL_LAYOUT, _FIRST3)),
    "8LocHeads_Last3": (BASE_DIMS, _local_heads(FULL_LOCAL_LAYOUT, _LAST3)),
    "8LocHeads_All6": (BASE_DIMS, _local_heads(FULL_LOCAL_LAYOUT, _ALL6)),
    "4LocHeads_4TiedLoc_All6": (BASE_DIMS, _paired_tied),
    "2LocHeads_6TiedLoc_All6": (BASE_DIMS, _two_groups_tied),
    "1LocHead_7TiedLoc_All6": (BASE_DIMS, _layer_tied(_ALL6)),
    "1LocHead_7TiedLoc_First3": (BASE_DIMS, _layer_tied(_FIRST3)),
    "half_tied": (BASE_DIMS, _cross_layer_tied(_FIRST3)),
    "fully_tied": (BASE_DIMS, _cross_layer_tied(_ALL6)),
    "bert_band2_untied": (BERT_DIMS, _bert("band2", ())),
    "bert_band6_untied": (BERT_DIMS, _bert("band6", ())),
    "bert_band6_alltied": (BERT_DIMS, _bert("band6", tuple(range(12)))),
    "bert_band6_132tied": (BERT_DIMS, _bert("band6", tuple(range(11)))),
    "bert_band6_120tied": (BERT_DIMS, _bert("band6", tuple(range(10)))),
    "tiny_baseline": (TINY_DIMS, _baseline),
    "tiny_band2": (TINY_DIMS, _all_masked("band2")),
    # negative control: softmax confined to the band so nothing outside it reaches a token
    "tiny_band1_l1": (dict(TINY_DIMS, n_layers=1, mask_mode="in_softmax"), _all_masked("band1")),
}

def preset_names() -> List[str]:
    return list(PRESETS)


def resolve_preset(
    name: str,
    d_v: Optional[int] = None,
    d_l: Optional[int] = None,
    d_ff: Optional[int] = None,
    mask_mode: Optional[str] = None,
) -> ModelConfig:
    """
    Build a named configuration, optionally shrinking its widths while
    keeping the mask and tying layout

    Args:
        name: Preset name
        d_v: Override for the token width
        d_l: Override for the head width
        d_ff: Override for the feed-forward width
        mask_mode: Override for how masks meet the softmax

    Returns:
        ModelConfig labelled with the preset name
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    dims, builder = PRESETS[name]
    dims = dict(dims)
    for key, value in (("d_v", d_v), ("d_l", d_l), ("d_ff", d_ff), ("mask_mode", mask_mode)):
        if value is not None:
            dims[key] = value
    cfg = builder(name, dims)
    logger.debug(f"Resolved preset {name}: {cfg.n_layers} layers x {cfg.heads} heads, {len(cfg.tie_groups)} tie groups")
    return cfg
