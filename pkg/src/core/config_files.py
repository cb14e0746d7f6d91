"""
Model configuration files: JSON or the flat key-value grammar.

Key-value grammar, one entry per line, ``#`` starts a comment:

    preset = 8LocHeads_All6          # optional; seeds the config
    n_layers = 2
    heads = 4
    d_v = 64
    d_l = 16
    d_ff = 128
    norm = post
    mask_mode = after_softmax        # or in_softmax
    layer.0.masks = band1 band2 - -  # exactly `heads` names, '-' = unmasked
    tie = 0:0 0:1                    # one tie group per line
    tie = 1:0 1:1 1:2 1:3

Heads not named on any ``tie`` line become singleton groups.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from src.core.presets import resolve_preset
from src.models.schemas import ModelConfig, make_model_config
from src.utils.errors import ConfigError
from src.utils.logger import logger

_INT_KEYS = ("n_layers", "heads", "d_v", "d_l", "d_ff")


def _parse_head_ref(token: str, line_no: int) -> Tuple[int, int]:
    try:
        layer, head = token.split(":")
        return int(layer), int(head)
    except ValueError:
        raise ConfigError(f"line {line_no}: tie entries look like <layer>:<head>, got {token!r}")


def parse_key_value(text: str) -> Dict[str, Any]:
    """
    Parse the flat grammar into ModelConfig fields (masks/tie groups may be partial)

    Args:
        text: File contents

    Returns:
        Dictionary with scalar keys, ``layer_masks`` and ``ties``
    """
    fields: Dict[str, Any] = {"layer_masks": {}, "ties": []}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _INT_KEYS:
            try:
                fields[key] = int(value)
            except ValueError:
                raise ConfigError(f"line {line_no}: {key} must be an integer, got {value!r}")
        elif key in ("preset", "norm", "mask_mode"):
            fields[key] = value
        elif key.startswith("layer.") and key.endswith(".masks"):
            try:
                layer = int(key[len("layer."):-len(".masks")])
            except ValueError:
                raise ConfigError(f"line {line_no}: bad layer index in {key!r}")
            fields["layer_masks"][layer] = [None if name == "-" else name for name in value.split()]
        elif key == "tie":
            fields["ties"].append([_parse_head_ref(tok, line_no) for tok in value.split()])
        else:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
    return fields


def _complete_groups(ties: List[List[Tuple[int, int]]], n_layers: int, heads: int) -> List[List[Tuple[int, int]]]:
    named = {ref for group in ties for ref in group}
    rest = [[(l, h)] for l in range(n_layers) for h in range(heads) if (l, h) not in named]
    return [list(g) for g in ties] + rest


def config_from_fields(fields: Dict[str, Any]) -> ModelConfig:
    """
    Merge parsed fields over an optional preset

    Args:
        fields: Output of parse_key_value or a JSON object

    Returns:
        Validated ModelConfig
    """
    base: Dict[str, Any] = {}
    preset: Optional[str] = fields.get("preset")
    if preset:
        base = resolve_preset(preset).model_dump()
    merged = dict(base)
    for key in _INT_KEYS + ("norm", "mask_mode", "preset"):
        if fields.get(key) is not None:
            merged[key] = fields[key]
    for key in _INT_KEYS:
        if key not in merged:
            raise ConfigError(f"config is missing {key!r}")

    dims_changed = preset and any(
        fields.get(k) is not None and fields[k] != base.get(k) for k in ("n_layers", "heads")
    )
    masks = fields.get("masks")
    if masks is None:
        if dims_changed or not base:
            masks = [[None] * merged["heads"] for _ in range(merged["n_layers"])]
        else:
            masks = [list(row) for row in base["masks"]]
        for layer, row in fields.get("layer_masks", {}).items():
            if not 0 <= layer < merged["n_layers"]:
                raise ConfigError(f"layer.{layer}.masks is outside the model's {merged['n_layers']} layers")
            masks[layer] = row
    merged["masks"] = masks

    groups = fields.get("tie_groups")
    if groups is None:
        ties = fields.get("ties", [])
        if ties or dims_changed or not base:
            groups = _complete_groups(ties, merged["n_layers"], merged["heads"])
        else:
            groups = base["tie_groups"]
    merged["tie_groups"] = groups
    return make_model_config(**merged)


def load_model_config(path: Path) -> ModelConfig:
    """
    Load a JSON or key-value configuration file

    Args:
        path: File path; ``.json`` selects JSON, anything else the flat grammar

    Returns:
        Validated ModelConfig
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            fields = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(fields, dict):
            raise ConfigError(f"{path}: top-level JSON value must be an object")
    else:
        fields = parse_key_value(text)
    cfg = config_from_fields(fields)
    logger.info(f"Loaded model config from {path} ({cfg.n_layers} layers x {cfg.heads} heads)")
    return cfg
