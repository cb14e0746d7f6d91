"""
Pydantic models for configuration, reports and run artifacts
"""
from datetime import datetime
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from src.core.masks import parse_mask_name
from src.utils.errors import ConfigError

HeadRef = Tuple[int, int]


class ModelConfig(BaseModel):
    """Full encoder description: dimensions, per-head masks and W^q/W^k tie groups"""
    n_layers: int = Field(..., ge=0, description="Number of encoder layers")
    heads: int = Field(..., ge=1, description="Attention heads per layer")
    d_v: int = Field(..., ge=1, description="Token representation width")
    d_l: int = Field(..., ge=1, description="Per-head projection width")
    d_ff: int = Field(..., ge=1, description="Feed-forward hidden width")
    masks: Optional[List[List[Optional[str]]]] = Field(
        None, description="Layer-major mask names, None for an unmasked head"
    )
    tie_groups: Optional[List[List[HeadRef]]] = Field(
        None, description="Partition of (layer, head) pairs over shared W^q/W^k entries"
    )
    preset: Optional[str] = None
    norm: Literal["post", "pre"] = "post"
    mask_mode: Literal["after_softmax", "in_softmax"] = Field(
        "after_softmax",
        description="after_softmax: mask multiplies the full-row softmax (no renormalization); "
        "in_softmax: softmax is taken over the mask support only",
    )

    @model_validator(mode="after")
    def _fill_and_check(self) -> "ModelConfig":
        if self.masks is None:
            self.masks = [[None] * self.heads for _ in range(self.n_layers)]
        if self.tie_groups is None:
            self.tie_groups = [[(l, h)] for l in range(self.n_layers) for h in range(self.heads)]

        if len(self.masks) != self.n_layers:
            raise ConfigError(f"masks lists {len(self.masks)} layers, config has {self.n_layers}")
        for l, row in enumerate(self.masks):
            if len(row) != self.heads:
                raise ConfigError(f"layer {l} lists {len(row)} masks, config has {self.heads} heads")
            for name in row:
                if name is not None:
                    parse_mask_name(name)

        seen = set()
        for group in self.tie_groups:
            if not group:
                raise ConfigError("empty tie group")
            for ref in group:
                l, h = int(ref[0]), int(ref[1])
                if not (0 <= l < self.n_layers and 0 <= h < self.heads):
                    raise ConfigError(f"tie group references head {(l, h)} outside the model")
                if (l, h) in seen:
                    raise ConfigError(f"head {(l, h)} appears in more than one tie group")
                seen.add((l, h))
        if len(seen) != self.n_layers * self.heads:
            raise ConfigError(
                f"tie groups cover {len(seen)} of {self.n_layers * self.heads} heads; they must partition all heads"
            )
        self.tie_groups = [[(int(l), int(h)) for l, h in group] for group in self.tie_groups]
        return self

    def group_index(self) -> Dict[HeadRef, int]:
        """Map every (layer, head) to the index of its tie group"""
        return {ref: g for g, group in enumerate(self.tie_groups) for ref in group}

    def same_shape(self, other: "ModelConfig") -> bool:
        """True when two configs describe the same architecture (preset label ignored)"""
        mine = self.model_dump(exclude={"preset"})
        theirs = other.model_dump(exclude={"preset"})
        return mine == theirs


def make_model_config(**fields: Any) -> ModelConfig:
    """
    Build a ModelConfig, reporting validation failures as ConfigError

    Args:
        **fields: ModelConfig fields

    Returns:
        Validated ModelConfig
    """
    try:
        return ModelConfig(**fields)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


class TaskSpec(BaseModel):
    """Synthetic token-tagging task"""
    kind: Literal["local_parity", "copy", "first_token_broadcast"]
    seq_len: int = Field(16, ge=2)
    vocab_size: int = Field(2, ge=2)
    n_train: int = Field(2000, ge=0)
    n_test: int = Field(500, ge=0)
    seed: int = 7

    @model_validator(mode="after")
    def _check_vocab(self) -> "TaskSpec":
        if self.kind == "local_parity" and self.vocab_size != 2:
            raise ConfigError("local_parity is defined over binary tokens (vocab_size=2)")
        return self

    @property
    def n_classes(self) -> int:
        return 2 if self.kind == "local_parity" else self.vocab_size

    @property
    def label_rule(self) -> str:
        if self.kind == "local_parity":
            return "label[i] = (tok[i-1] + tok[i] + tok[i+1]) mod 2, zero tokens outside the sequence"
        if self.kind == "copy":
            return "label[i] = tok[i]"
        return "label[i] = tok[0]"


class TrainHyper(BaseModel):
    """Optimizer and loop settings"""
    lr: float = Field(3e-3, gt=0)
    epochs: int = Field(40, ge=1)
    batch_size: int = Field(32, ge=1)
    beta1: float = 0.9
    beta2: float = 0.997
    eps: float = 1e-9


class EpochMetrics(BaseModel):
    epoch: int
    train_acc: float
    test_acc: float
    loss: float


class TrainResult(BaseModel):
    """Outcome of a training run"""
    metrics: List[EpochMetrics] = Field(default_factory=list)
    final_test_acc: Optional[float] = None
    per_position_acc: List[float] = Field(default_factory=list)
    checkpoint_path: Optional[str] = None
    diverged: bool = False
    error: Optional[str] = None


class SentenceRecord(BaseModel):
    """Tokens plus dependency edges"""
    tokens: List[str] = Field(..., min_length=1)
    edges: List[Tuple[int, int]] = Field(default_factory=list)

    @field_validator("edges")
    @classmethod
    def _no_self_edges(cls, edges: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-edge ({a}, {b})")
        return edges

    @model_validator(mode="after")
    def _edges_in_range(self) -> "SentenceRecord":
        n = len(self.tokens)
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) out of range for {n} tokens")
        return self


class SensitivityReport(BaseModel):
    """Sensitivity of one layer: a single sentence (with beta) or a corpus average"""
    layer: int
    beta: Optional[List[List[float]]] = None
    n_sentences: int = 1
    gamma_local: Optional[float] = None
    gamma_syntactic: Optional[float] = None
    gamma_unrelated: Optional[float] = None


class BiasReport(BaseModel):
    """Per-head locality and non-local syntactic bias scores"""
    n_sentences: int
    locality: List[List[Optional[float]]]
    syntactic: List[List[Optional[float]]]
    thresholds: List[float]
    fraction_local: List[float]
    fraction_syntactic: List[float]
    headmap: List[List[str]]
    headmap_threshold: float = 3.0
    use_masked: bool = True


class BenchRow(BaseModel):
    seq_len: int
    k: int
    d_v: int
    d_l: int
    reps: int
    dense_median_s: float
    banded_median_s: float
    speedup: float
    max_deviation: float


class RunManifest(BaseModel):
    """One per artifact directory"""
    command: str
    tool_version: str
    seed: Optional[int] = None
    config: Optional[Dict[str, Any]] = None
    task: Optional[Dict[str, Any]] = None
    inputs: Dict[str, Any] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    status: Literal["running", "complete", "partial", "diverged", "failed"] = "running"
    error: Optional[str] = None
    started_at: datetime = Field(default_factory=datetime.now)
    finished_at: Optional[datetime] = None
