"""
Binary attention masks: prev-k, next-k, band-k and identity
"""
import re
from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Set

import numpy as np
import numpy.typing as npt

from src.core.tensor import check_square
from src.utils.errors import ConfigError, ShapeError
from src.utils.logger import logger

Kind = Literal["prev", "next", "band", "identity"]

_NAME_RE = re.compile(r"^(prev|next|band)(\d+)$")

# Layout of a layer whose heads are all local: every mask once, identity twice
FULL_LOCAL_LAYOUT = ("prev1", "prev2", "next1", "next2", "band1", "band2", "identity", "identity")


@dataclass(frozen=True)
class MaskKind:
    kind: Kind
    k: int = 0

    def __post_init__(self):
        if self.kind == "identity":
            object.__setattr__(self, "k", 0)
        elif self.k < 1:
            raise ConfigError(f"{self.kind} masks need k >= 1, got {self.k}")

    @property
    def name(self) -> str:
        return "identity" if self.kind == "identity" else f"{self.kind}{self.k}"


@dataclass(frozen=True)
class Mask:
    kind: MaskKind
    size: int
    bits: npt.NDArray[np.float64] = field(repr=False)

    def __post_init__(self):
        check_square(self.bits, self.size, "mask")

    def support(self) -> List[Set[int]]:
        return [set(np.flatnonzero(row).tolist()) for row in self.bits]


def parse_mask_name(name: str) -> MaskKind:
    """
    Parse a config-file mask name ("prev1", "band6", "identity")

    Args:
        name: Lowercase name without hyphen

    Returns:
        MaskKind
    """
    if name == "identity":
        return MaskKind("identity")
    match = _NAME_RE.match(name)
    if not match:
        raise ConfigError(
            f"unknown mask name {name!r}; expected prev<k>, next<k>, band<k> or identity"
        )
    return MaskKind(match.group(1), int(match.group(2)))


def make_mask(kind: MaskKind, size: int) -> Mask:
    """
    Build the T x T 0/1 matrix for a mask kind

    prev-k marks (i, i-k): the token k positions before. next-k marks (i, i+k).
    band-k marks every |i - j| <= k. Rows may be all zero.

    Args:
        kind: Mask kind and offset
        size: Sequence length T

    Returns:
        Mask with read-only float64 bits
    """
    if size < 1:
        raise ValueError(f"mask size must be >= 1, got {size}")
    i = np.arange(size)[:, None]
    j = np.arange(size)[None, :]
    if kind.kind == "prev":
        bits = (i - j) == kind.k
    elif kind.kind == "next":
        bits = (j - i) == kind.k
    elif kind.kind == "band":
        bits = np.abs(i - j) <= kind.k
    else:
        bits = i == j
    if kind.kind in ("prev", "next") and kind.k >= size:
        logger.warning(f"{kind.name} mask on T={size} is all zeros")
    bits = np.ascontiguousarray(bits, dtype=np.float64)
    bits.setflags(write=False)
    return Mask(kind=kind, size=size, bits=bits)


def union_support(masks: Sequence[Mask]) -> List[Set[int]]:
    """
    Per-row union of mask supports

    Args:
        masks: Masks sharing one size

    Returns:
        One index set per row
    """
    if not masks:
        return []
    size = masks[0].size
    for m in masks:
        if m.size != size:
            raise ShapeError("masks differ in size", (size, size), (m.size, m.size))
    combined = np.zeros((size, size), dtype=bool)
    for m in masks:
        combined |= m.bits > 0
    return [set(np.flatnonzero(row).tolist()) for row in combined]


def max_distance(kind: MaskKind) -> int:
    """Largest |i - j| a mask lets through"""
    return kind.k
