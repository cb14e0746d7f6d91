"""
Token relation sets: local window L, non-local syntactic S, unrelated U
"""
from dataclasses import dataclass
from typing import FrozenSet, List, Sequence, Tuple

from src.utils.errors import ContractError

Edge = Tuple[int, int]


@dataclass(frozen=True)
class TokenSets:
    i: int
    local: FrozenSet[int]
    syntactic: FrozenSet[int]
    unrelated: FrozenSet[int]


def token_sets(i: int, size: int, edges: Sequence[Edge], window: int = 2) -> TokenSets:
    """
    Partition [0, size) from the point of view of token ``i``

    Args:
        i: Position
        size: Sentence length T
        edges: Dependency edges, treated as undirected
        window: Half-width of the local set

    Returns:
        TokenSets with L = [i - window, i + window] clipped, S = neighbours of i
        outside L, U = the rest
    """
    if not 0 <= i < size:
        raise ContractError(f"position {i} outside a sentence of length {size}")
    local = frozenset(range(max(0, i - window), min(size - 1, i + window) + 1))
    neighbours = {b for a, b in edges if a == i} | {a for a, b in edges if b == i}
    syntactic = frozenset(neighbours - local)
    unrelated = frozenset(set(range(size)) - local - syntactic)
    return TokenSets(i=i, local=local, syntactic=syntactic, unrelated=unrelated)


def sentence_sets(size: int, edges: Sequence[Edge], window: int = 2) -> List[TokenSets]:
    return [token_sets(i, size, edges, window) for i in range(size)]
