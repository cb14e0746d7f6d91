"""
Dependency-annotated corpora (JSON Lines) and their mapping to model inputs
"""
import json
import zlib
from pathlib import Path
from typing import List, Sequence

import numpy as np
from pydantic import ValidationError

from src.models.schemas import SentenceRecord
from src.utils.errors import CorpusError
from src.utils.logger import logger


def load_corpus(path: Path) -> List[SentenceRecord]:
    """
    Load one sentence per line: {"tokens": [...], "edges": [[a, b], ...]}.
    Blank lines are skipped; extra keys are ignored.

    Args:
        path: JSONL file

    Returns:
        Validated sentences in file order
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(str(path), [(0, "file not found")])
    records: List[SentenceRecord] = []
    problems = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(SentenceRecord(**json.loads(line)))
            except json.JSONDecodeError as e:
                problems.append((line_no, f"invalid JSON: {e.msg}"))
            except ValidationError as e:
                problems.append((line_no, "; ".join(err["msg"] for err in e.errors())))
            except TypeError:
                problems.append((line_no, "each line must be a JSON object"))
    if problems:
        logger.error(f"Rejected {len(problems)} line(s) of {path}")
        raise CorpusError(str(path), problems)
    logger.info(f"Loaded {len(records)} sentences from {path}")
    return records


def token_ids(tokens: Sequence[str], vocab_size: int) -> np.ndarray:
    """
    Map tokens into a model vocabulary: integer strings keep their value
    (mod vocab_size), anything else hashes with CRC-32

    Args:
        tokens: Sentence tokens
        vocab_size: Model vocabulary size

    Returns:
        (T,) int64 ids
    """
    ids = []
    for tok in tokens:
        if tok.isascii() and tok.isdigit():
            ids.append(int(tok) % vocab_size)
        else:
            ids.append(zlib.crc32(tok.encode("utf-8")) % vocab_size)
    return np.asarray(ids, dtype=np.int64)


def sample_sentences(corpus: Sequence[SentenceRecord], cap: int, seed: int) -> List[SentenceRecord]:
    """Deterministic subset of at most ``cap`` sentences, kept in corpus order"""
    if cap < 0 or len(corpus) <= cap:
        return list(corpus)
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = np.sort(rng.choice(len(corpus), size=cap, replace=False))
    return [corpus[i] for i in picks]
