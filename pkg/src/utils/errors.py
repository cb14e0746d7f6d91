"""
Exception hierarchy shared by every module
"""
from typing import List, Sequence, Tuple


class LocalAttentionError(Exception):
    """Base class for all errors raised by this package"""


class ShapeError(LocalAttentionError, ValueError):
    """Operand shapes are inconsistent"""

    def __init__(self, message: str, *shapes: Sequence[int]):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)


class ConfigError(LocalAttentionError, ValueError):
    """Model or preset configuration is invalid"""


class ContractError(LocalAttentionError):
    """An API was called outside its contract"""


class ArtifactError(LocalAttentionError):
    """A checkpoint or artifact is incompatible with the request"""


class DivergenceError(LocalAttentionError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch: int, step: int, loss: float):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}, step {step}")


class CorpusError(LocalAttentionError, ValueError):
    """One or more corpus lines were rejected"""

    def __init__(self, path: str, problems: List[Tuple[int, str]]):
        self.path = path
        self.problems = problems
        lines = "\n".join(f"  line {line_no}: {msg}" for line_no, msg in problems)
        super().__init__(f"{len(problems)} malformed line(s) in {path}:\n{lines}")
