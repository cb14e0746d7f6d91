"""
Token classifier: embedding table, encoder and a per-token linear head
"""
from typing import Dict

import numpy as np

from src.core.encoder import EncoderModel, EncoderOutput, encode, init_encoder_params
from src.core.tensor import Matrix, Rng, glorot_scale, matmul, seeded_uniform_init
from src.models.schemas import ModelConfig
from src.training.autodiff import cross_entropy_value


class TokenClassifier:
    """Encoder plus embedding and output head sharing one parameter store"""

    def __init__(self, config: ModelConfig, vocab_size: int, n_classes: int, params: Dict[str, Matrix]):
        self.config = config
        self.vocab_size = vocab_size
        self.n_classes = n_classes
        self.params = params
        self.encoder = EncoderModel(config, params)

    @classmethod
    def initialize(cls, config: ModelConfig, vocab_size: int, n_classes: int, rng: Rng) -> "TokenClassifier":
        params = init_encoder_params(config, rng)
        params["embed/tokens"] = seeded_uniform_init(vocab_size, config.d_v, 1.0, rng)
        params["head/w"] = seeded_uniform_init(config.d_v, n_classes, glorot_scale(config.d_v, n_classes), rng)
        params["head/b"] = np.zeros(n_classes)
        return cls(config, vocab_size, n_classes, params)

    def with_params(self, params: Dict[str, Matrix]) -> "TokenClassifier":
        return TokenClassifier(self.config, self.vocab_size, self.n_classes, params)

    def embed(self, ids: np.ndarray) -> Matrix:
        return self.params["embed/tokens"][np.asarray(ids, dtype=np.int64)]

    def run(self, ids: np.ndarray) -> EncoderOutput:
        return encode(self.embed(ids), self.encoder)

    def logits(self, ids: np.ndarray) -> Matrix:
        return matmul(self.run(ids).final, self.params["head/w"]) + self.params["head/b"]

    def predict(self, ids: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(ids), axis=-1)

    def loss(self, ids: np.ndarray, labels: np.ndarray) -> float:
        return float(cross_entropy_value(self.logits(ids), labels))
