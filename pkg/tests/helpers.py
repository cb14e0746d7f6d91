"""
Small models shared by the test modules
"""
import numpy as np

from src.core.tensor import make_rng
from src.models.schemas import make_model_config
from src.training.model import TokenClassifier


def small_config(n_layers=2, heads=2, d_v=8, d_l=4, d_ff=12, masks=None, tie_groups=None,
                 norm="post", mask_mode="after_softmax"):
    return make_model_config(
        n_layers=n_layers, heads=heads, d_v=d_v, d_l=d_l, d_ff=d_ff,
        masks=masks, tie_groups=tie_groups, norm=norm, mask_mode=mask_mode,
    )


def small_classifier(cfg, vocab_size=5, n_classes=3, seed=0):
    return TokenClassifier.initialize(cfg, vocab_size, n_classes, make_rng(seed))


def zero_params(model, keep=()):
    """Copy of ``model`` with every array zeroed except the names in ``keep``"""
    return model.with_params({
        name: (arr if name in keep else np.zeros_like(arr)) for name, arr in model.params.items()
    })
