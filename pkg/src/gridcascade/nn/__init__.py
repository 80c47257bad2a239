from .layers import AttentionOutput, masked_attention, masked_cross_entropy, one_hot, pre_ln_encoder_layer
from .optim import AdamHyper, AdamState, optimizer_step
from .tensor import Tensor

__all__ = [
    "AdamHyper",
    "AdamState",
    "AttentionOutput",
    "Tensor",
    "masked_attention",
    "masked_cross_entropy",
    "one_hot",
    "optimizer_step",
    "pre_ln_encoder_layer",
]
