from .nn import MlpSpec, gelu, glorot_normal_init, init_mlp, mlp_forward, softmax_columns
from .optim import AdamState, adam_step
from .tape import GradientTape, Tensor, backward

__all__ = [
    "AdamState",
    "GradientTape",
    "MlpSpec",
    "Tensor",
    "adam_step",
    "backward",
    "gelu",
    "glorot_normal_init",
    "init_mlp",
    "mlp_forward",
    "softmax_columns",
]
