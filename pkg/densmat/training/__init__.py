from .optimizers import AdamState, Optimizer, adam_step, clip_by_global_norm, sgd_step
from .gradcheck import finite_diff_check, max_relative_error, relative_error
from .loop import minimize, smoothed_losses

__all__ = [
    "AdamState",
    "Optimizer",
    "adam_step",
    "clip_by_global_norm",
    "sgd_step",
    "finite_diff_check",
    "max_relative_error",
    "relative_error",
    "minimize",
    "smoothed_losses",
]
