"""
First-order optimizers over dictionaries of numpy parameter arrays
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from densmat.exceptions import InvalidArgumentError, NumericFailureError
from densmat.models import OptimizerConfig

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


@dataclass
class AdamState:
    """
    Moment estimates and step counter of an Adam run
    """
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)


def first_nonfinite(grads: Params) -> Optional[str]:
    """
    Name of the first gradient holding a NaN or infinity, or None
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            return name
    return None


def _check_finite(grads: Params) -> None:
    name = first_nonfinite(grads)
    if name is not None:
        raise NumericFailureError("non-finite gradient", {"parameter": name})


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> Tuple[Params, AdamState]:
    """
    One bias-corrected Adam update

    Args:
        params: Parameter arrays by name
        grads: Gradients with the same names and shapes
        state: Moment estimates from the previous step

    Returns:
        Tuple of (new params, new state); inputs are not modified
    """
    _check_finite(grads)
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t

    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise InvalidArgumentError(f"gradient shape {g.shape} != parameter shape {p.shape} for '{name}'")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + epsilon)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(t=t, m=new_m, v=new_v)


def sgd_step(params: Params, grads: Params, lr: float) -> Params:
    """
    Plain gradient-descent update
    """
    _check_finite(grads)
    return {name: p - lr * grads[name] for name, p in params.items()}


def clip_by_global_norm(grads: Params, max_norm: Optional[float]) -> Tuple[Params, float]:
    """
    Rescale gradients so their joint L2 norm is at most max_norm

    Returns:
        Tuple of (clipped gradients, norm before clipping)
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}, norm


class Optimizer:
    """
    Stateful wrapper that applies the configured update rule
    """

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.state = AdamState()

    def step(self, params: Params, grads: Params) -> Params:
        # clipping would turn an infinite gradient into NaNs
        _check_finite(grads)
        grads, _ = clip_by_global_norm(grads, self.config.clip_norm)
        if self.config.kind == "adam":
            params, self.state = adam_step(
                params,
                grads,
                self.state,
                lr=self.config.learning_rate,
                beta1=self.config.beta1,
                beta2=self.config.beta2,
                epsilon=self.config.epsilon,
            )
            return params
        return sgd_step(params, grads, self.config.learning_rate)
