"""
Minibatch training loop shared by the SGD fits
"""

import json
import logging
import time
from typing import Callable, Dict, List, Optional, TextIO, Tuple

import numpy as np

from densmat.exceptions import InvalidArgumentError, NumericFailureError
from densmat.models import EpochRecord, OptimizerConfig
from densmat.training.optimizers import Optimizer, first_nonfinite

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]
BatchLoss = Callable[[Params, np.ndarray], Tuple[float, Params]]
Projection = Callable[[Params], Params]


def minimize(
    params: Params,
    batch_loss: BatchLoss,
    n_samples: int,
    config: OptimizerConfig,
    project: Optional[Projection] = None,
    log_sink: Optional[TextIO] = None,
) -> Tuple[Params, List[EpochRecord]]:
    """
    Run `config.epochs` epochs of shuffled minibatch descent

    Args:
        params: Initial parameters (not modified)
        batch_loss: Maps (params, sample indices) to (summed loss, gradients)
        n_samples: Number of training samples
        config: Optimizer configuration; its seed fixes the batch order
        project: Applied to the parameters after every step
        log_sink: Optional text stream receiving one JSON line per epoch

    Returns:
        Tuple of (trained params, per-epoch records with mean loss per sample)

    Raises:
        NumericFailureError: On a non-finite loss or gradient, naming the batch index
    """
    if n_samples < config.batch_size and config.epochs > 0:
        raise InvalidArgumentError(f"{n_samples} samples is fewer than batch size {config.batch_size}")

    params = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    optimizer = Optimizer(config)
    rng = np.random.default_rng(config.seed)
    history: List[EpochRecord] = []
    started = time.perf_counter()

    for epoch in range(config.epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for batch_index, start in enumerate(range(0, n_samples, config.batch_size)):
            idx = order[start:start + config.batch_size]
            loss, grads = batch_loss(params, idx)
            if not np.isfinite(loss):
                logger.error(f"Non-finite loss at epoch {epoch}, batch {batch_index}")
                raise NumericFailureError(
                    "loss is not finite",
                    {"epoch": epoch, "batch": batch_index, "loss": loss},
                )
            bad = first_nonfinite(grads)
            if bad is not None:
                logger.error(f"Non-finite gradient for '{bad}' at epoch {epoch}, batch {batch_index}")
                raise NumericFailureError(
                    "non-finite gradient",
                    {"epoch": epoch, "batch": batch_index, "parameter": bad},
                )
            params = optimizer.step(params, grads)
            if project is not None:
                params = project(params)
            total += loss

        record = EpochRecord(
            epoch=epoch + 1,
            loss=total / n_samples,
            wall_seconds=time.perf_counter() - started,
        )
        history.append(record)
        logger.info(f"Epoch {record.epoch}/{config.epochs}: loss={record.loss:.6g}")
        if log_sink is not None:
            log_sink.write(json.dumps(record.model_dump()) + "\n")
            log_sink.flush()

    return params, history


def smoothed_losses(history: List[EpochRecord], window: int = 5) -> np.ndarray:
    """
    Running median of the epoch losses over `window` epochs
    """
    losses = np.array([h.loss for h in history])
    if losses.size == 0:
        return losses
    return np.array([
        np.median(losses[max(0, i - window + 1):i + 1]) for i in range(losses.size)
    ])
