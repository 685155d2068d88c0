"""
Central-difference verification of hand-derived gradients
"""

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from densmat.exceptions import NumericFailureError
from densmat.models import GradientReport

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]
LossFn = Callable[[Params], Tuple[float, Params]]


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-12, abs(analytic) + abs(numeric))


def finite_diff_check(
    loss_fn: LossFn,
    params: Params,
    h: float = 1e-5,
    threshold: float = 1e-4,
    max_coords: int = 1000,
    seed: int = 0,
) -> List[GradientReport]:
    """
    Compare analytic gradients against central differences

    Args:
        loss_fn: Maps params to (loss, gradients)
        params: Point at which to check
        h: Step of the central difference
        threshold: rel_error above which a coordinate is flagged
        max_coords: Above this many coordinates a random sample is checked
        seed: Seed of the coordinate sample

    Returns:
        One GradientReport per checked coordinate
    """
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericFailureError("loss is not finite at the check point", {"loss": loss})

    coords = [(name, idx) for name, p in params.items() for idx in np.ndindex(*p.shape)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(picked)]

    reports = []
    for name, idx in coords:
        shifted = {k: v.copy() for k, v in params.items()}
        shifted[name][idx] = params[name][idx] + h
        up, _ = loss_fn(shifted)
        shifted[name][idx] = params[name][idx] - h
        down, _ = loss_fn(shifted)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericFailureError("loss is not finite near the check point", {"parameter": name})
        numeric = (up - down) / (2.0 * h)
        analytic = float(grads[name][idx])
        err = relative_error(analytic, numeric)
        reports.append(
            GradientReport(
                parameter=name,
                index=[int(i) for i in idx],
                analytic=analytic,
                numeric=float(numeric),
                rel_error=err,
                flagged=err > threshold,
            )
        )

    flagged = sum(r.flagged for r in reports)
    if flagged:
        logger.warning(f"Gradient check flagged {flagged}/{len(reports)} coordinates")
    return reports


def max_relative_error(reports: List[GradientReport], parameter: Optional[str] = None) -> float:
    errors = [r.rel_error for r in reports if parameter is None or r.parameter == parameter]
    return max(errors) if errors else 0.0
