import numpy as np
import pytest

from densmat.datasets import gen_mixture_1d
from densmat.training import finite_diff_check

GRAD_TOLERANCE = 1e-4
# coordinates smaller than this (absolute, or relative to the largest gradient) are skipped
GRAD_TINY = 1e-7
GRAD_RELATIVE_FLOOR = 1e-5


@pytest.fixture
def mixture_small():
    return gen_mixture_1d(300, seed=1)


@pytest.fixture
def blobs():
    """Three well separated 2-D Gaussian blobs, labels 1..3"""
    rng = np.random.default_rng(5)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    labels = np.repeat([1, 2, 3], 40)
    X = centers[labels - 1] + 0.3 * rng.standard_normal((labels.size, 2))
    return X, labels


@pytest.fixture
def check_gradients():
    def run(loss_fn, params, tolerance=GRAD_TOLERANCE):
        reports = finite_diff_check(loss_fn, params, h=1e-5, threshold=tolerance)
        largest = max(abs(r.analytic) for r in reports)
        floor = max(GRAD_TINY, GRAD_RELATIVE_FLOOR * largest)
        checked = [r for r in reports if abs(r.analytic) + abs(r.numeric) >= floor]
        assert checked, "no coordinate was large enough to check"
        worst = max(checked, key=lambda r: r.rel_error)
        assert worst.rel_error < tolerance, worst
        return reports

    return run
