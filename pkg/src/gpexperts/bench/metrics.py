from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError
from ..gp import gaussian_nlpd

__all__ = ["rmse", "mean_nlpd"]


def rmse(predictions, targets) -> float:
    """Root mean squared error."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.size == 0 or p.shape != t.shape:
        raise InvalidArgumentError("rmse needs two non-empty sequences of equal length")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mean_nlpd(mean, variance, targets) -> float:
    return float(np.mean(gaussian_nlpd(mean, variance, targets)))
