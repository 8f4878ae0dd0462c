"""Small shared helpers."""
import math

import numpy as np


def exact_mean(values) -> float:
    """Correctly rounded mean: order-independent, so reductions are
    bit-reproducible under any scheduling or relabeling."""
    arr = np.asarray(values, dtype=float)
    return math.fsum(arr.tolist()) / arr.size


def exact_mean_columns(matrix) -> np.ndarray:
    """Column-wise exact means of a (rows, cols) array."""
    m = np.asarray(matrix, dtype=float)
    return np.array([exact_mean(m[:, k]) for k in range(m.shape[1])])
