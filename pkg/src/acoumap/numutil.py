"""Small numeric helpers used across modules."""

from __future__ import annotations

import numpy as np


def round_half_away_from_zero(x):
    """Round to the nearest integer, ties away from zero.

    Works on scalars and arrays; returns the same float kind as numpy's
    floor/ceil so callers cast to int themselves.
    """
    x = np.asarray(x)
    return np.where(x >= 0.0, np.floor(x + 0.5), np.ceil(x - 0.5))
