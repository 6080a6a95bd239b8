"""Quintic smoothstep used for every cutoff transition."""
from __future__ import annotations

import numpy as np


def smoothstep(s):
    """``10 s^3 - 15 s^4 + 6 s^5`` clamped to ``[0, 1]``; C2 with flat ends."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)
