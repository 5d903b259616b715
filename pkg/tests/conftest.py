"""Shared helpers for the test suite."""

import numpy as np
from scipy.ndimage import gaussian_filter


def texture(h, w, seed, scales=(4, 12, 30)):
    """Smooth multi-scale random texture, float64, full [0, 255] range."""
    rng = np.random.default_rng(seed)
    img = np.zeros((h, w, 3))
    for s in scales:
        img += gaussian_filter(rng.normal(0.0, 1.0, (h, w, 3)), (s, s, 0)) * s
    img -= img.min()
    img *= 255.0 / img.max()
    return img
