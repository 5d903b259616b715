"""Importance masks over the content image.

Three sources: structure-tensor edge detection with region filling,
a constant weight, or an externally supplied grayscale file. Masks are
(h, w) float64 arrays of nonnegative weights; 0 means "free to
hallucinate", large values pin the output to the content.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import binary_closing, binary_erosion, binary_fill_holes, uniform_filter

COHERENCE_EPS = 1e-6

# Rec.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def luminance(img: np.ndarray) -> np.ndarray:
    return img @ _LUMA


def structure_tensor(img: np.ndarray, window: int = 9) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel singular values (s1 >= s2 >= 0) of the windowed gradient matrix.

    Central-difference gradients of the luma channel are accumulated over a
    window x window neighborhood into the 2x2 Gram matrix; its eigenvalues
    have a closed form, and the singular values are their square roots.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    luma = luminance(img)
    gy, gx = np.gradient(luma)
    scale = float(window * window)
    a = uniform_filter(gx * gx, size=window, mode="reflect") * scale
    b = uniform_filter(gx * gy, size=window, mode="reflect") * scale
    c = uniform_filter(gy * gy, size=window, mode="reflect") * scale
    half_tr = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    lam1 = np.maximum(half_tr + disc, 0.0)
    lam2 = np.maximum(half_tr - disc, 0.0)
    return np.sqrt(lam1), np.sqrt(lam2)


def coherence(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """(s1 - s2) / (s1 + s2 + eps), in [0, 1]; 1 for rank-1 gradient fields."""
    return (s1 - s2) / (s1 + s2 + COHERENCE_EPS)


def edge_mask(
    img: np.ndarray,
    contrast_thresh: float | None = None,
    coherence_thresh: float = 0.4,
    window: int = 9,
    fg_weight: float = 10.0,
) -> np.ndarray:
    """Edge-based segmentation: strong coherent edges, closed and hole-filled.

    contrast_thresh defaults to 0.3 * max(s1) over the image. The filled
    region is eroded by window // 2 to undo the outward smear of the
    windowed gradient response, so region boundaries land on the actual
    edges. An all-zero mask is legal and turns the downstream run into
    pure texture synthesis.
    """
    if fg_weight <= 0:
        raise ValueError("fg_weight must be positive")
    s1, s2 = structure_tensor(img, window)
    if contrast_thresh is None:
        contrast_thresh = 0.3 * float(s1.max())
    edges = (s1 >= contrast_thresh) & (coherence(s1, s2) >= coherence_thresh)
    if not edges.any():
        return np.zeros(img.shape[:2])
    closed = binary_closing(edges, structure=np.ones((5, 5), dtype=bool))
    filled = binary_fill_holes(closed)
    half = window // 2
    if half:
        filled = binary_erosion(filled, structure=np.ones((2 * half + 1,) * 2, dtype=bool))
    return np.where(filled, float(fg_weight), 0.0)


def constant_mask(width: int, height: int, alpha: float) -> np.ndarray:
    """Uniform mask; alpha=0 reduces the run to texture synthesis."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return np.full((height, width), float(alpha))


def scale_mask(gray: np.ndarray, max_weight: float = 10.0) -> np.ndarray:
    """Map 8-bit grayscale values [0, 255] linearly onto [0, max_weight]."""
    return np.asarray(gray, dtype=np.float64) * (max_weight / 255.0)
