"""Histogram-based color transfer between images.

Per-channel 256-bin CDF matching: each RGB channel of the source is pushed
through a monotone map so its cumulative distribution approximates the
reference's. Used both as a pre-process and inside the synthesis loop.

Float pixels are rounded to bins only for CDF estimation; the map itself
is a continuous piecewise-linear function (forward CDF interpolated
between bin centers, composed with the piecewise-linear inverse reference
CDF), which avoids banding and keeps matching idempotent up to
quantization.
"""

from __future__ import annotations

import numpy as np

BINS = 256
_BIN_CENTERS = np.arange(BINS, dtype=np.float64)


def channel_histogram(channel: np.ndarray) -> np.ndarray:
    """256-bin counts of a channel, clipped to [0, 255].

    Bin u owns the value interval (u-1, u], matching the interval
    convention of the inverse CDF so that repeated matching is stable.
    """
    q = np.clip(np.ceil(channel), 0, 255).astype(np.intp)
    return np.bincount(q.ravel(), minlength=BINS).astype(np.float64)


def _cdf(counts: np.ndarray) -> np.ndarray:
    c = np.cumsum(counts)
    return c / c[-1]


def _inverse_cdf(cdf_ref: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Piecewise-linear inverse of a binned CDF.

    Bin u owns the quantile interval (cdf[u-1], cdf[u]], mapped linearly
    onto the intensity interval (u-1, u]; ties resolve to the lowest
    matching intensity.
    """
    u = np.minimum(np.searchsorted(cdf_ref, q - 1e-12, side="left"), BINS - 1)
    prev = np.where(u > 0, cdf_ref[u - 1], 0.0)
    width = cdf_ref[u] - prev
    safe = np.where(width > 0, width, 1.0)
    frac = np.where(width > 0, (q - prev) / safe, 1.0)
    return np.clip(u - 1.0 + np.clip(frac, 0.0, 1.0), 0.0, 255.0)


def _match_channel(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    cdf_src = _cdf(channel_histogram(src))
    cdf_ref = _cdf(channel_histogram(ref))
    q = np.interp(np.clip(src, 0.0, 255.0), _BIN_CENTERS, cdf_src)
    return _inverse_cdf(cdf_ref, q)


def transfer_map(src_channel: np.ndarray, ref_channel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The monotone intensity map at the occupied source bins.

    Returns (xs, ys) with xs the occupied bins and ys their mapped
    intensities; the full map is the linear interpolation through these.
    """
    h_src = channel_histogram(src_channel)
    cdf_ref = _cdf(channel_histogram(ref_channel))
    xs = np.flatnonzero(h_src).astype(np.float64)
    ys = _inverse_cdf(cdf_ref, _cdf(h_src)[xs.astype(np.intp)])
    return xs, ys


def match_histogram(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Impose ref's per-channel palette on src; output has src's dims."""
    out = np.empty_like(src, dtype=np.float64)
    for ch in range(src.shape[-1]):
        out[..., ch] = _match_channel(src[..., ch], ref[..., ch])
    return out


def histogram_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over channels of the L1 distance between normalized histograms.

    Lies in [0, 2]; 0 for identical palettes, 2 for disjoint ones.
    """
    dists = []
    for ch in range(a.shape[-1]):
        ha = channel_histogram(a[..., ch])
        hb = channel_histogram(b[..., ch])
        dists.append(np.abs(ha / ha.sum() - hb / hb.sum()).sum())
    return float(np.mean(dists))
