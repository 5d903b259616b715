"""Dense image primitives: Gaussian pyramids, patch extraction/aggregation, sample grids.

Images are numpy float64 arrays, shape (h, w, 3) for color and (h, w) for
single-channel weight maps. Pixel values live nominally in [0, 255];
intermediate results of the optimization are allowed to leave that range.

Patch vectors are channel-major: all red values (row-major), then green,
then blue, giving a 3*n*n vector for an n x n patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import correlate1d


class CoverageError(ValueError):
    """A grid/patch-size combination leaves pixels uncovered."""


class PyramidError(ValueError):
    """Requested pyramid is incompatible with the image size."""


# 5-tap binomial kernel (Burt-Adelson construction).
_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class SampleGrid:
    """Decimated grid of patch origins covering an image.

    Origins step by `gap` along each axis; the last origin per axis is
    snapped to dim - patch_size so patches touch the border.
    """

    rows: np.ndarray
    cols: np.ndarray
    patch_size: int
    gap: int
    width: int
    height: int

    def __len__(self) -> int:
        return len(self.rows) * len(self.cols)

    @property
    def positions(self) -> np.ndarray:
        """All (row, col) origins, row-major, shape (P, 2)."""
        rr, cc = np.meshgrid(self.rows, self.cols, indexing="ij")
        return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _axis_origins(dim: int, n: int, d: int) -> np.ndarray:
    last = dim - n
    origins = list(range(0, last + 1, d))
    if origins[-1] != last:
        origins.append(last)
    return np.asarray(origins, dtype=np.intp)


def make_grid(width: int, height: int, patch_size: int, gap: int) -> SampleGrid:
    """Build the sampling grid of patch origins for a width x height image."""
    n, d = int(patch_size), int(gap)
    if n > min(width, height):
        raise CoverageError(f"patch size {n} exceeds image dims {width}x{height}")
    if d < 1 or d > n:
        raise CoverageError(f"gap {d} must satisfy 1 <= gap <= patch size {n}")
    return SampleGrid(
        rows=_axis_origins(height, n, d),
        cols=_axis_origins(width, n, d),
        patch_size=n,
        gap=d,
        width=width,
        height=height,
    )


def _lowpass(img: np.ndarray) -> np.ndarray:
    out = correlate1d(img, _BINOMIAL5, axis=0, mode="reflect")
    out = correlate1d(out, _BINOMIAL5, axis=1, mode="reflect")
    return out


def downscale2(img: np.ndarray) -> np.ndarray:
    """Gaussian low-pass then 2x decimation; odd dims round up."""
    return _lowpass(img)[::2, ::2]


def build_pyramid(img: np.ndarray, l_max: int, min_size: int = 33) -> list[np.ndarray]:
    """Gaussian pyramid, index 0 = native resolution, each next level halved.

    Raises PyramidError if any level would drop below min_size on either
    axis (min_size defaults to the largest stock patch size).
    """
    if l_max < 1:
        raise PyramidError("l_max must be >= 1")
    h, w = img.shape[:2]
    top_h = -(-h // 2 ** (l_max - 1))
    top_w = -(-w // 2 ** (l_max - 1))
    if min(top_h, top_w) < min_size:
        raise PyramidError(
            f"coarsest level {top_w}x{top_h} below minimum {min_size} "
            f"(image {w}x{h}, l_max={l_max})"
        )
    levels = [np.asarray(img, dtype=np.float64)]
    for _ in range(l_max - 1):
        levels.append(downscale2(levels[-1]))
    return levels


def _interp_axis(img: np.ndarray, target: int, axis: int) -> np.ndarray:
    src = img.shape[axis]
    if target == src:
        return img
    if src == 1:
        reps = [1] * img.ndim
        reps[axis] = target
        return np.tile(img, reps)
    # corner-aligned mapping keeps border pixels and the identity exact
    pos = np.linspace(0.0, src - 1.0, target)
    lo = np.floor(pos).astype(np.intp)
    lo = np.minimum(lo, src - 2)
    frac = pos - lo
    a = np.take(img, lo, axis=axis)
    b = np.take(img, lo + 1, axis=axis)
    shape = [1] * img.ndim
    shape[axis] = target
    f = frac.reshape(shape)
    return a * (1.0 - f) + b * f


def upscale(img: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear upscale to exactly target_w x target_h, clamped to [0, 255]."""
    h, w = img.shape[:2]
    if target_w < w or target_h < h:
        raise ValueError("upscale target must be >= source dims")
    out = _interp_axis(img, target_h, axis=0)
    out = _interp_axis(out, target_w, axis=1)
    return np.clip(out, 0.0, 255.0)


def extract_patch(img: np.ndarray, origin: tuple[int, int], n: int) -> np.ndarray:
    """Extract one n x n patch as a channel-major 3*n*n vector."""
    r, c = origin
    h, w = img.shape[:2]
    if r < 0 or c < 0 or r + n > h or c + n > w:
        raise IndexError(f"patch origin {origin} size {n} outside {w}x{h} image")
    return img[r : r + n, c : c + n].transpose(2, 0, 1).ravel().copy()


def extract_patches(img: np.ndarray, positions: np.ndarray, n: int) -> np.ndarray:
    """Extract many patches at once; rows are channel-major vectors, (P, 3*n*n)."""
    win = sliding_window_view(img, (n, n), axis=(0, 1))  # (H-n+1, W-n+1, 3, n, n)
    sel = win[positions[:, 0], positions[:, 1]]
    return sel.reshape(len(positions), -1)


def patch_to_block(vec: np.ndarray, n: int) -> np.ndarray:
    """Channel-major vector back to an (n, n, 3) pixel block."""
    return vec.reshape(3, n, n).transpose(1, 2, 0)


def place_patch(img: np.ndarray, vec: np.ndarray, origin: tuple[int, int], n: int) -> None:
    r, c = origin
    img[r : r + n, c : c + n] = patch_to_block(vec, n)


def coverage_counts(grid: SampleGrid) -> np.ndarray:
    """Unit-weight coverage: number of grid patches covering each pixel."""
    cov = np.zeros((grid.height, grid.width))
    n = grid.patch_size
    for r in grid.rows:
        for c in grid.cols:
            cov[r : r + n, c : c + n] += 1.0
    return cov


def aggregate_patches(
    grid: SampleGrid,
    patches: np.ndarray,
    weights: np.ndarray,
    out_shape: tuple[int, ...],
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted overlap-average of patches into a full image.

    Each output pixel is sum(w * patch values) / sum(w) over covering
    patches; since R^T R is diagonal this realizes the exact weighted
    least-squares aggregation. Returns (image, coverage map).
    """
    positions = grid.positions
    if len(patches) != len(positions) or len(weights) != len(positions):
        raise ValueError("need one patch and one weight per grid position")
    weights = np.asarray(weights, dtype=np.float64)
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise ValueError("weights must be finite and nonnegative")
    n = grid.patch_size
    acc = np.zeros(out_shape)
    cov = np.zeros(out_shape[:2])
    blocks = patches.reshape(len(positions), 3, n, n).transpose(0, 2, 3, 1)
    for (r, c), block, w in zip(positions, blocks, weights):
        acc[r : r + n, c : c + n] += w * block
        cov[r : r + n, c : c + n] += w
    if np.any(cov <= 0.0):
        raise CoverageError("zero total coverage at some pixel (gap > patch size?)")
    return acc / cov[..., None], cov
