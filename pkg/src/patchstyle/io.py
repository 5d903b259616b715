"""PNG/JPEG image I/O and resizing at the program boundary.

Everything internal is float64 in [0, 255]; 8-bit conversion happens only
here.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

from .segmentation import scale_mask


class ImageIOError(IOError):
    pass


def _open(path) -> Image.Image:
    try:
        return Image.open(path)
    except FileNotFoundError as exc:
        raise ImageIOError(f"cannot read {path}: file not found") from exc
    except OSError as exc:
        raise ImageIOError(f"cannot decode {path}: {exc}") from exc


def load_image(path, resize: int | None = None, keep_aspect: bool = False) -> np.ndarray:
    """Decode an 8-bit RGB image to float64 (h, w, 3).

    With `resize`, the image is scaled to resize x resize (aspect-distorting
    by default; keep_aspect letter-boxes onto a black canvas instead).
    """
    img = _open(path).convert("RGB")
    if resize is not None and img.size != (resize, resize):
        if keep_aspect:
            scale = resize / max(img.size)
            new_size = (max(1, round(img.width * scale)),
                        max(1, round(img.height * scale)))
            img = img.resize(new_size, Image.BILINEAR)
            canvas = Image.new("RGB", (resize, resize))
            canvas.paste(img, ((resize - img.width) // 2, (resize - img.height) // 2))
            img = canvas
        else:
            img = img.resize((resize, resize), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64)


def load_mask(path, dims: tuple[int, int], max_weight: float = 10.0) -> np.ndarray:
    """Read an 8-bit grayscale mask file and scale to [0, max_weight].

    dims is (height, width) of the content it must match; a mismatch is an
    error rather than a silent resize.
    """
    img = _open(path).convert("L")
    gray = np.asarray(img, dtype=np.float64)
    if gray.shape != dims:
        raise ImageIOError(
            f"mask {path} is {gray.shape[1]}x{gray.shape[0]}, "
            f"content is {dims[1]}x{dims[0]}"
        )
    return scale_mask(gray, max_weight)


def save_image(path, img: np.ndarray) -> None:
    """Write a float image as 8-bit PNG/JPEG (by extension)."""
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(data).save(path)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
