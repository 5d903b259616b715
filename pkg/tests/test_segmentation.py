"""Structure tensor, coherence and importance masks."""

import numpy as np
import pytest

from conftest import texture
from patchstyle.segmentation import (
    coherence,
    constant_mask,
    edge_mask,
    luminance,
    scale_mask,
    structure_tensor,
)


def disk_image(size=120, radius=35, fg=230.0, bg=20.0):
    yy, xx = np.mgrid[:size, :size]
    inside = (yy - size // 2) ** 2 + (xx - size // 2) ** 2 <= radius ** 2
    img = np.full((size, size, 3), bg)
    img[inside] = fg
    return img, inside


class TestLuminance:
    def test_channel_weights(self):
        img = np.zeros((2, 2, 3))
        img[..., 0] = 100.0
        assert np.allclose(luminance(img), 29.9)
        img[..., 0] = 0.0
        img[..., 1] = 100.0
        assert np.allclose(luminance(img), 58.7)

    def test_gray_passthrough(self):
        img = np.full((4, 4, 3), 123.0)
        assert np.allclose(luminance(img), 123.0)


class TestStructureTensor:
    def test_svd_oracle_interior(self):
        # singular values equal those of the stacked window gradient matrix
        img = texture(48, 48, 0, scales=(2, 6))
        window = 9
        s1, s2 = structure_tensor(img, window)
        luma = luminance(img)
        gy, gx = np.gradient(luma)
        half = window // 2
        rng = np.random.default_rng(1)
        for _ in range(20):
            i = rng.integers(half, 48 - half)
            j = rng.integers(half, 48 - half)
            wy = gy[i - half:i + half + 1, j - half:j + half + 1].ravel()
            wx = gx[i - half:i + half + 1, j - half:j + half + 1].ravel()
            sv = np.linalg.svd(np.stack([wx, wy], axis=1), compute_uv=False)
            assert abs(s1[i, j] - sv[0]) <= 1e-6 * max(1.0, sv[0])
            assert abs(s2[i, j] - sv[1]) <= 1e-6 * max(1.0, sv[0])

    def test_flat_image_zero(self):
        s1, s2 = structure_tensor(np.full((30, 30, 3), 90.0))
        assert s1.max() < 1e-9
        assert s2.max() < 1e-9

    def test_ordering(self):
        s1, s2 = structure_tensor(texture(40, 40, 2))
        assert np.all(s1 >= s2)
        assert np.all(s2 >= 0.0)

    def test_window_validation(self):
        img = texture(20, 20, 3)
        with pytest.raises(ValueError):
            structure_tensor(img, window=4)
        with pytest.raises(ValueError):
            structure_tensor(img, window=1)


class TestCoherence:
    def test_vertical_edge_fully_coherent(self):
        img = np.zeros((40, 40, 3))
        img[:, 20:] = 200.0
        s1, s2 = structure_tensor(img)
        coh = coherence(s1, s2)
        edge_cols = slice(18, 22)
        assert coh[8:-8, edge_cols].min() > 0.95

    def test_range(self):
        s1, s2 = structure_tensor(texture(40, 40, 4))
        coh = coherence(s1, s2)
        assert coh.min() >= 0.0 and coh.max() <= 1.0


class TestEdgeMask:
    def test_disk_interior_and_background(self):
        img, inside = disk_image()
        mask = edge_mask(img)
        marked = mask > 0
        assert marked[inside].mean() >= 0.95
        assert marked[~inside].mean() <= 0.05

    def test_flat_image_all_zero(self):
        mask = edge_mask(np.full((50, 50, 3), 128.0))
        assert mask.shape == (50, 50)
        assert np.all(mask == 0.0)

    def test_fg_weight_value(self):
        img, _ = disk_image()
        mask = edge_mask(img, fg_weight=3.5)
        assert set(np.unique(mask)) <= {0.0, 3.5}
        assert mask.max() == 3.5

    def test_bad_fg_weight(self):
        with pytest.raises(ValueError):
            edge_mask(np.zeros((20, 20, 3)), fg_weight=0.0)


class TestSimpleMasks:
    def test_constant_mask(self):
        m = constant_mask(7, 4, 2.5)
        assert m.shape == (4, 7)
        assert np.all(m == 2.5)

    def test_constant_mask_zero_ok(self):
        assert constant_mask(3, 3, 0.0).max() == 0.0

    def test_constant_mask_negative(self):
        with pytest.raises(ValueError):
            constant_mask(3, 3, -1.0)

    def test_scale_mask(self):
        gray = np.array([[0.0, 127.5, 255.0]])
        assert np.allclose(scale_mask(gray, 10.0), [[0.0, 5.0, 10.0]])
