"""Configuration, IRLS aggregation, fusion and the full loop."""

import numpy as np
import pytest

from conftest import texture
from patchstyle import palette, segmentation
from patchstyle.image_core import aggregate_patches, build_pyramid, extract_patches, make_grid
from patchstyle.patch_index import build_database
from patchstyle.synthesis import (
    ConfigError,
    EnergyTrace,
    SynthesisConfig,
    build_indexes,
    energy_first_term,
    fuse_content,
    init_estimate,
    irls_aggregate,
    match_all,
    run_style_transfer,
)

SMALL = SynthesisConfig(l_max=2, patch_sizes=(21, 13, 9), gaps=(18, 8, 5),
                        i_alg=2, db_stride=2)


class TestConfig:
    def test_defaults_valid(self):
        SynthesisConfig().validate()

    def test_default_operating_point(self):
        cfg = SynthesisConfig()
        assert cfg.l_max == 3
        assert cfg.patch_sizes == (33, 21, 13, 9)
        assert cfg.gaps == (28, 18, 8, 5)
        assert cfg.i_alg == 3 and cfg.i_irls == 10
        assert cfg.r == 0.8
        assert cfg.init_noise_sigma == 50.0

    def test_renoise_default_half(self):
        assert SynthesisConfig().effective_renoise_sigma == 25.0
        assert SynthesisConfig(renoise_sigma=7.0).effective_renoise_sigma == 7.0

    @pytest.mark.parametrize("kwargs", [
        {"l_max": 0},
        {"patch_sizes": (9, 13), "gaps": (5, 8)},      # not descending
        {"patch_sizes": (13, 13), "gaps": (8, 8)},     # duplicate
        {"patch_sizes": (13,), "gaps": (8, 5)},        # length mismatch
        {"patch_sizes": (), "gaps": ()},
        {"gaps": (28, 18, 8, 11)},                     # gap > patch size 9
        {"gaps": (28, 18, 8, 0)},
        {"r": 0.0},
        {"r": 2.5},
        {"i_alg": 0},
        {"i_irls": 0},
        {"init_noise_sigma": -1.0},
    ])
    def test_rejects_bad_config(self, kwargs):
        with pytest.raises(ConfigError):
            SynthesisConfig(**kwargs).validate()


class TestInitEstimate:
    def test_sigma_zero_copies(self):
        c = texture(20, 20, 0)
        out = init_estimate(c, 0.0, np.random.default_rng(0))
        assert np.array_equal(out, c)
        assert out is not c

    def test_noise_statistics(self):
        c = np.full((200, 200, 3), 100.0)
        out = init_estimate(c, 50.0, np.random.default_rng(1))
        noise = out - c
        assert abs(noise.std() - 50.0) < 1.0
        assert abs(noise.mean()) < 1.0

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            init_estimate(np.zeros((4, 4, 3)), -1.0, np.random.default_rng(0))


class TestIRLS:
    def _instance(self, seed, n=9, size=48):
        rng = np.random.default_rng(seed)
        db = build_database(texture(size, size, seed + 100), n, stride=2)
        x = rng.uniform(0, 255, (size, size, 3))
        grid = make_grid(size, size, n, n // 2 + 1)
        ms = match_all(x, grid, db, None)
        return x, grid, ms

    def test_r2_equals_closed_form(self):
        x, grid, ms = self._instance(0)
        got = irls_aggregate(x, ms, r=2.0, i_irls=10)
        want, _ = aggregate_patches(grid, ms.patches, np.ones(len(ms)), x.shape)
        assert np.abs(got - want).max() <= 1e-9

    def test_objective_non_increasing(self):
        x, grid, ms = self._instance(1)
        prev = None
        for _ in range(10):
            cur = extract_patches(x, grid.positions, grid.patch_size)
            obj = (np.linalg.norm(cur - ms.patches, axis=1) ** 0.8).sum()
            if prev is not None:
                assert obj <= prev * (1.0 + 1e-9)
            prev = obj
            x = irls_aggregate(x, ms, r=0.8, i_irls=1)

    def test_weights_stored(self):
        x, _, ms = self._instance(2)
        irls_aggregate(x, ms, r=0.8, i_irls=3)
        assert np.all(np.isfinite(ms.irls_weights))
        assert np.all(ms.irls_weights > 0)

    def test_bad_r(self):
        x, _, ms = self._instance(3)
        with pytest.raises(ValueError):
            irls_aggregate(x, ms, r=0.0, i_irls=1)


class TestFuseContent:
    def test_zero_mask_identity(self):
        x = texture(30, 30, 4)
        c = texture(30, 30, 5)
        out = fuse_content(x, c, np.zeros((30, 30)))
        assert np.abs(out - x).max() == 0.0

    def test_huge_weight_pins_to_content(self):
        x = texture(30, 30, 6)
        c = texture(30, 30, 7)
        out = fuse_content(x, c, np.full((30, 30), 1e9))
        assert np.abs(out - c).max() < 1e-6

    def test_formula(self):
        x = np.full((2, 2, 3), 60.0)
        c = np.full((2, 2, 3), 120.0)
        out = fuse_content(x, c, np.full((2, 2), 2.0))
        assert np.allclose(out, (60.0 + 2.0 * 120.0) / 3.0)


class TestEnergy:
    def test_hand_computed(self):
        img = np.zeros((4, 4, 3))
        grid = make_grid(4, 4, 4, 4)  # single patch covering everything
        with pytest.warns(UserWarning):
            db = build_database(np.full((4, 4, 3), 10.0), 4)
        ms = match_all(img, grid, db, None)
        # residual = ||0 - 10|| over 48 entries, coverage = 1 everywhere
        want = (10.0 * np.sqrt(48.0)) ** 0.8
        assert energy_first_term(img, ms, 0.8) == pytest.approx(want, rel=1e-12)

    def test_trace_rejects_non_finite(self):
        trace = EnergyTrace()
        with pytest.raises(ValueError):
            trace.append(1, 9, "match", 1, np.inf)

    def test_trace_csv_round_trip(self, tmp_path):
        trace = EnergyTrace()
        trace.append(2, 33, "match", 1, 123.5)
        trace.append(2, 33, "aggregate", 1, 100.25)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "level,patch_size,stage,iteration,energy"
        assert lines[1] == "2,33,match,1,123.5"
        assert lines[2] == "2,33,aggregate,1,100.25"


@pytest.fixture(scope="module")
def small_run():
    content = texture(120, 120, 8, scales=(3, 20))
    style = texture(120, 120, 9)
    mask = segmentation.edge_mask(content)
    trace = EnergyTrace()
    out = run_style_transfer(content, style, mask, SMALL, trace=trace)
    return content, style, mask, out, trace


class TestRunStyleTransfer:
    def test_output_shape_and_range(self, small_run):
        content, _, _, out, _ = small_run
        assert out.shape == content.shape
        assert out.min() >= 0.0 and out.max() <= 255.0

    def test_trace_block_structure(self, small_run):
        _, _, _, _, trace = small_run
        by_block = {}
        for rec in trace.records:
            by_block.setdefault((rec.level, rec.patch_size, rec.iteration), {})[rec.stage] = rec.energy
        assert len(by_block) == SMALL.l_max * len(SMALL.patch_sizes) * SMALL.i_alg
        for stages in by_block.values():
            assert stages["aggregate"] < stages["match"]
            if "fuse" in stages:
                assert stages["fuse"] >= stages["aggregate"]
            if "palette" in stages:
                assert stages["palette"] >= stages["aggregate"]

    def test_deterministic(self, small_run):
        content, style, mask, out, _ = small_run
        again = run_style_transfer(content, style, mask, SMALL)
        assert out.tobytes() == again.tobytes()

    def test_adopts_style_palette(self, small_run):
        _, style, _, out, _ = small_run
        assert palette.histogram_distance(out, style) < 0.5

    def test_mask_shape_mismatch(self):
        c = texture(64, 64, 10)
        with pytest.raises(ValueError):
            run_style_transfer(c, c, np.zeros((32, 32)),
                               SynthesisConfig(l_max=1, patch_sizes=(9,), gaps=(5,)))

    def test_mask_negative_rejected(self):
        c = texture(64, 64, 11)
        with pytest.raises(ValueError):
            run_style_transfer(c, c, np.full((64, 64), -1.0),
                               SynthesisConfig(l_max=1, patch_sizes=(9,), gaps=(5,)))

    def test_snapshot_stages(self):
        c = texture(64, 64, 12)
        s = texture(64, 64, 13)
        cfg = SynthesisConfig(l_max=1, patch_sizes=(13, 9), gaps=(8, 5), i_alg=1)
        seen = []
        run_style_transfer(c, s, segmentation.constant_mask(64, 64, 1.0), cfg,
                           snapshot_cb=lambda l, n, st, it, img: seen.append((l, n, st, it)))
        assert (1, 13, "match", 1) in seen
        assert (1, 13, "palette", 1) in seen
        # final block's last iteration stops right after aggregation
        assert (1, 9, "aggregate", 1) in seen
        assert (1, 9, "fuse", 1) not in seen
        assert (1, 9, "denoise", 1) not in seen

    def test_prebuilt_indexes_match_internal(self):
        c = texture(72, 72, 14)
        s = texture(72, 72, 15)
        cfg = SynthesisConfig(l_max=1, patch_sizes=(13, 9), gaps=(8, 5),
                              i_alg=1, db_stride=2)
        mask = segmentation.constant_mask(72, 72, 1.0)
        pyr_s = build_pyramid(s, cfg.l_max, min_size=13)
        idx = build_indexes(pyr_s, cfg)
        a = run_style_transfer(c, s, mask, cfg)
        b = run_style_transfer(c, s, mask, cfg, indexes=idx)
        assert a.tobytes() == b.tobytes()

    def test_exact_nn_mode_runs(self):
        c = texture(64, 64, 16)
        s = texture(64, 64, 17)
        cfg = SynthesisConfig(l_max=1, patch_sizes=(9,), gaps=(5,), i_alg=1,
                              db_stride=3, exact_nn=True)
        out = run_style_transfer(c, s, segmentation.constant_mask(64, 64, 0.0), cfg)
        assert out.shape == c.shape
