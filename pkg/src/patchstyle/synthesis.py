"""The complete style-transfer loop: coarse-to-fine scale sweep, descending
patch-size sweep, and per-iteration match -> robust aggregation -> content
fusion -> palette transfer -> denoise, with optional energy tracing and
snapshot capture.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import palette
from .denoise import domain_transform_filter
from .image_core import (
    SampleGrid,
    aggregate_patches,
    build_pyramid,
    coverage_counts,
    extract_patches,
    make_grid,
    upscale,
)
from .patch_index import (
    ClusterTree,
    PatchDatabase,
    brute_force_nn_batch,
    build_database,
    build_tree,
    query_nn_batch,
)

STAGES = ("match", "aggregate", "fuse", "palette", "denoise")


class ConfigError(ValueError):
    """Invalid synthesis configuration."""


@dataclass(frozen=True)
class SynthesisConfig:
    l_max: int = 3
    patch_sizes: tuple[int, ...] = (33, 21, 13, 9)
    gaps: tuple[int, ...] = (28, 18, 8, 5)
    i_alg: int = 3
    i_irls: int = 10
    r: float = 0.8
    init_noise_sigma: float = 50.0
    renoise_sigma: float | None = None  # None -> half of init_noise_sigma
    seed: int = 0
    skip_final_fusion: bool = True
    irls_epsilon: float = 1e-6
    denoise_sigma_s: float = 5.0
    denoise_sigma_r: float = 30.0
    denoise_passes: int = 3
    palette_in_loop: bool = True
    energy_fraction: float = 0.95
    db_stride: int = 1
    tree_branching: int = 4
    tree_leaf_capacity: int = 256
    tree_explore_ratio: float = 1.2
    exact_nn: bool = False

    def validate(self) -> None:
        if self.l_max < 1:
            raise ConfigError("l_max must be >= 1")
        if len(self.patch_sizes) != len(self.gaps):
            raise ConfigError("patch_sizes and gaps must have equal length")
        if not self.patch_sizes:
            raise ConfigError("need at least one patch size")
        if list(self.patch_sizes) != sorted(set(self.patch_sizes), reverse=True):
            raise ConfigError("patch_sizes must be strictly descending")
        for n, d in zip(self.patch_sizes, self.gaps):
            if not 1 <= d <= n:
                raise ConfigError(f"gap {d} must satisfy 1 <= gap <= patch size {n}")
        if not 0.0 < self.r <= 2.0:
            raise ConfigError("robust power r must be in (0, 2]")
        if self.i_alg < 1 or self.i_irls < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.init_noise_sigma < 0:
            raise ConfigError("init_noise_sigma must be >= 0")

    @property
    def effective_renoise_sigma(self) -> float:
        if self.renoise_sigma is None:
            return self.init_noise_sigma / 2.0
        return self.renoise_sigma


@dataclass
class MatchSet:
    """Matches for one (level, patch size, iteration): the grid, matched style
    patches (rows, channel-major), their origins, and the IRLS weights."""

    grid: SampleGrid
    patches: np.ndarray        # (P, 3*n^2)
    style_indices: np.ndarray  # (P,)
    distances: np.ndarray      # (P,) reduced- or full-space selection distance
    irls_weights: np.ndarray   # (P,) finite, > 0

    def __len__(self) -> int:
        return len(self.patches)


@dataclass(frozen=True)
class EnergyRecord:
    level: int
    patch_size: int
    stage: str
    iteration: int
    energy: float


@dataclass
class EnergyTrace:
    records: list[EnergyRecord] = field(default_factory=list)

    def append(self, level: int, patch_size: int, stage: str, iteration: int,
               energy: float) -> None:
        if not np.isfinite(energy):
            raise ValueError("trace energies must be finite")
        self.records.append(EnergyRecord(level, patch_size, stage, iteration, energy))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "patch_size", "stage", "iteration", "energy"])
            for rec in self.records:
                writer.writerow([rec.level, rec.patch_size, rec.stage,
                                 rec.iteration, f"{rec.energy:.9g}"])


def init_estimate(content_level: np.ndarray, sigma: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Content plus i.i.d. Gaussian noise; intentionally left unclamped."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return content_level.copy()
    return content_level + rng.normal(0.0, sigma, size=content_level.shape)


def match_all(x: np.ndarray, grid: SampleGrid, db: PatchDatabase,
              tree: ClusterTree | None) -> MatchSet:
    """Nearest style patch for every grid position of the current estimate.

    Tree search when a tree is given, exact brute force otherwise. Initial
    IRLS weights are 1.
    """
    queries = extract_patches(x, grid.positions, grid.patch_size)
    if tree is None:
        indices, dists = brute_force_nn_batch(db, queries)
    else:
        indices, dists = query_nn_batch(db, tree, queries)
    return MatchSet(
        grid=grid,
        patches=db.patch_rows(indices),
        style_indices=indices,
        distances=dists,
        irls_weights=np.ones(len(indices)),
    )


def irls_aggregate(x0: np.ndarray, ms: MatchSet, r: float, i_irls: int,
                   epsilon: float = 1e-6) -> np.ndarray:
    """Minimize sum ||R x - z||^r over the grid by reweighted aggregation.

    Each iteration recomputes w = max(||R x - z||, eps)^(r-2) and solves the
    weighted L2 aggregation exactly; the r-power objective is non-increasing.
    At r = 2 the very first aggregation is already the exact solution.
    """
    if not 0.0 < r <= 2.0:
        raise ValueError("r must be in (0, 2]")
    x = x0
    weights = ms.irls_weights
    for _ in range(i_irls):
        cur = extract_patches(x, ms.grid.positions, ms.grid.patch_size)
        residuals = np.linalg.norm(cur - ms.patches, axis=1)
        weights = np.maximum(residuals, epsilon) ** (r - 2.0)
        x, _cov = aggregate_patches(ms.grid, ms.patches, weights, x0.shape)
    ms.irls_weights = weights
    return x


def fuse_content(x_tilde: np.ndarray, content_level: np.ndarray,
                 mask_level: np.ndarray) -> np.ndarray:
    """Per-pixel merge (x + w*c) / (1 + w); exact since the system is diagonal."""
    w = mask_level[..., None]
    return (x_tilde + w * content_level) / (1.0 + w)


def energy_first_term(x: np.ndarray, ms: MatchSet, r: float,
                      coverage_norm: float | None = None) -> float:
    """(1/c) * sum ||R x - z||^r with c the mean patch overlap per pixel."""
    if coverage_norm is None:
        coverage_norm = float(coverage_counts(ms.grid).mean())
    cur = extract_patches(x, ms.grid.positions, ms.grid.patch_size)
    residuals = np.linalg.norm(cur - ms.patches, axis=1)
    return float((residuals ** r).sum() / coverage_norm)


def build_indexes(style_pyramid: list[np.ndarray], cfg: SynthesisConfig,
                  ) -> dict[tuple[int, int], tuple[PatchDatabase, ClusterTree | None]]:
    """One (database, tree) per (level, patch size); trees omitted in exact mode."""
    indexes = {}
    for level, style_level in enumerate(style_pyramid, start=1):
        for n in cfg.patch_sizes:
            db = build_database(style_level, n, cfg.energy_fraction, cfg.db_stride)
            tree = None
            if not cfg.exact_nn:
                tree = build_tree(
                    db,
                    branching=cfg.tree_branching,
                    leaf_capacity=cfg.tree_leaf_capacity,
                    explore_ratio=cfg.tree_explore_ratio,
                    seed=(cfg.seed * 1_000_003 + level * 101 + n) & 0x7FFFFFFF,
                )
            indexes[(level, n)] = (db, tree)
    return indexes


def run_style_transfer(
    content: np.ndarray,
    style: np.ndarray,
    mask: np.ndarray,
    cfg: SynthesisConfig,
    indexes=None,
    trace: EnergyTrace | None = None,
    snapshot_cb=None,
) -> np.ndarray:
    """Full multi-scale style transfer; returns the output image in [0, 255].

    `indexes` may carry prebuilt (db, tree) pairs keyed by (level, patch
    size), e.g. from the on-disk cache. `snapshot_cb(level, n, stage,
    iteration, image)` is invoked after every stage when given.
    """
    cfg.validate()
    if mask.shape != content.shape[:2]:
        raise ValueError("mask dims must match content dims")
    if np.any(mask < 0) or not np.all(np.isfinite(mask)):
        raise ValueError("mask must be finite and nonnegative")
    n_max = max(cfg.patch_sizes)

    content = palette.match_histogram(content, style)
    pyr_c = build_pyramid(content, cfg.l_max, min_size=n_max)
    pyr_s = build_pyramid(style, cfg.l_max, min_size=n_max)
    pyr_w = [np.maximum(lvl, 0.0) for lvl in build_pyramid(mask, cfg.l_max, min_size=n_max)]
    if indexes is None:
        indexes = build_indexes(pyr_s, cfg)

    rng = np.random.default_rng(cfg.seed)
    smallest = cfg.patch_sizes[-1]
    x = None

    for level in range(cfg.l_max, 0, -1):
        c_level = pyr_c[level - 1]
        s_level = pyr_s[level - 1]
        w_level = pyr_w[level - 1]
        h, w = c_level.shape[:2]
        if x is None:
            x = init_estimate(c_level, cfg.init_noise_sigma, rng)
        else:
            x = upscale(x, w, h)
            x = x + rng.normal(0.0, cfg.effective_renoise_sigma, size=x.shape)

        for n, d in zip(cfg.patch_sizes, cfg.gaps):
            grid = make_grid(w, h, n, d)
            db, tree = indexes[(level, n)]
            cov_norm = float(coverage_counts(grid).mean())
            final_block = cfg.skip_final_fusion and level == 1 and n == smallest

            for it in range(1, cfg.i_alg + 1):
                ms = match_all(x, grid, db, tree)

                def record(stage: str) -> None:
                    if trace is not None:
                        trace.append(level, n, stage, it,
                                     energy_first_term(x, ms, cfg.r, cov_norm))
                    if snapshot_cb is not None:
                        snapshot_cb(level, n, stage, it, x)

                record("match")
                x = irls_aggregate(x, ms, cfg.r, cfg.i_irls, cfg.irls_epsilon)
                record("aggregate")
                if final_block:
                    # last pass keeps the raw aggregation result so content
                    # regions also receive the delicate texture
                    if it == cfg.i_alg:
                        continue
                else:
                    x = fuse_content(x, c_level, w_level)
                    record("fuse")
                    if cfg.palette_in_loop:
                        x = palette.match_histogram(x, s_level)
                        record("palette")
                x = domain_transform_filter(x, cfg.denoise_sigma_s,
                                            cfg.denoise_sigma_r, cfg.denoise_passes)
                record("denoise")

    return np.clip(x, 0.0, 255.0)
