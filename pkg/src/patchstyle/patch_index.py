"""Searchable database of style patches: PCA reduction plus an overlapping
cluster tree for fast approximate nearest neighbor, with an exact
brute-force scan kept as the reference oracle.

Raw patches are not materialized: the database keeps the style level and
the dense list of origins, and extracts pixels on demand. Only the
PCA-projected coordinates are stored per patch.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .image_core import extract_patch, extract_patches

DEFAULT_BRANCHING = 4
DEFAULT_LEAF_CAPACITY = 256
DEFAULT_EXPLORE_RATIO = 1.2
_CHUNK = 8192


@dataclass
class PatchDatabase:
    """All stride-`stride` patches of one style pyramid level, one patch size."""

    image: np.ndarray          # style level, (h, w, 3) float64
    patch_size: int
    stride: int
    origins: np.ndarray        # (M, 2) int
    mean: np.ndarray           # (D,) with D = 3 * n^2
    basis: np.ndarray          # (k, D), orthonormal rows
    projected: np.ndarray      # (M, k) float64
    eigenvalues: np.ndarray    # full descending spectrum (for diagnostics)
    energy_fraction: float

    def __len__(self) -> int:
        return len(self.origins)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def reduced_dim(self) -> int:
        return self.basis.shape[0]

    def patch(self, index: int) -> np.ndarray:
        return extract_patch(self.image, tuple(self.origins[index]), self.patch_size)

    def patch_rows(self, indices: np.ndarray) -> np.ndarray:
        return extract_patches(self.image, self.origins[indices], self.patch_size)

    def project(self, vectors: np.ndarray) -> np.ndarray:
        """Map raw patch vectors (P, D) into the reduced space (P, k)."""
        return (np.atleast_2d(vectors) - self.mean) @ self.basis.T


@dataclass
class TreeNode:
    centroid: np.ndarray
    children: list["TreeNode"] = field(default_factory=list)
    members: np.ndarray | None = None  # patch indices, leaves only

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class ClusterTree:
    root: TreeNode
    branching: int
    leaf_capacity: int
    explore_ratio: float

    def leaves(self) -> list[TreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(node.children)
        return out


@dataclass(frozen=True)
class MatchResult:
    """One matched style patch: raw values, its origin, and the reduced-space
    distance used for selection."""

    patch: np.ndarray
    style_origin: tuple[int, int]
    distance: float
    index: int


def _grid_origins(h: int, w: int, n: int, stride: int) -> np.ndarray:
    rows = np.arange(0, h - n + 1, stride)
    cols = np.arange(0, w - n + 1, stride)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Deterministic eigenvector signs: first non-negligible component positive."""
    out = vectors.copy()
    for i in range(out.shape[0]):
        nz = np.flatnonzero(np.abs(out[i]) > 1e-12)
        if len(nz) and out[i, nz[0]] < 0:
            out[i] = -out[i]
    return out


def build_database(
    style_level: np.ndarray,
    n: int,
    energy_fraction: float = 0.95,
    stride: int = 1,
) -> PatchDatabase:
    """Extract all patches of size n at the given stride and fit the PCA.

    The reduced dimension k is the smallest retaining `energy_fraction` of
    the total eigenvalue mass. Degenerate (constant) styles fall back to a
    single fixed axis with a warning.
    """
    h, w = style_level.shape[:2]
    if h < n or w < n:
        raise ValueError(f"style level {w}x{h} smaller than patch size {n}")
    if not 0.0 < energy_fraction <= 1.0:
        raise ValueError("energy_fraction must be in (0, 1]")
    origins = _grid_origins(h, w, n, stride)
    m = len(origins)
    d = 3 * n * n

    # accumulate first/second moments chunk-wise to bound memory
    s1 = np.zeros(d)
    if m < d:
        data = extract_patches(style_level, origins, n).astype(np.float64)
        mean = data.mean(axis=0)
        centered = data - mean
        gram = centered @ centered.T / m
        lam, u = np.linalg.eigh(gram)
        order = np.argsort(lam)[::-1]
        lam = np.maximum(lam[order], 0.0)
        u = u[:, order]
        nonzero = lam > 1e-12 * max(lam[0], 1.0)
        vecs = (centered.T @ u[:, nonzero]) / np.sqrt(m * lam[nonzero])
        vecs = vecs.T  # rows are eigenvectors
        eigenvalues = lam
    else:
        s2 = np.zeros((d, d))
        for start in range(0, m, _CHUNK):
            chunk = extract_patches(style_level, origins[start : start + _CHUNK], n)
            chunk = chunk.astype(np.float64)
            s1 += chunk.sum(axis=0)
            s2 += chunk.T @ chunk
        mean = s1 / m
        cov = s2 / m - np.outer(mean, mean)
        lam, v = np.linalg.eigh(cov)
        order = np.argsort(lam)[::-1]
        eigenvalues = np.maximum(lam[order], 0.0)
        vecs = v[:, order].T

    total = eigenvalues.sum()
    if total <= 1e-9:
        warnings.warn("degenerate (constant) style patches; using a fixed 1-D projection")
        basis = np.zeros((1, d))
        basis[0, 0] = 1.0
        eigenvalues = np.zeros(1)
    else:
        cum = np.cumsum(eigenvalues) / total
        k = int(np.searchsorted(cum, energy_fraction - 1e-12) + 1)
        k = min(k, len(vecs))
        basis = _fix_signs(np.asarray(vecs[:k]))

    projected = np.empty((m, basis.shape[0]), dtype=np.float64)
    for start in range(0, m, _CHUNK):
        chunk = extract_patches(style_level, origins[start : start + _CHUNK], n)
        projected[start : start + _CHUNK] = (chunk - mean) @ basis.T

    return PatchDatabase(
        image=np.asarray(style_level, dtype=np.float64),
        patch_size=n,
        stride=stride,
        origins=origins,
        mean=mean,
        basis=basis,
        projected=projected,
        eigenvalues=eigenvalues,
        energy_fraction=energy_fraction,
    )


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, iters: int = 25):
    """Plain Lloyd iterations with deterministic seeding; returns (centroids, labels)."""
    m = len(points)
    pick = rng.choice(m, size=k, replace=False)
    centroids = points[np.sort(pick)].astype(np.float64)
    labels = np.full(m, -1, dtype=np.intp)
    for _ in range(iters):
        d2 = _sq_dists(points, centroids)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            sel = points[labels == j]
            if len(sel):
                centroids[j] = sel.mean(axis=0)
    return centroids, labels


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of a (P,k) and b (Q,k)."""
    aa = (a.astype(np.float64) ** 2).sum(axis=1)[:, None]
    bb = (b.astype(np.float64) ** 2).sum(axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (a.astype(np.float64) @ b.T.astype(np.float64)), 0.0)


def build_tree(
    db: PatchDatabase,
    branching: int = DEFAULT_BRANCHING,
    leaf_capacity: int = DEFAULT_LEAF_CAPACITY,
    overlap_fraction: float = 0.5,
    explore_ratio: float = DEFAULT_EXPLORE_RATIO,
    seed: int = 0,
) -> ClusterTree:
    """Recursive k-means tree over the projected patches with overlapping children.

    After the hard assignment at each node, points additionally join any
    cluster whose centroid is within explore_ratio of their primary
    centroid distance, capped at overlap_fraction of the node size.
    """
    if branching < 2:
        raise ValueError("branching must be >= 2")
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    points = db.projected
    rng = np.random.default_rng(seed)

    def build(indices: np.ndarray, depth: int) -> TreeNode:
        sub = points[indices].astype(np.float64)
        centroid = sub.mean(axis=0)
        if len(indices) <= leaf_capacity or depth > 40:
            return TreeNode(centroid=centroid, members=indices)
        k = min(branching, len(indices))
        centroids, labels = _kmeans(sub, k, rng)
        d2 = _sq_dists(sub, centroids)
        primary = d2.min(axis=1)
        # overlap: extra memberships where centroid distance <= ratio * primary
        ratio2 = explore_ratio * explore_ratio
        extra_mask = (d2 <= ratio2 * np.maximum(primary[:, None], 1e-30)) & \
            (d2 > primary[:, None])
        cap = int(overlap_fraction * len(indices))
        if extra_mask.sum() > cap:
            pts, cls = np.nonzero(extra_mask)
            margins = d2[pts, cls] / np.maximum(primary[pts], 1e-30)
            keep = np.argsort(margins, kind="stable")[:cap]
            extra_mask = np.zeros_like(extra_mask)
            extra_mask[pts[keep], cls[keep]] = True
        member_of = extra_mask.copy()
        member_of[np.arange(len(indices)), labels] = True
        sizes = member_of.sum(axis=0)
        if sizes.max() >= len(indices):  # no progress (e.g. identical points)
            return TreeNode(centroid=centroid, members=indices)
        children = []
        for j in range(k):
            sel = indices[member_of[:, j]]
            if len(sel):
                children.append(build(sel, depth + 1))
        return TreeNode(centroid=centroid, children=children)

    root = build(np.arange(len(db), dtype=np.intp), 0)
    return ClusterTree(root=root, branching=branching, leaf_capacity=leaf_capacity,
                       explore_ratio=explore_ratio)


def _candidate_indices(tree: ClusterTree, q: np.ndarray) -> np.ndarray:
    """Greedy descent visiting every child within explore_ratio of the best."""
    ratio2 = tree.explore_ratio ** 2
    stack = [tree.root]
    hit: list[np.ndarray] = []
    while stack:
        node = stack.pop()
        if node.is_leaf:
            hit.append(node.members)
            continue
        d2 = np.array([((q - ch.centroid) ** 2).sum() for ch in node.children])
        best = d2.min()
        for ch, dd in zip(node.children, d2):
            if dd <= ratio2 * best + 1e-30:
                stack.append(ch)
    return np.unique(np.concatenate(hit))


def query_nn(db: PatchDatabase, tree: ClusterTree, query: np.ndarray) -> MatchResult:
    """Approximate NN: tree descent in the reduced space, raw patch returned."""
    q = db.project(query)[0]
    cand = _candidate_indices(tree, q)
    d2 = ((db.projected[cand].astype(np.float64) - q) ** 2).sum(axis=1)
    pos = int(d2.argmin())
    idx = int(cand[pos])
    return MatchResult(
        patch=db.patch(idx),
        style_origin=tuple(int(v) for v in db.origins[idx]),
        distance=float(np.sqrt(d2[pos])),
        index=idx,
    )


def query_nn_batch(db: PatchDatabase, tree: ClusterTree, queries: np.ndarray):
    """Vectorized projection, per-query tree walk; returns (indices, distances)."""
    qs = db.project(queries)
    indices = np.empty(len(qs), dtype=np.intp)
    dists = np.empty(len(qs))
    proj = db.projected
    for i, q in enumerate(qs):
        cand = _candidate_indices(tree, q)
        d2 = ((proj[cand].astype(np.float64) - q) ** 2).sum(axis=1)
        pos = int(d2.argmin())
        indices[i] = cand[pos]
        dists[i] = np.sqrt(d2[pos])
    return indices, dists


def brute_force_nn(db: PatchDatabase, query: np.ndarray) -> MatchResult:
    """Exact full-dimensional L2 argmin over every patch; ties -> lowest index."""
    best_d2 = np.inf
    best_idx = -1
    for start in range(0, len(db), _CHUNK):
        rows = db.patch_rows(np.arange(start, min(start + _CHUNK, len(db))))
        d2 = ((rows - query) ** 2).sum(axis=1)
        pos = int(d2.argmin())
        if d2[pos] < best_d2:
            best_d2 = float(d2[pos])
            best_idx = start + pos
    return MatchResult(
        patch=db.patch(best_idx),
        style_origin=tuple(int(v) for v in db.origins[best_idx]),
        distance=float(np.sqrt(best_d2)),
        index=best_idx,
    )


def brute_force_nn_batch(db: PatchDatabase, queries: np.ndarray):
    """Exact NN for many queries at once; returns (indices, distances)."""
    q = np.atleast_2d(queries).astype(np.float64)
    best_d2 = np.full(len(q), np.inf)
    best_idx = np.zeros(len(q), dtype=np.intp)
    qq = (q ** 2).sum(axis=1)
    for start in range(0, len(db), _CHUNK):
        rows = db.patch_rows(np.arange(start, min(start + _CHUNK, len(db))))
        d2 = qq[:, None] + (rows ** 2).sum(axis=1)[None, :] - 2.0 * (q @ rows.T)
        pos = d2.argmin(axis=1)
        val = d2[np.arange(len(q)), pos]
        better = val < best_d2
        best_d2[better] = val[better]
        best_idx[better] = start + pos[better]
    return best_idx, np.sqrt(np.maximum(best_d2, 0.0))
