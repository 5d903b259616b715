"""On-disk cache of patch databases and cluster trees.

One binary file per (style hash, level, patch size, build parameters),
version-tagged; stale or unreadable entries are silently rebuilt.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np

from .patch_index import ClusterTree, PatchDatabase

MAGIC = b"PSIDX"
VERSION = 1


def _flatten_tree(tree: ClusterTree):
    nodes = []

    def walk(node) -> int:
        idx = len(nodes)
        nodes.append({"centroid": node.centroid, "members": node.members,
                      "children": []})
        for child in node.children:
            nodes[idx]["children"].append(walk(child))
        return idx

    walk(tree.root)
    return {"nodes": nodes, "branching": tree.branching,
            "leaf_capacity": tree.leaf_capacity,
            "explore_ratio": tree.explore_ratio}


def _rebuild_tree(blob) -> ClusterTree:
    from .patch_index import TreeNode

    nodes = blob["nodes"]

    def build(idx: int) -> TreeNode:
        raw = nodes[idx]
        return TreeNode(centroid=raw["centroid"],
                        children=[build(c) for c in raw["children"]],
                        members=raw["members"])

    return ClusterTree(root=build(0), branching=blob["branching"],
                       leaf_capacity=blob["leaf_capacity"],
                       explore_ratio=blob["explore_ratio"])


def cache_path(cache_dir, style_hash: str, level: int, n: int, stride: int) -> Path:
    return Path(cache_dir) / f"{style_hash[:16]}_L{level}_n{n}_s{stride}.idx"


def save_index(path, db: PatchDatabase, tree: ClusterTree | None) -> None:
    payload = {
        "magic": MAGIC,
        "version": VERSION,
        "image": db.image,
        "patch_size": db.patch_size,
        "stride": db.stride,
        "origins": db.origins,
        "mean": db.mean,
        "basis": db.basis,
        "projected": db.projected,
        "eigenvalues": db.eigenvalues,
        "energy_fraction": db.energy_fraction,
        "tree": _flatten_tree(tree) if tree is not None else None,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(path).with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)


def load_index(path) -> tuple[PatchDatabase, ClusterTree | None] | None:
    """Returns the cached pair, or None when missing/stale/corrupt."""
    try:
        with open(path, "rb") as fh:
            payload = pickle.load(fh)
    except (OSError, pickle.UnpicklingError, EOFError):
        return None
    if not isinstance(payload, dict) or payload.get("magic") != MAGIC \
            or payload.get("version") != VERSION:
        return None
    db = PatchDatabase(
        image=payload["image"],
        patch_size=payload["patch_size"],
        stride=payload["stride"],
        origins=payload["origins"],
        mean=payload["mean"],
        basis=payload["basis"],
        projected=payload["projected"],
        eigenvalues=payload["eigenvalues"],
        energy_fraction=payload["energy_fraction"],
    )
    tree = _rebuild_tree(payload["tree"]) if payload["tree"] is not None else None
    return db, tree
