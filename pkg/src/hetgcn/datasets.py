"""Synthetic stand-ins for the citation and image benchmark graphs.

Only size, edge density and feature width follow the real datasets; the
edges come from a community model (80% of edges inside communities of
about 200 vertices) and the vertex ids are shuffled, so the graphs need
reordering just like the originals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matcore import CsrMatrix
from .reorder import Permutation, apply_permutation, gen_sbm

COMMUNITY_SIZE = 200
INTRA_FRACTION = 0.8


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    nodes: int
    density: float  # nnz / nodes^2 of the adjacency
    features: int
    classes: int


DATASETS = {
    "cora": DatasetSpec("cora", 2708, 0.0014, 1433, 7),
    "citeseer": DatasetSpec("citeseer", 3327, 0.0008, 3703, 6),
    "pubmed": DatasetSpec("pubmed", 19717, 0.00023, 500, 3),
    "flickr": DatasetSpec("flickr", 89250, 0.00011, 500, 7),
}


def community_probabilities(spec: DatasetSpec, community_size: int = COMMUNITY_SIZE,
                            intra: float = INTRA_FRACTION) -> tuple[int, float, float]:
    """(communities, p_in, p_out) giving the target density with ``intra`` of the edges inside."""
    n = spec.nodes
    k = max(1, round(n / community_size))
    entries = spec.density * n * n
    sizes = np.full(k, n // k)
    sizes[-1] += n - sizes.sum()
    inside = float(np.sum(sizes * (sizes - 1)))
    outside = float(n * n - np.sum(sizes * sizes))
    p_in = min(1.0, intra * entries / inside)
    p_out = min(p_in, (1 - intra) * entries / outside) if outside > 0 else 0.0
    return k, p_in, p_out


def synthetic_graph(spec: DatasetSpec, seed: int = 0) -> CsrMatrix:
    """Shuffled community graph with the dataset's size and density (no self loops)."""
    k, p_in, p_out = community_probabilities(spec)
    a = gen_sbm(spec.nodes, k, p_in, p_out, seed)
    return apply_permutation(a, Permutation.random(spec.nodes, seed + 1))


def synthetic_features(spec: DatasetSpec, seed: int = 0, density: float = 0.05) -> np.ndarray:
    """Sparse-ish nonnegative features, stored dense."""
    rng = np.random.default_rng(seed)
    x = rng.random((spec.nodes, spec.features), dtype=np.float32)
    x[x > density] = 0.0
    return x / max(density, 1e-12)


def describe(spec: DatasetSpec) -> dict:
    k, p_in, p_out = community_probabilities(spec)
    return {"name": spec.name, "nodes": spec.nodes, "density": spec.density, "features": spec.features,
            "classes": spec.classes, "communities": k, "p_in": p_in, "p_out": p_out,
            "expected_nnz": int(math.floor(spec.density * spec.nodes ** 2))}
