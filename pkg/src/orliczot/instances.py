"""Seeded random graphs and measures for tests, verification and benchmarks."""

from __future__ import annotations

import numpy as np

from .graph import Graph
from .measure import DiscreteMeasure


def random_tree(rng: np.random.Generator, n: int, low: float = 0.1, high: float = 2.0, root: int = 0) -> Graph:
    """Random recursive tree with uniform edge lengths in ``[low, high)``."""
    perm = rng.permutation(n)
    edges = []
    for i in range(1, n):
        j = int(rng.integers(i))
        edges.append((int(perm[i]), int(perm[j]), float(rng.uniform(low, high))))
    return Graph.from_edges(n, edges, root=root)


def random_graph(rng: np.random.Generator, n: int, extra: int | None = None, low: float = 0.1,
                 high: float = 2.0, root: int | None = None) -> Graph:
    """Random spanning tree plus ``extra`` random chords (default ``n``)."""
    tree = random_tree(rng, n, low, high)
    extra = n if extra is None else extra
    edges = tree.edges
    for _ in range(extra):
        a, b = rng.integers(n, size=2)
        if a != b:
            edges.append((int(a), int(b), float(rng.uniform(low, high))))
    r = int(rng.integers(n)) if root is None else root
    return Graph.from_edges(n, edges, root=r)


def random_measure(rng: np.random.Generator, n_nodes: int, max_supports: int, min_supports: int = 1,
                   mass_low: float = 0.1, mass_high: float = 1.0) -> DiscreteMeasure:
    k = int(rng.integers(min_supports, max(min_supports, min(max_supports, n_nodes)) + 1))
    nodes = rng.choice(n_nodes, size=k, replace=False)
    return DiscreteMeasure(nodes, rng.uniform(mass_low, mass_high, size=k))


def rescale(m: DiscreteMeasure, total: float) -> DiscreteMeasure:
    return DiscreteMeasure(m.nodes, m.masses * (total / m.total_mass))
