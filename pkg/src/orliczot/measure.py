"""Nonnegative measures supported on graph nodes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError, ParameterError, StructuralError
from .graph import ShortestPathTree

__all__ = [
    "SHAT",
    "DiscreteMeasure",
    "AugmentedMeasure",
    "edge_aggregates",
    "active_edges",
    "difference_aggregates",
    "augment",
    "shannon_entropy",
    "read_measure",
    "write_measure",
]

# Node id of the dummy point added outside the graph.
SHAT = -1


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Masses on graph nodes, sorted by node id.

    Duplicate node ids are merged by summing, zero masses are dropped.
    """

    nodes: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        masses = np.asarray(self.masses, dtype=np.float64).reshape(-1)
        if len(nodes) != len(masses):
            raise ParameterError("nodes and masses have different lengths")
        if np.any(~np.isfinite(masses)) or np.any(masses < 0):
            raise ParameterError("masses must be finite and nonnegative")
        if len(nodes) and nodes.min() < 0:
            raise StructuralError(f"negative node id {nodes.min()}")
        uniq, inv = np.unique(nodes, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, masses)
        keep = merged > 0
        uniq, merged = uniq[keep], merged[keep]
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, "nodes", uniq)
        object.__setattr__(self, "masses", merged)

    @classmethod
    def from_dict(cls, entries: Mapping[int, float]) -> "DiscreteMeasure":
        return cls(np.fromiter(entries.keys(), dtype=np.int64, count=len(entries)),
                   np.fromiter(entries.values(), dtype=np.float64, count=len(entries)))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "DiscreteMeasure":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    @classmethod
    def empty(cls) -> "DiscreteMeasure":
        return cls([], [])

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses.tolist())

    @property
    def entries(self) -> list[tuple[int, float]]:
        return list(zip(self.nodes.tolist(), self.masses.tolist()))

    def __len__(self) -> int:
        return len(self.nodes)

    def __add__(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(np.concatenate([self.nodes, other.nodes]),
                               np.concatenate([self.masses, other.masses]))

    def equals(self, other: "DiscreteMeasure") -> bool:
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.masses, other.masses))

    def dense(self, node_count: int) -> np.ndarray:
        if len(self.nodes) and self.nodes.max() >= node_count:
            raise StructuralError(f"support node {self.nodes.max()} outside [0, {node_count})")
        out = np.zeros(node_count)
        out[self.nodes] = self.masses
        return out


@dataclass(frozen=True, eq=False)
class AugmentedMeasure:
    """Probability vector over base nodes plus the dummy point ``SHAT`` (listed last)."""

    nodes: np.ndarray
    probs: np.ndarray

    def mass_at(self, node: int) -> float:
        hit = np.flatnonzero(self.nodes == node)
        return float(self.probs[hit[0]]) if len(hit) else 0.0

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        keep = self.probs > 0
        return self.nodes[keep], self.probs[keep]

    def as_dict(self) -> dict[int, float]:
        return {int(n): float(p) for n, p in zip(self.nodes, self.probs) if p > 0}


def edge_aggregates(m: DiscreteMeasure, spt: ShortestPathTree) -> np.ndarray:
    """Subtree masses per edge: ``out[e]`` is the mass whose root path uses ``e``.

    One sweep over the tree in reverse root-distance order. Edges outside the
    shortest-path tree carry no mass.
    """
    g = spt.graph
    sub = m.dense(g.node_count).tolist()
    parent, pedge = spt.parent.tolist(), spt.parent_edge.tolist()
    out = np.zeros(g.edge_count)
    # children always come after parents in spt.order
    for x in spt.order[:0:-1].tolist():
        s = sub[x]
        if s:
            out[pedge[x]] = s
            sub[parent[x]] += s
    return out


def active_edges(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree) -> np.ndarray:
    """Sorted ids of edges lying on the root path of some support node."""
    n = spt.graph.node_count
    seen = np.zeros(n, dtype=bool)
    seen[spt.root] = True
    parent, pedge = spt.parent.tolist(), spt.parent_edge.tolist()
    found = []
    for x in np.concatenate([mu.nodes, nu.nodes]).tolist():
        if x >= n:
            raise StructuralError(f"support node {x} outside [0, {n})")
        while not seen[x]:
            seen[x] = True
            found.append(pedge[x])
            x = parent[x]
    return np.array(sorted(found), dtype=np.int64)


def difference_aggregates(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree,
                          screen: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Edge ids and ``mu(gamma_e) - nu(gamma_e)`` on them.

    Subtree masses are differences of prefix sums of the net masses laid out
    in preorder. With ``screen`` only the active edges are returned, otherwise
    every edge (zero off the tree). Each edge gets the same arithmetic either
    way, so shared values agree bitwise.
    """
    g = spt.graph
    n = g.node_count
    nodes = np.concatenate([mu.nodes, nu.nodes])
    if len(nodes) and nodes.max() >= n:
        raise StructuralError(f"support node {nodes.max()} outside [0, {n})")
    pre = np.zeros(n)
    pre[spt.tin[mu.nodes]] = mu.masses
    pre[spt.tin[nu.nodes]] -= nu.masses
    hits = np.zeros(n + 1, dtype=np.int64)
    hits[spt.tin[nodes] + 1] = 1
    cum = np.concatenate([[0.0], np.cumsum(pre)])
    count = np.cumsum(hits)
    tin, tout = spt.tin, spt.tout
    below = count[tout] > count[tin]
    below[g.root] = False
    x = np.flatnonzero(below)
    delta = cum[tout[x]] - cum[tin[x]]
    edges = spt.parent_edge[x]
    if not screen:
        out = np.zeros(g.edge_count)
        out[edges] = delta
        return np.arange(g.edge_count), out
    return edges, delta


def augment(mu: DiscreteMeasure, nu: DiscreteMeasure) -> tuple[AugmentedMeasure, AugmentedMeasure]:
    """Balance two measures with a dummy point.

    ``mu_hat = (mu + nu(G) delta_shat) / (mu(G) + nu(G))`` and symmetrically
    for ``nu_hat``; both live on ``supp(mu) | supp(nu) | {SHAT}``.
    """
    m_mu, m_nu = mu.total_mass, nu.total_mass
    scale = m_mu + m_nu
    if not scale > 0:
        raise ParameterError("both measures have zero mass; augmentation is undefined")
    nodes = np.union1d(mu.nodes, nu.nodes)
    out = []
    for meas, other_mass in ((mu, m_nu), (nu, m_mu)):
        p = np.zeros(len(nodes) + 1)
        p[np.searchsorted(nodes, meas.nodes)] = meas.masses / scale
        p[-1] = other_mass / scale
        out.append(AugmentedMeasure(np.append(nodes, SHAT), p))
    return out[0], out[1]


def shannon_entropy(p) -> float:
    """``-sum p (log p - 1)`` with ``0 log 0 = 0``; natural log."""
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-np.sum(p * (np.log(p) - 1.0)))


def read_measure(path) -> DiscreteMeasure:
    """Parse ``node_id mass`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read measure file {path}: {exc}") from exc
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        if len(line) != 2:
            raise InputError(f"{path}:{lineno}: expected 'node_id mass'")
        try:
            pairs.append((int(line[0]), float(line[1])))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return DiscreteMeasure.from_pairs(pairs)


def write_measure(m: DiscreteMeasure, path) -> None:
    Path(path).write_text("".join(f"{n} {w!r}\n" for n, w in m.entries))
