"""Weighted undirected graphs with a designated root.

The root-anchored shortest-path tree carries everything the transport
distances need: ``dist_from_root`` gives root distances for the weight
functions, ``parent_edge`` encodes the subtree sets over which edge
aggregates are accumulated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import InputError, ParameterError, StructuralError

__all__ = [
    "Graph",
    "ShortestPathTree",
    "build_spt",
    "graph_distance",
    "distances_from",
    "edge_path_to_root",
    "generate_graph",
    "farthest_point_clustering",
    "read_graph",
    "write_graph",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Connected undirected graph on nodes ``0..node_count-1``.

    Edges are stored as parallel arrays ``u``, ``v``, ``w``; edge ``i`` is
    ``(u[i], v[i])`` with length ``w[i]``. Parallel edges are allowed,
    self-loops are not.
    """

    node_count: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    root: int = 0
    coords: np.ndarray | None = None
    adjacency: tuple = field(init=False, repr=False)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64).reshape(-1)
        v = np.asarray(self.v, dtype=np.int64).reshape(-1)
        w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        n = int(self.node_count)
        if n < 1:
            raise StructuralError("graph needs at least one node")
        if not (len(u) == len(v) == len(w)):
            raise StructuralError("edge arrays have different lengths")
        if len(u) and (u.min() < 0 or v.min() < 0 or u.max() >= n or v.max() >= n):
            raise StructuralError(f"edge endpoint outside [0, {n})")
        if np.any(u == v):
            bad = int(np.flatnonzero(u == v)[0])
            raise StructuralError(f"self-loop at edge {bad} (node {u[bad]})")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            bad = int(np.flatnonzero(~(w > 0) | ~np.isfinite(w))[0])
            raise StructuralError(f"edge {bad} has non-positive length {w[bad]!r}")
        if not 0 <= int(self.root) < n:
            raise StructuralError(f"root {self.root} outside [0, {n})")
        for arr in (u, v, w):
            arr.setflags(write=False)
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for eid, (a, b) in enumerate(zip(u.tolist(), v.tolist())):
            adj[a].append((eid, b))
            adj[b].append((eid, a))
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "root", int(self.root))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "adjacency", tuple(tuple(a) for a in adj))

    @classmethod
    def from_edges(cls, node_count: int, edges: Iterable[Sequence[float]], root: int = 0, coords=None) -> "Graph":
        edges = list(edges)
        if edges:
            u, v, w = zip(*edges)
        else:
            u, v, w = (), (), ()
        return cls(node_count, np.array(u, dtype=np.int64), np.array(v, dtype=np.int64),
                   np.array(w, dtype=np.float64), root=root, coords=coords)

    @property
    def edge_count(self) -> int:
        return len(self.w)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return list(zip(self.u.tolist(), self.v.tolist(), self.w.tolist()))

    def with_root(self, root: int) -> "Graph":
        return Graph(self.node_count, self.u, self.v, self.w, root=root, coords=self.coords)

    def csr(self) -> csr_matrix:
        """Symmetric sparse adjacency; parallel edges collapse to the shortest one."""
        n = self.node_count
        if self.edge_count == 0:
            return csr_matrix((n, n))
        key = np.minimum(self.u, self.v) * n + np.maximum(self.u, self.v)
        order = np.argsort(key, kind="stable")
        key = key[order]
        starts = np.flatnonzero(np.concatenate([[True], key[1:] != key[:-1]]))
        w = np.minimum.reduceat(self.w[order], starts)
        a, b = np.divmod(key[starts], n)
        rows = np.concatenate([a, b])
        cols = np.concatenate([b, a])
        return csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))

    def is_tree(self) -> bool:
        if self.edge_count != self.node_count - 1:
            return False
        ncomp, _ = connected_components(self.csr(), directed=False)
        return ncomp == 1


@dataclass(frozen=True, eq=False)
class ShortestPathTree:
    graph: Graph
    dist_from_root: np.ndarray
    parent: np.ndarray  # parent node, -1 at the root
    parent_edge: np.ndarray  # edge id towards the parent, -1 at the root
    order: np.ndarray  # nodes by non-decreasing root distance, root first
    tie_flag: np.ndarray
    # preorder interval: the subtree of x is {y : tin[x] <= tin[y] < tout[x]}
    tin: np.ndarray = field(init=False, repr=False)
    tout: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.order)
        parent = self.parent.tolist()
        children: list[list[int]] = [[] for _ in range(n)]
        for x in range(n):
            if parent[x] >= 0:
                children[parent[x]].append(x)
        tin, size = [0] * n, [1] * n
        stack, clock = [self.graph.root], 0
        while stack:
            x = stack.pop()
            tin[x] = clock
            clock += 1
            stack.extend(reversed(children[x]))
        for x in self.order[:0:-1].tolist():
            size[parent[x]] += size[x]
        tin = np.array(tin, dtype=np.int64)
        tout = tin + np.array(size, dtype=np.int64)
        for name, arr in (("tin", tin), ("tout", tout)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def root(self) -> int:
        return self.graph.root

    @property
    def has_ties(self) -> bool:
        return bool(self.tie_flag.any())

    def tree_edges(self) -> np.ndarray:
        pe = self.parent_edge
        return np.sort(pe[pe >= 0])


def build_spt(g: Graph) -> ShortestPathTree:
    """Shortest-path tree from ``g.root`` with a deterministic tie-break.

    Among equal-length shortest paths the one through the smaller
    predecessor node id wins (then the smaller edge id). ``tie_flag`` marks
    every node with more than one shortest path from the root, which
    includes descendants of tied nodes. Ties are compared exactly.
    """
    n = g.node_count
    dist = dijkstra(g.csr(), directed=False, indices=g.root) if g.edge_count else np.full(n, np.inf)
    dist[g.root] = 0.0
    if not np.all(np.isfinite(dist)):
        missing = int(np.flatnonzero(~np.isfinite(dist))[0])
        raise StructuralError(f"graph is disconnected: node {missing} is unreachable from root {g.root}")
    # every (edge, direction) that realises d(head) = d(tail) + w exactly
    eid = np.arange(g.edge_count, dtype=np.int64)
    tail = np.concatenate([g.u, g.v])
    head = np.concatenate([g.v, g.u])
    eids = np.concatenate([eid, eid])
    tight = dist[tail] + np.concatenate([g.w, g.w]) == dist[head]
    tail, head, eids = tail[tight], head[tight], eids[tight]
    pick = np.lexsort((eids, tail, head))
    tail, head, eids = tail[pick], head[pick], eids[pick]
    first = np.ones(len(head), dtype=bool)
    first[1:] = head[1:] != head[:-1]
    parent = np.full(n, -1, dtype=np.int64)
    pedge = np.full(n, -1, dtype=np.int64)
    parent[head[first]] = tail[first]
    pedge[head[first]] = eids[first]
    tie = np.zeros(n, dtype=bool)
    tie[head[~first]] = True
    # stable sort keeps equal distances in id order; parents precede children
    # because edge lengths are positive
    order = np.argsort(dist, kind="stable")
    parent_list, tie_list = parent.tolist(), tie.tolist()
    for x in order[1:].tolist():
        if tie_list[parent_list[x]]:
            tie_list[x] = True
    arrays = [dist.astype(np.float64), parent, pedge, order.astype(np.int64), np.array(tie_list, dtype=bool)]
    for arr in arrays:
        arr.setflags(write=False)
    return ShortestPathTree(g, *arrays)


def _check_node(g: Graph, x: int) -> int:
    x = int(x)
    if not 0 <= x < g.node_count:
        raise StructuralError(f"node id {x} outside [0, {g.node_count})")
    return x


def distances_from(g: Graph, sources: Sequence[int]) -> np.ndarray:
    """Graph distances from each source to every node, shape ``(len(sources), n)``."""
    sources = [_check_node(g, s) for s in sources]
    if not sources:
        return np.zeros((0, g.node_count))
    return np.atleast_2d(dijkstra(g.csr(), directed=False, indices=sources))


def graph_distance(g: Graph, x: int, y: int) -> float:
    x, y = _check_node(g, x), _check_node(g, y)
    if x == y:
        return 0.0
    # one source is enough; order the pair so d(x, y) == d(y, x) bitwise
    a, b = min(x, y), max(x, y)
    return float(distances_from(g, [a])[0, b])


def edge_path_to_root(spt: ShortestPathTree, x: int) -> list[int]:
    """Edge ids of the root path of ``x``, leaf to root."""
    x = _check_node(spt.graph, x)
    path = []
    parent, pedge = spt.parent, spt.parent_edge
    while parent[x] >= 0:
        path.append(int(pedge[x]))
        x = int(parent[x])
    return path


def farthest_point_clustering(points: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Gonzalez farthest-point clustering. Returns (centroids, labels).

    Centres are picked greedily; each point joins its nearest centre and the
    returned centroids are the cluster means.
    """
    points = np.asarray(points, dtype=np.float64)
    m = len(points)
    k = min(k, m)
    centres = [int(rng.integers(m))]
    d = np.linalg.norm(points - points[centres[0]], axis=1)
    labels = np.zeros(m, dtype=np.int64)
    for c in range(1, k):
        nxt = int(np.argmax(d))
        if d[nxt] == 0:
            break
        centres.append(nxt)
        dn = np.linalg.norm(points - points[nxt], axis=1)
        closer = dn < d
        labels[closer] = c
        d = np.minimum(d, dn)
    k = len(centres)
    centroids = np.zeros((k, points.shape[1]))
    np.add.at(centroids, labels, points)
    centroids /= np.bincount(labels, minlength=k)[:, None]
    return centroids, labels


def _edge_budget(m: int, flavor: str) -> int:
    if flavor == "log":
        count = math.ceil(m * math.log(m))
    elif flavor == "sqrt":
        count = math.ceil(m ** 1.5)
    else:
        raise ParameterError(f"unknown graph flavor {flavor!r}; expected 'log' or 'sqrt'")
    return min(count, m * (m - 1) // 2)


def generate_graph(points_or_size, flavor: str = "log", seed=None, root: int = 0,
                   max_nodes: int | None = None) -> Graph:
    """Random geometric graph in the style of the log/sqrt benchmark graphs.

    ``points_or_size`` is either a node count M (positions drawn uniformly in
    the unit square) or an array of support points, clustered into at most
    ``max_nodes`` clusters (default: one per point) whose centroids become
    the nodes. M log M
    (``flavor='log'``) or M^1.5 (``flavor='sqrt'``) distinct random edges are
    drawn with Euclidean lengths; components are then bridged with
    ``n_components - 1`` extra random edges.
    """
    rng = np.random.default_rng(seed)
    if np.ndim(points_or_size) == 0:
        m = int(points_or_size)
        if m < 2:
            raise ParameterError(f"graph needs M >= 2 nodes, got {m}")
        coords = rng.random((m, 2))
    else:
        pts = np.asarray(points_or_size, dtype=np.float64)
        if pts.ndim != 2 or len(pts) < 2:
            raise ParameterError("support points must be a 2-d array with at least 2 rows")
        coords, _ = farthest_point_clustering(pts, max_nodes or len(pts), rng)
        m = len(coords)
        if m < 2:
            raise ParameterError("support points collapse to fewer than 2 distinct clusters")

    budget = _edge_budget(m, flavor)
    chosen: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    while len(pairs) < budget:
        need = budget - len(pairs)
        batch = rng.integers(0, m, size=(2 * need + 8, 2))
        for a, b in batch.tolist():
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            if key in chosen:
                continue
            chosen.add(key)
            pairs.append(key)
            if len(pairs) == budget:
                break

    u = np.array([p[0] for p in pairs], dtype=np.int64)
    v = np.array([p[1] for p in pairs], dtype=np.int64)
    adj = csr_matrix((np.ones(len(u)), (u, v)), shape=(m, m))
    ncomp, labels = connected_components(adj, directed=False)
    if ncomp > 1:
        comps = rng.permutation(ncomp)
        members = [np.flatnonzero(labels == c) for c in range(ncomp)]
        extra_u, extra_v = [], []
        for i in range(1, ncomp):
            joined = comps[int(rng.integers(i))]
            extra_u.append(int(rng.choice(members[comps[i]])))
            extra_v.append(int(rng.choice(members[joined])))
        u = np.concatenate([u, extra_u])
        v = np.concatenate([v, extra_v])
    w = np.linalg.norm(coords[u] - coords[v], axis=1)
    return Graph(m, u, v, w, root=root, coords=coords)


def read_graph(path) -> Graph:
    """Parse ``nodes N root Z`` followed by ``u v w`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read graph file {path}: {exc}") from exc
    header = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            if header is None:
                if len(line) != 4 or line[0] != "nodes" or line[2] != "root":
                    raise ValueError("expected header 'nodes N root Z'")
                header = (int(line[1]), int(line[3]))
            else:
                if len(line) != 3:
                    raise ValueError("expected 'u v w'")
                edges.append((int(line[0]), int(line[1]), float(line[2])))
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    if header is None:
        raise InputError(f"{path}: missing header line")
    return Graph.from_edges(header[0], edges, root=header[1])


def write_graph(g: Graph, path) -> None:
    lines = [f"nodes {g.node_count} root {g.root}"]
    lines += [f"{a} {b} {w!r}" for a, b, w in g.edges]
    Path(path).write_text("\n".join(lines) + "\n")
