"""Independent oracles for the solvers.

Nothing here reuses the fast paths in :mod:`orliczot.ost` or
:mod:`orliczot.ept`: aggregates are rebuilt from explicit root paths,
distances come from a plain heap Dijkstra, LPs go through HiGHS, and
minimization uses scipy's bounded Brent search. Each registered check runs
a solver against one oracle on seeded random instances and yields
:class:`OracleReport` rows; :func:`run_suite` drives them all.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .graph import Graph, ShortestPathTree, build_spt, edge_path_to_root
from .measure import DiscreteMeasure
from .nfunc import NFunction

__all__ = [
    "OracleReport",
    "path_aggregates",
    "plain_dijkstra",
    "ust_closed_form",
    "d_alpha_tree",
    "tree_wasserstein",
    "lp_ot",
    "lp_wasserstein",
    "lp_kt_reformulation",
    "lp_primal_et",
    "brute_force_minimum",
    "fd_check",
    "CHECKS",
    "REQUIRED_CHECKS",
    "register",
    "run_suite",
]


@dataclass
class OracleReport:
    name: str
    instance: str
    main: float
    oracle: float
    abs_error: float
    rel_error: float
    tolerance: float
    passed: bool
    relative: bool = True

    @classmethod
    def compare(cls, name, instance, main, oracle, tol, relative=True, one_sided=False):
        """``one_sided`` checks ``main >= oracle - tol`` instead of closeness."""
        main, oracle = float(main), float(oracle)
        abs_err = abs(main - oracle)
        rel_err = abs_err / max(abs(oracle), 1e-300) if oracle != 0 else abs_err
        err = rel_err if relative else abs_err
        if one_sided:
            passed = main >= oracle - tol
        else:
            passed = bool(err <= tol) or main == oracle
        return cls(name, instance, main, oracle, abs_err, rel_err, tol, passed, relative)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- oracles


def path_aggregates(m: DiscreteMeasure, spt: ShortestPathTree) -> dict[int, float]:
    """Edge id -> mass, accumulated by walking each support's root path."""
    out: dict[int, float] = {}
    for x, mass in m.entries:
        for e in edge_path_to_root(spt, x):
            out[e] = out.get(e, 0.0) + mass
    return out


def _differences(mu, nu, spt):
    am, an = path_aggregates(mu, spt), path_aggregates(nu, spt)
    edges = sorted(set(am) | set(an))
    diff = np.array([abs(am.get(e, 0.0) - an.get(e, 0.0)) for e in edges])
    w = np.array([spt.graph.w[e] for e in edges])
    return diff, w


def plain_dijkstra(g: Graph, source: int) -> np.ndarray:
    dist = [math.inf] * g.node_count
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, x = heapq.heappop(heap)
        if d > dist[x]:
            continue
        for e, y in g.adjacency[x]:
            nd = d + g.w[e]
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    return np.array(dist)


def heap_spt(g: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Textbook Dijkstra with the same tie-break, as (dist, parent, parent_edge, tie_flag)."""
    n = g.node_count
    dist = [math.inf] * n
    parent, pedge, tie, done = [-1] * n, [-1] * n, [False] * n, [False] * n
    order = []
    dist[g.root] = 0.0
    heap = [(0.0, g.root)]
    while heap:
        d, x = heapq.heappop(heap)
        if done[x]:
            continue
        done[x] = True
        order.append(x)
        for eid, y in g.adjacency[x]:
            if done[y]:
                continue
            nd = d + g.w[eid]
            if nd < dist[y]:
                dist[y], parent[y], pedge[y], tie[y] = nd, x, eid, False
                heapq.heappush(heap, (nd, y))
            elif nd == dist[y]:
                tie[y] = True
                if (x, eid) < (parent[y], pedge[y]):
                    parent[y], pedge[y] = x, eid
    for x in order[1:]:
        tie[x] = tie[x] or tie[parent[x]]
    return np.array(dist), np.array(parent), np.array(pedge), np.array(tie)


def _root_weight(wf, g: Graph) -> float:
    if wf.table is not None:
        return wf.table[g.root]
    return wf.a0


def _node_weights(wf, g: Graph) -> np.ndarray:
    if wf.table is not None:
        return np.asarray(wf.table)
    return wf.a1 * plain_dijkstra(g, g.root) + wf.a0


def _theta(params, m_mu, m_nu, g):
    wf = params.w1 if m_mu >= m_nu else params.w2
    return _root_weight(wf, g) + params.b * params.lam / 2 - params.alpha


def ust_closed_form(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree, p: float, params) -> float:
    """``b (sum_e w_e |delta_e|^p)^(1/p) + Theta |mu(G) - nu(G)|`` by direct summation."""
    diff, w = _differences(mu, nu, spt)
    m_mu, m_nu = float(np.sum(mu.masses)), float(np.sum(nu.masses))
    inner = float(np.sum(w * diff ** p)) ** (1.0 / p) if len(diff) else 0.0
    return params.b * inner + _theta(params, m_mu, m_nu, spt.graph) * abs(m_mu - m_nu)


def _tree_structure(g: Graph):
    """Parent and parent-edge arrays of a tree rooted at ``g.root``, by BFS."""
    parent = [-1] * g.node_count
    pedge = [-1] * g.node_count
    seen = [False] * g.node_count
    seen[g.root] = True
    queue = [g.root]
    for x in queue:
        for e, y in g.adjacency[x]:
            if not seen[y]:
                seen[y] = True
                parent[y], pedge[y] = x, e
                queue.append(y)
    return parent, pedge


def _tree_subtree_differences(mu, nu, g: Graph):
    if not g.is_tree():
        raise ValueError("graph is not a tree")
    parent, pedge = _tree_structure(g)
    children: dict[int, list[int]] = {}
    for x, p in enumerate(parent):
        if p >= 0:
            children.setdefault(p, []).append(x)
    dm, dn = dict(mu.entries), dict(nu.entries)
    diffs, lengths = [], []
    for x in range(g.node_count):
        if parent[x] < 0:
            continue
        stack, below = [x], []
        while stack:
            y = stack.pop()
            below.append(y)
            stack.extend(children.get(y, []))
        delta = sum(dm.get(y, 0.0) for y in below) - sum(dn.get(y, 0.0) for y in below)
        diffs.append(abs(delta))
        lengths.append(g.w[pedge[x]])
    return np.array(diffs), np.array(lengths)


def d_alpha_tree(mu: DiscreteMeasure, nu: DiscreteMeasure, tree: Graph, params) -> float:
    """Tree metric ``d_alpha``: the regularized EPT closed form plus ``b lam / 2`` times total mass."""
    diff, w = _tree_subtree_differences(mu, nu, tree)
    m_mu, m_nu = float(np.sum(mu.masses)), float(np.sum(nu.masses))
    half = params.b * params.lam / 2
    reg_ept = (params.b * float(np.sum(w * diff)) - half * (m_mu + m_nu)
               + _theta(params, m_mu, m_nu, tree) * abs(m_mu - m_nu))
    return reg_ept + half * (m_mu + m_nu)


def tree_wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, tree: Graph) -> float:
    """Closed-form 1-Wasserstein on a tree for equal-mass measures."""
    diff, w = _tree_subtree_differences(mu, nu, tree)
    return float(np.sum(w * diff))


def lp_ot(cost: np.ndarray, a, b) -> float:
    """Balanced OT value by linear programming (HiGHS)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n, m = cost.shape
    rows = np.repeat(np.arange(n), m)
    a_eq = np.zeros((n + m, n * m))
    a_eq[rows, np.arange(n * m)] = 1.0
    a_eq[n + np.tile(np.arange(m), n), np.arange(n * m)] = 1.0
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    return float(res.fun)


def lp_wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, g: Graph) -> float:
    cost = np.array([plain_dijkstra(g, int(x))[nu.nodes] for x in mu.nodes])
    return lp_ot(cost, mu.masses, nu.masses)


def lp_kt_reformulation(mu: DiscreteMeasure, nu: DiscreteMeasure, g: Graph, params) -> float:
    """Unnormalized balanced OT with shifted cost ``b (d - lam)`` and a dummy point.

    Marginals are ``mu + nu(G) delta_s`` and ``nu + mu(G) delta_s``.
    """
    b, lam = params.b, params.lam
    w1, w2 = _node_weights(params.w1, g), _node_weights(params.w2, g)
    d = np.array([plain_dijkstra(g, int(x))[nu.nodes] for x in mu.nodes]).reshape(len(mu.nodes), len(nu.nodes))
    n, m = len(mu.nodes), len(nu.nodes)
    cost = np.zeros((n + 1, m + 1))
    cost[:n, :m] = b * (d - lam)
    cost[:n, m] = w1[mu.nodes]
    cost[n, :m] = w2[nu.nodes]
    a = np.append(mu.masses, nu.masses.sum())
    bb = np.append(nu.masses, mu.masses.sum())
    # the cost may be negative here, which an LP does not mind
    return lp_ot(cost, a, bb)


def lp_primal_et(mu: DiscreteMeasure, nu: DiscreteMeasure, g: Graph, params) -> float:
    """Entropy partial transport with ``|s - 1|`` entropies, solved as a sub-coupling LP."""
    b, lam = params.b, params.lam
    w1, w2 = _node_weights(params.w1, g), _node_weights(params.w2, g)
    n, m = len(mu.nodes), len(nu.nodes)
    d = np.array([plain_dijkstra(g, int(x))[nu.nodes] for x in mu.nodes]).reshape(n, m)
    const = float(np.sum(w1[mu.nodes] * mu.masses) + np.sum(w2[nu.nodes] * nu.masses))
    c = -w1[mu.nodes][:, None] - w2[nu.nodes][None, :] + b * (d - lam)
    a_ub = np.zeros((n + m, n * m))
    a_ub[np.repeat(np.arange(n), m), np.arange(n * m)] = 1.0
    a_ub[n + np.tile(np.arange(m), n), np.arange(n * m)] = 1.0
    res = linprog(c.ravel(), A_ub=a_ub, b_ub=np.concatenate([mu.masses, nu.masses]),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    return const + float(res.fun)


def brute_force_minimum(mu, nu, spt, phi: NFunction, b: float) -> float:
    """``inf_k (1/k)(1 + sum w_e phi(k b |delta_e|))`` by bounded Brent search on log k."""
    diff, w = _differences(mu, nu, spt)
    keep = diff > 0
    diff, w = diff[keep], w[keep]
    if not len(diff):
        return 0.0

    def obj(s):
        k = math.exp(s)
        with np.errstate(over="ignore"):
            val = (1.0 + float(np.sum(w * phi.eval(k * b * diff)))) / k
        return val if math.isfinite(val) else 1e300

    centre = -math.log(b * diff.max())
    res = minimize_scalar(obj, bounds=(centre - 40, centre + 40), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 2000})
    return float(res.fun)


def fd_check(fn: Callable[[float], float], analytic: Callable[[float], float], point: float,
             h: float = 1e-6) -> float:
    """``|analytic(x) - central difference| / max(1, |analytic(x)|)``."""
    a = float(analytic(point))
    fd = (fn(point + h) - fn(point - h)) / (2 * h)
    return abs(a - fd) / max(1.0, abs(a))


# ---------------------------------------------------------------- registry

CHECKS: dict[str, Callable[[np.random.Generator, int], Iterator[OracleReport]]] = {}

# every solver equivalence must have a registered check
REQUIRED_CHECKS = frozenset({
    "power_closed_form",
    "power_k_opt",
    "linear_closed_form",
    "general_minimizer",
    "gst_reduction",
    "st_reduction",
    "mass_translation",
    "divergence",
    "symmetry",
    "triangle",
    "sparsity",
    "tree_d_alpha",
    "tree_wasserstein",
    "kt_reformulation",
    "kt_primal",
    "ost_ept_inequality",
    "ept_bracket_validity",
    "ept_monotone",
    "ept_entropic_linear_fixed_point",
})


def register(name: str):
    def deco(fn):
        CHECKS[name] = fn
        return fn
    return deco


def run_suite(seed: int = 0, n_instances: int = 10, names=None) -> list[OracleReport]:
    missing = REQUIRED_CHECKS - set(CHECKS)
    if missing:
        raise RuntimeError(f"unregistered oracle checks: {sorted(missing)}")
    reports: list[OracleReport] = []
    for name in sorted(names or CHECKS):
        rng = np.random.default_rng([seed, sorted(CHECKS).index(name)])
        reports.extend(CHECKS[name](rng, n_instances))
    return reports


from . import checks  # noqa: E402,F401  (registers the checks)
