"""Orlicz-Sobolev transport between node-supported measures.

The distance is a mass-difference term plus a one-dimensional convex
minimization over a scale ``k > 0``::

    OS(mu, nu) = Theta |mu(G) - nu(G)|
                 + inf_k (1/k) (1 + sum_e w_e phi(k b |mu(gamma_e) - nu(gamma_e)|))

where ``mu(gamma_e)`` is the mass of the subtree hanging below edge ``e`` in
the root shortest-path tree. Only edges on a support's root path carry a
nonzero difference, so the sum is taken over those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, NumericalError, ParameterError
from .graph import ShortestPathTree
from .measure import DiscreteMeasure, difference_aggregates
from .nfunc import Linear, NFunction, Power

__all__ = [
    "WeightFunction",
    "OstParams",
    "OstResult",
    "theta",
    "ost_objective",
    "minimize_objective",
    "solve_ost",
    "aggregate_differences",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# keep exp(log k) and 1 / k inside the normal float range
_LOG_K_MIN, _LOG_K_MAX = -700.0, 700.0


@dataclass(frozen=True)
class WeightFunction:
    """Nonnegative node weights, either ``a1 * d(root, x) + a0`` or a per-node table."""

    a1: float = 1.0
    a0: float = 1.0
    table: tuple[float, ...] | None = None
    lipschitz_hint: float | None = None

    def __post_init__(self):
        if self.table is None:
            if self.a1 < 0 or self.a0 < 0:
                raise ParameterError(f"affine weight needs a1, a0 >= 0, got ({self.a1}, {self.a0})")
        elif any(not x >= 0 for x in self.table):
            raise ParameterError("weight table has negative or NaN entries")

    @classmethod
    def affine(cls, a1: float, a0: float) -> "WeightFunction":
        return cls(a1=float(a1), a0=float(a0), lipschitz_hint=float(a1))

    @classmethod
    def from_table(cls, values: Sequence[float], lipschitz_hint: float | None = None) -> "WeightFunction":
        return cls(table=tuple(float(x) for x in values), lipschitz_hint=lipschitz_hint)

    @classmethod
    def parse(cls, text: str) -> "WeightFunction":
        try:
            a1, a0 = (float(x) for x in text.split(","))
        except ValueError:
            raise ParameterError(f"weight {text!r}: expected 'a1,a0'") from None
        return cls.affine(a1, a0)

    def values(self, spt: ShortestPathTree) -> np.ndarray:
        if self.table is not None:
            if len(self.table) != spt.graph.node_count:
                raise ParameterError("weight table length does not match node count")
            return np.asarray(self.table)
        return self.a1 * spt.dist_from_root + self.a0

    def at_root(self, spt: ShortestPathTree) -> float:
        if self.table is not None:
            return float(self.values(spt)[spt.root])
        return self.a0


@dataclass(frozen=True)
class OstParams:
    b: float = 1.0
    lam: float = 1.0
    alpha: float = 0.0
    w1: WeightFunction = WeightFunction()
    w2: WeightFunction = WeightFunction()

    def __post_init__(self):
        if not self.b > 0:
            raise ParameterError(f"b must be positive, got {self.b}")
        if not self.lam >= 0:
            raise ParameterError(f"lambda must be nonnegative, got {self.lam}")
        if not self.alpha >= 0:
            raise ParameterError(f"alpha must be nonnegative, got {self.alpha}")

    def alpha_max(self, spt: ShortestPathTree) -> float:
        return 0.5 * (self.b * self.lam + self.w1.at_root(spt) + self.w2.at_root(spt))

    def check_alpha(self, spt: ShortestPathTree) -> None:
        hi = self.alpha_max(spt)
        if self.alpha > hi:
            raise ParameterError(f"alpha={self.alpha} outside admissible interval [0, {hi}]")

    @property
    def symmetric(self) -> bool:
        """Equal weight functions make the distance symmetric in its arguments."""
        return self.w1 == self.w2


@dataclass
class OstResult:
    value: float
    theta: float
    k_opt: float | None
    iterations: int
    active_edge_count: int
    inf_term: float = 0.0


def theta(params: OstParams, total_mu: float, total_nu: float, spt: ShortestPathTree) -> float:
    """Coefficient of ``|mu(G) - nu(G)|``; ties use the ``w1`` branch."""
    w = params.w1 if total_mu >= total_nu else params.w2
    return w.at_root(spt) + 0.5 * params.b * params.lam - params.alpha


def aggregate_differences(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree,
                          screen: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(|mu(gamma_e) - nu(gamma_e)|, w_e)`` over active edges (or all edges), by edge id."""
    idx, delta = difference_aggregates(mu, nu, spt, screen=screen)
    if screen:
        order = np.argsort(idx)
        idx, delta = idx[order], delta[order]
    return np.abs(delta), spt.graph.w[idx]


def _edge_sum(terms: np.ndarray) -> float:
    # callers drop zero terms and keep edge-id order, so screened and full
    # evaluations sum identical arrays
    return float(np.add.reduce(terms))


def ost_objective(k: float, agg_diff, weights, phi: NFunction, b: float) -> float:
    """``(1/k) (1 + sum_e w_e phi(k b |delta_e|))``; ``inf`` on overflow."""
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    agg_diff = np.asarray(agg_diff, dtype=np.float64)
    terms = np.asarray(weights, dtype=np.float64) * phi.eval(k * b * agg_diff)
    if not np.all(np.isfinite(terms)):
        return math.inf
    return (1.0 + _edge_sum(terms[terms != 0])) / k


class _Objective:
    """T(k) and its first two derivatives for a fixed difference vector."""

    def __init__(self, agg_diff, weights, phi, b):
        keep = agg_diff > 0
        self.x = b * agg_diff[keep]
        self.w = weights[keep]
        self.phi = phi
        self.evals = 0

    def value(self, k):
        # arguments are positive by construction, so skip the public domain checks
        self.evals += 1
        s = _edge_sum(self.w * self.phi._value(k * self.x))
        if not math.isfinite(s):
            return math.inf
        return (1.0 + s) / k

    def derivs(self, k):
        """Return ``(T, T', T'')``."""
        kx = k * self.x
        t = self.value(k)
        s1 = _edge_sum(self.w * self.x * self.phi._deriv(kx))
        s2 = _edge_sum(self.w * self.x * self.x * self.phi._deriv2(kx))
        d1 = (s1 - t) / k
        d2 = (s2 - 2.0 * d1) / k
        return t, d1, d2


def minimize_objective(agg_diff, weights, phi: NFunction, b: float,
                       max_newton: int = 30, rtol: float = 1e-10) -> tuple[float, float | None, int]:
    """Minimize T over ``k > 0``. Returns ``(inf T, argmin k or None, evaluations)``.

    Bracket on the log-k axis by doubling/halving from ``1 / (b max|delta|)``,
    golden-section to width 1e-3, then safeguarded Newton on ``T'`` until
    ``|T'(k)| k <= rtol T(k)``.
    """
    agg_diff = np.asarray(agg_diff, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    obj = _Objective(agg_diff, weights, phi, b)
    if len(obj.x) == 0 or not np.any(obj.w > 0):
        return 0.0, None, 0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _minimize(obj, max_newton, rtol)


def _minimize(obj: _Objective, max_newton: int, rtol: float) -> tuple[float, float | None, int]:
    f = lambda s: obj.value(math.exp(s))  # noqa: E731
    step = math.log(2.0)
    s_mid = -math.log(float(obj.x.max()))
    f_mid = f(s_mid)
    while math.isinf(f_mid):
        s_mid -= step
        if s_mid < _LOG_K_MIN:
            raise NumericalError(f"objective overflows for every k down to {math.exp(s_mid + step):.3g}")
        f_mid = f(s_mid)

    s_lo, f_lo = s_mid - step, f(s_mid - step)
    s_hi, f_hi = s_mid + step, f(s_mid + step)
    while not (f_lo >= f_mid and f_hi >= f_mid):
        if not _LOG_K_MIN < s_mid < _LOG_K_MAX:
            raise NumericalError(f"cannot bracket minimum of T near k={math.exp(s_mid):.3g}")
        if f_lo < f_mid:
            s_hi, f_hi = s_mid, f_mid
            s_mid, f_mid = s_lo, f_lo
            s_lo = s_mid - step
            f_lo = f(s_lo)
        else:
            s_lo, f_lo = s_mid, f_mid
            s_mid, f_mid = s_hi, f_hi
            s_hi = s_mid + step
            f_hi = f(s_hi)

    a, c = s_lo, s_hi
    x1 = c - _GOLDEN * (c - a)
    x2 = a + _GOLDEN * (c - a)
    f1, f2 = f(x1), f(x2)
    while c - a > 1e-3:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - _GOLDEN * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (c - a)
            f2 = f(x2)

    k_lo, k_hi = math.exp(s_lo), math.exp(s_hi)
    k = math.exp(x1 if f1 <= f2 else x2)
    best_t, best_k = math.inf, k
    for _ in range(max_newton):
        t, d1, d2 = obj.derivs(k)
        if t < best_t:
            best_t, best_k = t, k
        if abs(d1) * k <= rtol * t:
            best_t, best_k = t, k
            break
        if d1 > 0:
            k_hi = k
        else:
            k_lo = k
        nk = k - d1 / d2 if d2 > 0 and math.isfinite(d2) else math.nan
        if not (k_lo < nk < k_hi):
            nk = math.sqrt(k_lo * k_hi)
        if nk == k:
            break
        k = nk
    return best_t, best_k, obj.evals


def solve_ost(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree, phi: NFunction,
              params: OstParams = OstParams(), screen: bool = True) -> OstResult:
    """Orlicz-Sobolev transport distance between ``mu`` and ``nu``.

    ``Linear`` uses the closed form ``b sum_e w_e |delta_e|``; ``Power(p)``
    uses the analytic minimizer; every other ``phi`` goes through
    :func:`minimize_objective`. ``screen=False`` sums over all edges instead
    of the active ones (same value, for checking).
    """
    params.check_alpha(spt)
    m_mu, m_nu = mu.total_mass, nu.total_mass
    th = theta(params, m_mu, m_nu, spt)
    mass_term = th * abs(m_mu - m_nu)
    diff, w = aggregate_differences(mu, nu, spt, screen=screen)
    keep = diff > 0
    diff, w = diff[keep], w[keep]
    b = params.b
    k_opt = None
    iters = 0
    if isinstance(phi, Linear):
        inf_term = b * _edge_sum(w * diff)
    elif type(phi) is Power:
        p = phi.p
        s = _edge_sum(w * diff ** p)
        if s > 0:
            norm = s ** (1.0 / p)
            inf_term = b * norm
            k_opt = 1.0 / ((p - 1.0) / p * b * norm)
        else:
            inf_term = 0.0
    else:
        inf_term, k_opt, iters = minimize_objective(diff, w, phi, b)
    return OstResult(value=mass_term + inf_term, theta=th, k_opt=k_opt, iterations=iters,
                     active_edge_count=len(diff), inf_term=inf_term)
