"""Orlicz entropy partial transport via a calibrated augmented OT problem.

The unbalanced pair ``(mu, nu)`` is balanced with a dummy point ``s``; the
augmented cost is ``b d(x, y)`` on the graph, ``w1(x) + b lam`` into ``s``,
``w2(y) + b lam`` out of ``s`` and ``b lam`` from ``s`` to itself, so every
entry is nonnegative. The Orlicz value is the smallest ``t`` with
``A_eps(t) = min_P <P, phi(c / t)> - eps H(P) <= 1``, found by bisection
between two analytic brackets.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InputError, NumericalError, ParameterError
from .graph import ShortestPathTree, distances_from
from .measure import SHAT, DiscreteMeasure, augment, shannon_entropy
from .nfunc import Linear, NFunction
from .ost import OstParams

__all__ = [
    "AugmentedProblem",
    "SinkhornReport",
    "BisectionTrace",
    "InfeasibleMarginals",
    "build_augmented",
    "exact_ot",
    "sinkhorn",
    "sinkhorn_objective",
    "entropic_ot",
    "brackets",
    "orlicz_ept",
]


class InfeasibleMarginals(InputError, ValueError):
    """Marginals with different total mass."""


@dataclass(frozen=True, eq=False)
class AugmentedProblem:
    """Augmented cost restricted to positive-mass rows and columns.

    ``rows``/``cols`` hold node ids with ``SHAT`` for the dummy point; a dummy
    with zero mass (one input measure empty) is left out.
    """

    rows: np.ndarray
    cols: np.ndarray
    cost: np.ndarray
    mu_hat: np.ndarray
    nu_hat: np.ndarray
    mass_scale: float
    b_lambda: float

    @property
    def max_cost(self) -> float:
        """Largest cost between supports of the two augmented measures."""
        return float(self.cost.max())

    def entropies(self) -> tuple[float, float]:
        return shannon_entropy(self.mu_hat), shannon_entropy(self.nu_hat)


@dataclass
class SinkhornReport:
    plan: np.ndarray
    transport_cost: float
    entropy: float
    objective: float
    iterations: int
    marginal_violation: float
    converged: bool
    f: np.ndarray = field(repr=False, default=None)
    g: np.ndarray = field(repr=False, default=None)


@dataclass
class BisectionTrace:
    t_lower: float
    t_upper: float
    evaluations: list[tuple[float, float]] = field(default_factory=list)
    final_t: float = math.nan
    value: float = math.nan
    bracket: str = "exact"
    sinkhorn_iterations: int = 0


def build_augmented(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree,
                    params: OstParams = OstParams()) -> AugmentedProblem:
    if params.lam < 0:
        raise ParameterError(f"lambda must be nonnegative, got {params.lam}")
    mu_hat, nu_hat = augment(mu, nu)
    r_nodes, r_p = mu_hat.support()
    c_nodes, c_p = nu_hat.support()
    b, bl = params.b, params.b * params.lam
    w1 = params.w1.values(spt)
    w2 = params.w2.values(spt)
    r_graph = r_nodes[r_nodes != SHAT]
    c_graph = c_nodes[c_nodes != SHAT]
    cost = np.empty((len(r_nodes), len(c_nodes)))
    nr, nc = len(r_graph), len(c_graph)
    if nr and nc:
        cost[:nr, :nc] = b * distances_from(spt.graph, r_graph)[:, c_graph]
    if nr < len(r_nodes):  # dummy row present
        cost[nr, :nc] = w2[c_graph] + bl
    if nc < len(c_nodes):
        cost[:nr, nc] = w1[r_graph] + bl
    if nr < len(r_nodes) and nc < len(c_nodes):
        cost[nr, nc] = bl
    return AugmentedProblem(r_nodes, c_nodes, cost, r_p, c_p,
                            mass_scale=mu.total_mass + nu.total_mass, b_lambda=bl)


def _import_pot():
    # keep POT from probing torch/jax/tensorflow at import
    for key in ("POT_BACKEND_DISABLE_PYTORCH", "POT_BACKEND_DISABLE_JAX",
                "POT_BACKEND_DISABLE_TENSORFLOW", "POT_BACKEND_DISABLE_CUPY"):
        os.environ.setdefault(key, "1")
    import ot

    return ot


def exact_ot(cost, p_row, p_col, max_iter: int = 10_000_000) -> tuple[np.ndarray, float]:
    """Exact discrete OT by network simplex. Returns ``(plan, value)``."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    a = np.asarray(p_row, dtype=np.float64)
    bb = np.asarray(p_col, dtype=np.float64)
    if cost.shape != (len(a), len(bb)):
        raise ParameterError(f"cost shape {cost.shape} does not match marginals ({len(a)}, {len(bb)})")
    if np.any(a < 0) or np.any(bb < 0) or not np.all(np.isfinite(cost)):
        raise ParameterError("marginals must be nonnegative and cost finite")
    sa, sb = a.sum(), bb.sum()
    if abs(sa - sb) > 1e-9:
        raise InfeasibleMarginals(f"marginal sums differ: {sa!r} vs {sb!r}")
    bb = bb * (sa / sb)
    ot = _import_pot()
    plan, log = ot.emd(a, bb, cost, numItermax=max_iter, log=True)
    if log.get("warning"):
        raise NumericalError(f"network simplex did not finish: {log['warning']}")
    value = math.fsum((plan * cost).ravel().tolist())
    return plan, value


def _lse_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1)
    safe = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.exp(x - safe[:, None]).sum(axis=1)) + safe


def sinkhorn(cost: np.ndarray, a: np.ndarray, b: np.ndarray, eps: float, tol: float = 1e-7,
             max_iter: int = 10_000, init: tuple[np.ndarray, np.ndarray] | None = None,
             check_every: int = 10) -> SinkhornReport:
    """Log-domain Sinkhorn for ``min <P, C> - eps H(P)`` over couplings of ``a`` and ``b``.

    ``H(P) = -sum P (log P - 1)``. Stops once the row-marginal violation
    (columns are exact after each sweep) is at most ``tol``.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    cost = np.asarray(cost, dtype=np.float64)
    log_a, log_b = np.log(a), np.log(b)
    f, g = (np.zeros(len(a)), np.zeros(len(b))) if init is None else (init[0].copy(), init[1].copy())
    neg = -cost / eps
    neg_t = np.ascontiguousarray(neg.T)
    it = 0
    violation = math.inf
    fe, ge = f / eps, g / eps
    while it < max_iter:
        fe = log_a - _lse_rows(neg + ge[None, :])
        ge = log_b - _lse_rows(neg_t + fe[None, :])
        it += 1
        if it % check_every == 0 or it == max_iter:
            log_plan = neg + fe[:, None] + ge[None, :]
            violation = float(np.abs(np.exp(log_plan).sum(axis=1) - a).max())
            if not math.isfinite(violation):
                raise NumericalError("Sinkhorn potentials became non-finite")
            if violation <= tol:
                break
    log_plan = neg + fe[:, None] + ge[None, :]
    plan = np.exp(log_plan)
    violation = float(np.abs(plan.sum(axis=1) - a).max())
    pos = plan > 0
    transport = math.fsum((plan[pos] * cost[pos]).tolist())
    entropy = -math.fsum((plan[pos] * (log_plan[pos] - 1.0)).tolist())
    return SinkhornReport(plan=plan, transport_cost=transport, entropy=entropy,
                          objective=transport - eps * entropy, iterations=it,
                          marginal_violation=violation, converged=violation <= tol,
                          f=fe * eps, g=ge * eps)


def sinkhorn_objective(ap: AugmentedProblem, phi: NFunction, t: float, eps: float,
                       tol: float = 1e-7, max_iter: int = 10_000, init=None) -> SinkhornReport:
    """Entropic OT value ``A_eps(t)`` for cost ``phi(c / t)``."""
    if not t > 0:
        raise ParameterError(f"t must be positive, got {t}")
    cost = phi.eval(ap.cost / t)
    if not np.all(np.isfinite(cost)):
        # entries with phi overflow are unusable; all of a row or column means no coupling
        finite = np.isfinite(cost)
        if not (finite.any(axis=1).all() and finite.any(axis=0).all()):
            raise NumericalError(f"kernel has an all-infinite row or column at t={t:.6g}")
    return sinkhorn(cost, ap.mu_hat, ap.nu_hat, eps, tol=tol, max_iter=max_iter, init=init)


def entropic_ot(ap: AugmentedProblem, eps: float, tol: float = 1e-9, max_iter: int = 100_000) -> SinkhornReport:
    """Entropic OT with the raw augmented cost."""
    return sinkhorn(ap.cost, ap.mu_hat, ap.nu_hat, eps, tol=tol, max_iter=max_iter)


def _a_value(ap, phi, t, eps, tol, max_iter, init=None):
    """``A_eps(t)``, or the exact ``A(t)`` when ``eps == 0``."""
    if eps == 0:
        _, val = exact_ot(phi.eval(ap.cost / t), ap.mu_hat, ap.nu_hat)
        return val, None
    rep = sinkhorn_objective(ap, phi, t, eps, tol=tol, max_iter=max_iter, init=init)
    return rep.objective, rep


def brackets(ap: AugmentedProblem, phi: NFunction, eps: float,
             bracket: Literal["exact", "entropic"] = "exact", tol: float = 1e-7,
             max_iter: int = 10_000, verify: bool = False) -> tuple[float, float, str]:
    """Initial bisection interval ``(t_lower, t_upper, kind)``.

    ``t_upper = L / phi^-1(1 + eps)`` with ``L`` the largest augmented cost,
    ``t_lower = W / phi^-1(1 + eps (H(mu_hat) + H(nu_hat) - 1))`` with ``W`` the
    exact OT value. ``bracket='entropic'`` replaces ``W`` by the entropic OT
    value plus ``eps/2 (H(mu_hat) + H(nu_hat))``; that bound relies on an
    extra nonnegativity assumption, so it is checked against ``A_eps >= 1``
    and dropped for the exact one if it fails.
    """
    if eps < 0:
        raise ParameterError(f"eps must be nonnegative, got {eps}")
    h_mu, h_nu = ap.entropies()
    t_upper = ap.max_cost / phi.inverse(1.0 + eps)
    denom = phi.inverse(1.0 + eps * (h_mu + h_nu - 1.0))
    kind = "exact"
    t_lower = None
    if bracket == "entropic" and eps > 0:
        rep = entropic_ot(ap, eps)
        cand = (rep.objective + 0.5 * eps * (h_mu + h_nu)) / denom
        if cand > 0 and _a_value(ap, phi, cand, eps, tol, max_iter)[0] >= 1.0:
            t_lower, kind = cand, "entropic"
    elif bracket not in ("exact", "entropic"):
        raise ParameterError(f"unknown bracket {bracket!r}")
    if t_lower is None:
        _, w = exact_ot(ap.cost, ap.mu_hat, ap.nu_hat)
        t_lower = w / denom
    if t_lower > t_upper:
        t_lower = 0.99 * t_upper
        verify = True
    if verify:
        lo_val = _a_value(ap, phi, t_lower, eps, tol, max_iter)[0]
        hi_val = _a_value(ap, phi, t_upper, eps, tol, max_iter)[0]
        if lo_val < 1.0 - 1e-9 or hi_val > 1.0 + 1e-9:
            raise NumericalError(f"invalid bisection bracket [{t_lower:.6g}, {t_upper:.6g}]: "
                                 f"A={lo_val:.6g}, {hi_val:.6g}")
    return t_lower, t_upper, kind


def orlicz_ept(mu: DiscreteMeasure, nu: DiscreteMeasure, spt: ShortestPathTree, phi: NFunction,
               params: OstParams = OstParams(), eps: float = 0.1, tol_t: float | None = None,
               bracket: str = "exact", sinkhorn_tol: float = 1e-7, max_iter: int = 10_000,
               ap: AugmentedProblem | None = None) -> tuple[float, BisectionTrace]:
    """Entropic Orlicz-EPT value ``(mu(G) + nu(G)) (t* - b lam)``.

    ``eps = 0`` uses exact OT for the inner problem; with ``Linear`` phi this
    collapses to ``(mu(G) + nu(G)) (W - b lam)`` and no bisection runs.
    ``tol_t`` defaults to ``1e-4 * t_upper``.
    """
    if ap is None:
        ap = build_augmented(mu, nu, spt, params)
    scale, bl = ap.mass_scale, ap.b_lambda
    if eps == 0 and isinstance(phi, Linear):
        _, w = exact_ot(ap.cost, ap.mu_hat, ap.nu_hat)
        trace = BisectionTrace(t_lower=w, t_upper=w, final_t=w, value=scale * (w - bl))
        return trace.value, trace

    t_lo, t_hi, kind = brackets(ap, phi, eps, bracket=bracket, tol=sinkhorn_tol, max_iter=max_iter)
    trace = BisectionTrace(t_lower=t_lo, t_upper=t_hi, bracket=kind)
    width = 1e-4 * t_hi if tol_t is None else tol_t
    init = None
    while t_hi - t_lo > width:
        t_m = 0.5 * (t_lo + t_hi)
        try:
            f_m, rep = _a_value(ap, phi, t_m, eps, sinkhorn_tol, max_iter, init)
        except NumericalError as exc:
            raise NumericalError(f"inner solve failed at t={t_m:.6g}: {exc}") from exc
        if rep is not None:
            trace.sinkhorn_iterations += rep.iterations
            if not rep.converged:
                raise NumericalError(f"Sinkhorn did not converge at t={t_m:.6g} "
                                     f"(violation {rep.marginal_violation:.3g} after {rep.iterations} iterations)")
            init = (rep.f, rep.g)
        trace.evaluations.append((t_m, f_m))
        if f_m <= 1.0:
            t_hi = t_m
            if abs(f_m - 1.0) <= 1e-9:
                break
        else:
            t_lo = t_m
    trace.final_t = t_hi
    trace.value = scale * (t_hi - bl)
    return trace.value, trace
