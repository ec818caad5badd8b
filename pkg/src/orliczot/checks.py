"""Registered oracle checks used by ``run_suite`` and the ``verify`` command."""

from __future__ import annotations

import math

import numpy as np

from .ept import brackets, build_augmented, entropic_ot, orlicz_ept, sinkhorn_objective
from .graph import build_spt
from .instances import random_graph, random_measure, random_tree, rescale
from .nfunc import Custom, ExpMinus, ExpSquare, Linear, Power
from .ost import OstParams, WeightFunction, solve_ost
from .reference import (
    OracleReport,
    brute_force_minimum,
    d_alpha_tree,
    lp_kt_reformulation,
    lp_primal_et,
    lp_wasserstein,
    register,
    tree_wasserstein,
    ust_closed_form,
)


def power_as_custom(p: float) -> Custom:
    """The normalized power function without the analytic shortcut."""
    ref = Power(p)
    return Custom(ref.eval, ref.deriv, ref.deriv2, ref.inverse, name=f"power:{p}")


def _instance(rng, max_nodes=60, max_supports=15, tree=False):
    n = int(rng.integers(3, max_nodes + 1))
    g = random_tree(rng, n) if tree else random_graph(rng, n)
    spt = build_spt(g)
    mu = random_measure(rng, n, max_supports)
    nu = random_measure(rng, n, max_supports)
    return g, spt, mu, nu, f"n={n},|mu|={len(mu)},|nu|={len(nu)}"


def _params(rng, symmetric=True, alpha_frac=None):
    b = float(rng.uniform(0.5, 2.0))
    lam = float(rng.uniform(0.0, 2.0))
    a1, a0 = float(rng.uniform(0, b)), float(rng.uniform(0.1, 2.0))
    w1 = WeightFunction.affine(a1, a0)
    w2 = w1 if symmetric else WeightFunction.affine(float(rng.uniform(0, b)), float(rng.uniform(0.1, 2.0)))
    upper = b * lam / 2 + min(a0, w2.a0)
    frac = float(rng.uniform(0, 0.9)) if alpha_frac is None else alpha_frac
    return OstParams(b=b, lam=lam, alpha=frac * upper, w1=w1, w2=w2)


@register("power_closed_form")
def _power_closed_form(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        params = _params(rng, symmetric=False)
        res = solve_ost(mu, nu, spt, power_as_custom(p), params)
        yield OracleReport.compare("power_closed_form", f"{desc},p={p}", res.value,
                                   ust_closed_form(mu, nu, spt, p, params), 1e-8)


@register("power_k_opt")
def _power_k_opt(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        params = _params(rng)
        res = solve_ost(mu, nu, spt, power_as_custom(p), params)
        analytic = solve_ost(mu, nu, spt, Power(p), params)
        if analytic.k_opt is None:
            continue
        yield OracleReport.compare("power_k_opt", f"{desc},p={p}", res.k_opt, analytic.k_opt, 1e-6)


@register("linear_closed_form")
def _linear_closed_form(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng, symmetric=False)
        res = solve_ost(mu, nu, spt, Linear(), params)
        yield OracleReport.compare("linear_closed_form", desc, res.value,
                                   ust_closed_form(mu, nu, spt, 1.0, params), 1e-12)


@register("general_minimizer")
def _general_minimizer(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng)
        for phi in (ExpMinus(), ExpSquare()):
            res = solve_ost(mu, nu, spt, phi, params)
            yield OracleReport.compare("general_minimizer", f"{desc},{phi.kind}", res.inf_term,
                                       brute_force_minimum(mu, nu, spt, phi, params.b), 1e-9)


@register("gst_reduction")
def _gst_reduction(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        nu = rescale(nu, mu.total_mass)
        params = OstParams(b=1.0, lam=float(rng.uniform(0, 2)), alpha=0.0)
        res = solve_ost(mu, nu, spt, ExpMinus(), params)
        mass_term = res.theta * abs(mu.total_mass - nu.total_mass)
        yield OracleReport.compare("gst_reduction", desc, res.value,
                                   brute_force_minimum(mu, nu, spt, ExpMinus(), 1.0) + mass_term, 1e-9)


@register("st_reduction")
def _st_reduction(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        nu = rescale(nu, mu.total_mass)
        p = float(rng.choice([1.5, 2.0, 3.0]))
        params = OstParams(b=1.0, lam=float(rng.uniform(0, 2)))
        res = solve_ost(mu, nu, spt, power_as_custom(p), params)
        st = ust_closed_form(mu, nu, spt, p, OstParams(b=1.0, lam=0.0, w1=WeightFunction.affine(0, 0),
                                                      w2=WeightFunction.affine(0, 0)))
        yield OracleReport.compare("st_reduction", f"{desc},p={p}", res.value, st, 1e-8)


def _phis():
    return [Linear(), Power(2.0), ExpMinus(), ExpSquare()]


@register("mass_translation")
def _mass_translation(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        sigma = random_measure(rng, g.node_count, 10)
        params = _params(rng)
        for phi in _phis():
            a = solve_ost(mu + sigma, nu + sigma, spt, phi, params).value
            b = solve_ost(mu, nu, spt, phi, params).value
            yield OracleReport.compare("mass_translation", f"{desc},{phi.kind}", a, b, 1e-9)


@register("divergence")
def _divergence(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng)
        for phi in _phis():
            same = solve_ost(mu, mu, spt, phi, params).value
            yield OracleReport.compare("divergence", f"{desc},{phi.kind},mu=mu", same, 0.0, 1e-10, relative=False)
            if not mu.equals(nu):
                v = solve_ost(mu, nu, spt, phi, params).value
                # distinct measures must stay strictly above the zero tolerance
                yield OracleReport.compare("divergence", f"{desc},{phi.kind},mu!=nu", v, 1e-10, 0.0,
                                           relative=False, one_sided=True)


@register("symmetry")
def _symmetry(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng)
        for phi in _phis():
            a = solve_ost(mu, nu, spt, phi, params).value
            b = solve_ost(nu, mu, spt, phi, params).value
            yield OracleReport.compare("symmetry", f"{desc},{phi.kind}", a, b, 1e-10, relative=False)


@register("triangle")
def _triangle(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        sigma = random_measure(rng, g.node_count, 15)
        params = _params(rng, symmetric=False)
        for phi in _phis():
            direct = solve_ost(mu, nu, spt, phi, params).value
            via = solve_ost(mu, sigma, spt, phi, params).value + solve_ost(sigma, nu, spt, phi, params).value
            yield OracleReport.compare("triangle", f"{desc},{phi.kind}", via, direct, 1e-9,
                                       relative=False, one_sided=True)


@register("sparsity")
def _sparsity(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng)
        for phi in _phis():
            a = solve_ost(mu, nu, spt, phi, params, screen=True).value
            b = solve_ost(mu, nu, spt, phi, params, screen=False).value
            yield OracleReport.compare("sparsity", f"{desc},{phi.kind}", a, b, 0.0, relative=False)


@register("tree_d_alpha")
def _tree_d_alpha(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng, tree=True)
        params = _params(rng, symmetric=False)
        yield OracleReport.compare("tree_d_alpha", desc, solve_ost(mu, nu, spt, Linear(), params).value,
                                   d_alpha_tree(mu, nu, g, params), 1e-10)


@register("tree_wasserstein")
def _tree_wasserstein(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng, tree=True)
        nu = rescale(nu, mu.total_mass)
        params = OstParams(b=1.0, lam=float(rng.uniform(0, 2)))
        ost = solve_ost(mu, nu, spt, Linear(), params).value
        yield OracleReport.compare("tree_wasserstein", desc + ",lp", ost, lp_wasserstein(mu, nu, g), 1e-8)
        yield OracleReport.compare("tree_wasserstein", desc + ",closed", ost, tree_wasserstein(mu, nu, g), 1e-10)


def _kt(mu, nu, spt, params):
    return orlicz_ept(mu, nu, spt, Linear(), params, eps=0)[0]


@register("kt_reformulation")
def _kt_reformulation(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng)
        yield OracleReport.compare("kt_reformulation", desc, _kt(mu, nu, spt, params),
                                   lp_kt_reformulation(mu, nu, g, params), 1e-8, relative=False)


@register("kt_primal")
def _kt_primal(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng)
        yield OracleReport.compare("kt_primal", desc, _kt(mu, nu, spt, params),
                                   lp_primal_et(mu, nu, g, params), 1e-8, relative=False)


@register("ost_ept_inequality")
def _ost_ept_inequality(rng, n):
    for i in range(n):
        g, spt, mu, nu, desc = _instance(rng)
        params = _params(rng, alpha_frac=0.0)
        ost = solve_ost(mu, nu, spt, Linear(), params).value
        rhs = _kt(mu, nu, spt, params) + params.b * params.lam / 2 * (mu.total_mass + nu.total_mass)
        yield OracleReport.compare("ost_ept_inequality", desc, ost, rhs, 1e-8, relative=False, one_sided=True)


def _ept_instance(rng):
    g, spt, mu, nu, desc = _instance(rng, max_nodes=40, max_supports=10)
    params = _params(rng)
    return spt, mu, nu, params, desc, build_augmented(mu, nu, spt, params)


@register("ept_bracket_validity")
def _ept_bracket_validity(rng, n):
    for i in range(n):
        spt, mu, nu, params, desc, ap = _ept_instance(rng)
        for eps in (0.1, 1.0):
            lo, hi, _ = brackets(ap, ExpMinus(), eps)
            a_lo = sinkhorn_objective(ap, ExpMinus(), lo, eps, tol=1e-9, max_iter=100_000).objective
            a_hi = sinkhorn_objective(ap, ExpMinus(), hi, eps, tol=1e-9, max_iter=100_000).objective
            yield OracleReport.compare("ept_bracket_validity", f"{desc},eps={eps},lower", a_lo, 1.0, 1e-6,
                                       relative=False, one_sided=True)
            yield OracleReport.compare("ept_bracket_validity", f"{desc},eps={eps},upper", 1.0, a_hi, 1e-6,
                                       relative=False, one_sided=True)


@register("ept_monotone")
def _ept_monotone(rng, n):
    for i in range(n):
        spt, mu, nu, params, desc, ap = _ept_instance(rng)
        eps = float(rng.choice([0.1, 1.0]))
        lo, hi, _ = brackets(ap, ExpMinus(), eps)
        vals = [sinkhorn_objective(ap, ExpMinus(), t, eps, tol=1e-9, max_iter=100_000).objective
                for t in np.geomspace(lo, hi, 20)]
        worst = max(b - a for a, b in zip(vals, vals[1:]))
        yield OracleReport.compare("ept_monotone", f"{desc},eps={eps}", -worst, 0.0, 1e-6,
                                   relative=False, one_sided=True)


@register("ept_entropic_linear_fixed_point")
def _ept_entropic_linear_fixed_point(rng, n):
    """With linear phi the bisection root ``t`` solves ``t = W_{c, eps t}``."""
    for i in range(n):
        spt, mu, nu, params, desc, ap = _ept_instance(rng)
        eps = float(rng.choice([0.1, 1.0]))
        value, trace = orlicz_ept(mu, nu, spt, Linear(), params, eps=eps, ap=ap, sinkhorn_tol=1e-9,
                                  max_iter=100_000)
        t = trace.final_t
        fixed = entropic_ot(ap, eps * t).objective
        yield OracleReport.compare("ept_entropic_linear_fixed_point", f"{desc},eps={eps}", t, fixed,
                                   2e-4 * trace.t_upper, relative=False)
