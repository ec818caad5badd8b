import math

import numpy as np
import pytest

from orliczot import (
    Custom,
    DiscreteMeasure,
    DomainError,
    ExpMinus,
    ExpSquare,
    Linear,
    NumericalError,
    OstParams,
    ParameterError,
    Power,
    WeightFunction,
    build_spt,
    ost_objective,
    solve_ost,
    theta,
)
from orliczot.checks import power_as_custom
from orliczot.instances import random_graph, random_measure
from orliczot.ost import aggregate_differences, minimize_objective


class TestTheta:
    def test_heavier_mu(self, p3_spt):
        assert theta(OstParams(), 1.0, 0.5, p3_spt) == 1.5

    def test_tie_uses_w1(self, p3_spt):
        params = OstParams(w1=WeightFunction.affine(1, 3), w2=WeightFunction.affine(1, 1))
        assert theta(params, 1.0, 1.0, p3_spt) == 3.5

    def test_lighter_mu_uses_w2(self, p3_spt):
        params = OstParams(w1=WeightFunction.affine(1, 3), w2=WeightFunction.affine(1, 1))
        assert theta(params, 0.5, 1.0, p3_spt) == 1.5

    def test_boundary_alpha(self, p3_spt):
        assert theta(OstParams(alpha=1.5), 1.0, 0.5, p3_spt) == 0.0


class TestObjective:
    def test_p3_power2(self):
        assert ost_objective(2.0, [0.5, 0.5], [1.0, 2.0], Power(2.0), 1.0) == pytest.approx(0.875, rel=1e-15)

    def test_zero_differences(self):
        assert ost_objective(4.0, [0.0, 0.0], [1.0, 2.0], ExpMinus(), 1.0) == 0.25

    def test_linear(self):
        for k in (0.1, 1.0, 7.0):
            assert ost_objective(k, [0.5, 0.5], [1.0, 2.0], Linear(), 2.0) == pytest.approx(1 / k + 3.0)

    def test_bad_k(self):
        with pytest.raises(DomainError):
            ost_objective(0.0, [1.0], [1.0], Linear(), 1.0)

    def test_overflow_is_inf(self):
        assert ost_objective(100.0, [1.0], [1.0], ExpSquare(), 1.0) == math.inf

    def test_convex_near_minimum(self, rng):
        # T is convex in 1/k; in k it is only convex around the minimizer, which is
        # where the solver brackets (a factor 2 either side)
        g = random_graph(rng, 40)
        spt = build_spt(g)
        diff, w = aggregate_differences(random_measure(rng, 40, 10), random_measure(rng, 40, 10), spt)
        for phi in (ExpMinus(), Power(1.5), Power(3.0), ExpSquare()):
            _, k_opt, _ = minimize_objective(diff, w, phi, 1.0)
            ks = np.linspace(k_opt / 2, 2 * k_opt, 201)
            v = np.array([ost_objective(k, diff, w, phi, 1.0) for k in ks])
            assert np.all(v[:-2] - 2 * v[1:-1] + v[2:] >= -1e-9 * v.max())

    def test_convex_in_inverse_k(self, rng):
        g = random_graph(rng, 40)
        spt = build_spt(g)
        diff, w = aggregate_differences(random_measure(rng, 40, 10), random_measure(rng, 40, 10), spt)
        s = np.linspace(0.05, 20, 400)
        for phi in (ExpMinus(), Power(1.5)):
            v = np.array([ost_objective(1 / x, diff, w, phi, 1.0) for x in s])
            assert np.all(v[:-2] - 2 * v[1:-1] + v[2:] >= -1e-9 * v.max())


class TestSolve:
    def test_p3_linear(self, p3_spt, p3_pair):
        res = solve_ost(*p3_pair, p3_spt, Linear())
        assert res.value == pytest.approx(2.25, rel=1e-15)
        assert res.k_opt is None and res.theta == 1.5

    def test_p3_power2(self, p3_spt, p3_pair):
        res = solve_ost(*p3_pair, p3_spt, Power(2.0))
        assert res.value == pytest.approx(math.sqrt(0.75) + 0.75, rel=1e-15)
        assert res.k_opt == pytest.approx(2 / math.sqrt(0.75), rel=1e-15)

    def test_p3_power2_general_path(self, p3_spt, p3_pair):
        res = solve_ost(*p3_pair, p3_spt, power_as_custom(2.0))
        assert res.value == pytest.approx(math.sqrt(0.75) + 0.75, rel=1e-10)
        assert res.k_opt == pytest.approx(2 / math.sqrt(0.75), rel=1e-8)
        assert res.iterations > 0

    @pytest.mark.parametrize("phi", [Linear(), Power(2.0), ExpMinus(), ExpSquare()], ids=repr)
    def test_identical_measures(self, p3_spt, phi):
        m = DiscreteMeasure.from_dict({1: 1.0, 2: 3.0})
        res = solve_ost(m, m, p3_spt, phi)
        assert res.value == 0.0 and res.k_opt is None

    def test_inadmissible_alpha(self, p3_spt, p3_pair):
        with pytest.raises(ParameterError, match="alpha"):
            solve_ost(*p3_pair, p3_spt, Linear(), OstParams(alpha=1.6))

    def test_value_above_mass_term(self, rng):
        g = random_graph(rng, 30)
        spt = build_spt(g)
        for _ in range(20):
            mu, nu = random_measure(rng, 30, 8), random_measure(rng, 30, 8)
            for phi in (Linear(), Power(3.0), ExpMinus()):
                res = solve_ost(mu, nu, spt, phi)
                assert res.value >= res.theta * abs(mu.total_mass - nu.total_mass) - 1e-12

    def test_exp2_large_differences(self):
        # huge masses put the unit-k objective deep in overflow; the bracket must back off
        g = random_graph(np.random.default_rng(1), 20)
        spt = build_spt(g)
        mu = DiscreteMeasure.from_dict({3: 1e6, 7: 1.0})
        nu = DiscreteMeasure.from_dict({11: 1e6})
        res = solve_ost(mu, nu, spt, ExpSquare())
        assert math.isfinite(res.value) and res.k_opt > 0

    def test_all_overflow(self):
        phi = Custom(lambda t: np.where(t > 0, np.inf, 0.0), lambda t: t, lambda t: t)
        with pytest.raises(NumericalError):
            minimize_objective(np.array([1.0]), np.array([1.0]), phi, 1.0)


class TestWeights:
    def test_parse(self):
        w = WeightFunction.parse("0.5,2")
        assert (w.a1, w.a0) == (0.5, 2.0)

    @pytest.mark.parametrize("text", ["1", "a,b", "1,2,3"])
    def test_parse_bad(self, text):
        with pytest.raises(ParameterError):
            WeightFunction.parse(text)

    def test_negative(self):
        with pytest.raises(ParameterError):
            WeightFunction.affine(-1, 1)

    def test_table(self, p3_spt, p3_pair):
        w = WeightFunction.from_table([2.0, 5.0, 9.0])
        params = OstParams(w1=w, w2=w)
        assert theta(params, 1.0, 0.5, p3_spt) == 2.5
        assert solve_ost(*p3_pair, p3_spt, Linear(), params).value == pytest.approx(1.5 + 2.5 * 0.5)

    def test_table_wrong_length(self, p3_spt):
        with pytest.raises(ParameterError):
            WeightFunction.from_table([1.0]).values(p3_spt)


class TestParams:
    @pytest.mark.parametrize("kw", [{"b": 0.0}, {"lam": -1.0}, {"alpha": -0.1}, {"b": math.nan}])
    def test_invalid(self, kw):
        with pytest.raises(ParameterError):
            OstParams(**kw)

    def test_symmetric_flag(self):
        assert OstParams().symmetric
        assert not OstParams(w2=WeightFunction.affine(0.5, 1)).symmetric
