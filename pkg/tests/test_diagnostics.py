import math

import mpmath
import numpy as np
import pytest

from covshift_knn.diagnostics import (
    DiagnosticReport,
    MassPropertyConstants,
    Verdict,
    check_dre_numeric,
    check_mass_properties,
    check_pseudo_moment,
    dre_threshold,
    exponential_constants,
    improper_integral,
    pareto_constants,
    tail_functional,
)
from covshift_knn.distributions import Exponential, Gaussian, Pareto, Uniform


def exp_tp(lp, lq, t):
    """Closed form of int q / p^t for exponential designs (finite when t lp < lq)."""
    return lq / lp ** t / (lq - t * lp)


class TestThresholds:
    def test_exponential(self):
        assert dre_threshold(Exponential(1), Exponential(2)) == 2

    def test_pareto(self):
        assert dre_threshold(Pareto(1), Pareto(3)) == 1.5

    def test_uniform(self):
        assert dre_threshold(Uniform(0, 1), Uniform(0, 1)) == math.inf

    def test_unsupported_pair(self):
        with pytest.raises(ValueError):
            dre_threshold(Exponential(1), Pareto(2))


class TestDRENumeric:
    def test_below_threshold(self):
        rep = check_dre_numeric(Exponential(1), Exponential(2), 1.5)
        assert rep.verdict is Verdict.SATISFIED
        assert rep.detail["integral"] == pytest.approx(exp_tp(1, 2, 1.5), rel=1e-9)

    def test_at_threshold_constant_integrand(self):
        rep = check_dre_numeric(Exponential(1), Exponential(2), 2.0)
        assert rep.verdict is Verdict.VIOLATED
        assert rep.witness["gamma"] == 2.0

    def test_above_threshold(self):
        assert check_dre_numeric(Exponential(1), Exponential(2), 2.5).violated

    def test_pareto_value_against_closed_form(self):
        # int_1^inf 3 x^-4 / x^(-2 * 0.75) dx = 3 / 1.5
        rep = check_dre_numeric(Pareto(1), Pareto(3), 0.75)
        assert rep.satisfied
        assert rep.detail["integral"] == pytest.approx(2.0, rel=1e-5)

    def test_uniform_pair(self):
        assert check_dre_numeric(Uniform(0, 1), Uniform(0, 1), 5.0).satisfied

    def test_target_outside_source_support(self):
        rep = check_dre_numeric(Pareto(1), Exponential(1), 0.1)
        assert rep.violated and rep.witness["reason"] == "q > 0 where p = 0"

    def test_gaussian_pair(self):
        # q / p^g ~ exp(-(1 - g) x^2 / 2): finite iff g < 1
        assert check_dre_numeric(Gaussian(), Gaussian(), 0.9).satisfied
        assert check_dre_numeric(Gaussian(), Gaussian(), 1.1).violated

    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(ValueError):
            check_dre_numeric(Exponential(1), Exponential(2), 0.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_threshold_consistency_random(self, seed):
        rng = np.random.default_rng(seed)
        for P, Q in [(Exponential(rng.uniform(0.2, 5)), Exponential(rng.uniform(0.2, 5))),
                     (Pareto(rng.uniform(0.3, 5)), Pareto(rng.uniform(0.3, 5)))]:
            th = dre_threshold(P, Q)
            assert check_dre_numeric(P, Q, 0.9 * th).satisfied
            assert check_dre_numeric(P, Q, 1.1 * th).violated


class TestPseudoMoment:
    # int_1^inf 3 x^(-4 / (rho + 1)) dx is finite iff 4 / (rho + 1) > 1, i.e. rho < 3
    def test_pareto_heavy_target_small_rho(self):
        assert check_pseudo_moment(Pareto(3), 2.0).satisfied

    def test_pareto_heavy_target_large_rho(self):
        rep = check_pseudo_moment(Pareto(3), 4.0)
        assert rep.violated and rep.witness["rho"] == 4.0

    def test_pareto_value(self):
        # rho = 1: int_1^inf sqrt(3) x^-2 dx = sqrt(3)
        rep = check_pseudo_moment(Pareto(3), 1.0)
        assert rep.detail["integral"] == pytest.approx(math.sqrt(3), rel=1e-5)

    def test_exponential_any_rho(self):
        assert check_pseudo_moment(Exponential(2), 100.0).satisfied

    def test_rejects_nonpositive_rho(self):
        with pytest.raises(ValueError):
            check_pseudo_moment(Exponential(1), -1.0)


class TestTailFunctional:
    def test_tp_at_one(self):
        assert tail_functional(Exponential(1), Exponential(2), 1.0) == pytest.approx(2.0, abs=1e-8)

    def test_tp_small_t_is_total_mass(self):
        assert tail_functional(Exponential(1), Exponential(2), 1e-9) == pytest.approx(1.0, abs=1e-8)

    def test_tp_near_threshold_large_but_finite(self):
        val = tail_functional(Exponential(1), Exponential(2), 1.99)
        assert val == pytest.approx(exp_tp(1, 2, 1.99), rel=1e-8)
        assert val > 100

    def test_tp_beyond_threshold_is_infinite(self):
        assert tail_functional(Exponential(1), Exponential(2), 2.2) == math.inf

    def test_tq_closed_form(self):
        # int 2^(1-t) e^(-2 (1-t) x) dx = 2^(1-t) / (2 (1 - t))
        t = 0.4
        assert tail_functional(None, Exponential(2), t, "TQ") == pytest.approx(2 ** (1 - t) / (2 * (1 - t)), rel=1e-9)

    def test_bad_which(self):
        with pytest.raises(ValueError):
            tail_functional(Exponential(1), Exponential(2), 0.5, "TR")

    def test_jensen_monotone_tp(self):
        ts = [0.2 * j for j in range(1, 10)]
        vals = [tail_functional(Exponential(1), Exponential(2), t) ** (1 / t) for t in ts]
        assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))

    def test_jensen_monotone_tq_pareto(self):
        rho = 2.0
        ts = np.linspace(0.05, rho / (rho + 1), 8)
        vals = [tail_functional(None, Pareto(3), t, "TQ") ** (1 / t) for t in ts]
        assert all(b >= a - 1e-6 for a, b in zip(vals, vals[1:]))


class TestImproperIntegral:
    def test_finite_interval(self):
        verdict, value, _ = improper_integral(lambda x: 0.0, (0.0, 2.0))
        assert verdict is Verdict.SATISFIED and value == pytest.approx(2.0)

    def test_two_sided_gaussian(self):
        verdict, value, _ = improper_integral(lambda x: -x * x / 2, (-math.inf, math.inf))
        assert verdict is Verdict.SATISFIED
        assert value == pytest.approx(math.sqrt(2 * math.pi), rel=1e-10)

    def test_harmonic_plateau_diverges(self):
        verdict, value, _ = improper_integral(lambda x: -math.log(x), (1.0, math.inf))
        assert verdict is Verdict.VIOLATED and value == math.inf

    def test_budget_exhaustion_is_inconclusive(self):
        verdict, _, _ = improper_integral(lambda x: -1e-4 * x, (0.0, math.inf), budget=3)
        assert verdict is Verdict.INCONCLUSIVE


class TestMassProperties:
    @pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
    def test_exponential_textbook_constants(self, lam):
        rep = check_mass_properties(Exponential(lam), exponential_constants(lam),
                                    np.linspace(0, 10 / lam, 401), np.linspace(0.05, 1.0, 20))
        assert rep.satisfied, rep.summary()

    def test_exponential_upper_bound_is_tight(self):
        rep = check_mass_properties(Exponential(1), exponential_constants(1), np.linspace(1, 5, 9), [1.0])
        assert rep.detail["max_ratio"] == pytest.approx(2 * math.sinh(1), rel=1e-12)

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_pareto_upper_bound_holds(self, alpha):
        c = pareto_constants(alpha)
        rep = check_mass_properties(Pareto(alpha), MassPropertyConstants(1e-9, c.r_minus, c.a_plus, c.r_plus),
                                    np.linspace(1, 50, 981), np.linspace(0.025, 0.5, 20))
        assert rep.satisfied, rep.summary()

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_pareto_lower_bound_fails_at_support_edge(self, alpha):
        # at x = 1 the ball only sees [1, 1 + r]: mass / (p(1) r) = (1 - (1 + r)^-alpha) / (alpha r) < 1 < 2
        rep = check_mass_properties(Pareto(alpha), pareto_constants(alpha), [1.0], [0.5])
        assert rep.violated
        assert rep.witness["property"] == "minimal"
        assert rep.witness["ratio"] == pytest.approx((1 - 1.5 ** -alpha) / (alpha * 0.5), rel=1e-12)

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_pareto_lower_bound_holds_away_from_edge(self, alpha):
        # the density is convex, so symmetric balls inside the support carry at least 2 p(x) r
        rep = check_mass_properties(Pareto(alpha), pareto_constants(alpha),
                                    np.linspace(1.5, 50, 971), np.linspace(0.025, 0.5, 20))
        assert rep.satisfied, rep.summary()

    def test_gaussian_upper_bound_fails_in_tail(self):
        c = MassPropertyConstants(0.1, 1.0, 10.0, 1.0)
        rep = check_mass_properties(Gaussian(), c, np.linspace(0, 12, 121), [1.0])
        assert rep.violated and rep.witness["property"] == "maximal"
        x, r = rep.witness["x"], rep.witness["r"]
        exact = (mpmath.ncdf(x + r) - mpmath.ncdf(x - r)) / (mpmath.npdf(x) * r)
        assert rep.witness["ratio"] == pytest.approx(float(exact), rel=1e-8)

    def test_gaussian_far_tail_ratio_against_mills_bounds(self):
        x, r = 12.0, 1.0
        rep = check_mass_properties(Gaussian(), MassPropertyConstants(0.1, 1, 10, 1), [x], [r])
        growth = math.exp(x * r - r * r / 2)
        # sf(y) < phi(y) / y bounds the ball mass above; the ball holds at least [x - r, x - r + r/2]
        assert growth / (x + r) / r * 0.5 < rep.witness["ratio"] < growth / ((x - r) * r)
        again = check_mass_properties(Gaussian(), MassPropertyConstants(0.1, 1, 10, 1), [x], [r])
        assert again.witness == rep.witness

    def test_uniform_fits_with_one_and_two(self):
        rep = check_mass_properties(Uniform(0, 1), MassPropertyConstants(1.0, 0.5, 2.0, 0.5),
                                    np.linspace(-0.5, 1.5, 201), np.linspace(0.01, 0.5, 50))
        assert rep.satisfied, rep.summary()

    def test_invalid_grids(self):
        c = exponential_constants(1)
        with pytest.raises(ValueError):
            check_mass_properties(Exponential(1), c, [], [0.5])
        with pytest.raises(ValueError):
            check_mass_properties(Exponential(1), c, [1.0], [2.0])

    def test_constants_positive(self):
        with pytest.raises(ValueError):
            MassPropertyConstants(0, 1, 1, 1)


def test_violated_report_needs_witness():
    with pytest.raises(ValueError):
        DiagnosticReport(Verdict.VIOLATED)
