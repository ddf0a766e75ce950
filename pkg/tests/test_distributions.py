import math

import numpy as np
import pytest
from scipy import integrate, stats

from covshift_knn.distributions import (
    Empirical,
    Exponential,
    Gaussian,
    Pareto,
    Uniform,
    ball_mass,
    cdf,
    from_dict,
    pdf,
    sample,
)
from covshift_knn.neighbors import PointCloud

FAMILIES = [Uniform(0, 1), Uniform(-2, 3), Exponential(0.5), Exponential(2), Pareto(1), Pareto(3.5),
            Gaussian(), Gaussian(1, 3)]


@pytest.mark.parametrize("spec", FAMILIES, ids=repr)
def test_pdf_integrates_to_one(spec):
    lo, hi = spec.support
    total, _ = integrate.quad(lambda x: float(spec.pdf(x)), lo, hi, epsabs=1e-12, epsrel=1e-10, limit=500)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("spec", FAMILIES, ids=repr)
def test_sampler_matches_cdf(spec):
    draws = sample(spec, 100_000, np.random.default_rng(11)).points[:, 0]
    ks = stats.kstest(draws, lambda x: spec.cdf(x)).statistic
    assert ks < 0.01


@pytest.mark.parametrize("spec", FAMILIES, ids=repr)
def test_density_bound(spec):
    lo, hi = spec.support
    grid = np.linspace(max(lo, -50), min(hi, 50), 20001)
    assert np.max(spec.pdf(grid)) <= spec.density_bound * (1 + 1e-12)


def test_uniform_draws_in_support():
    pts = sample(Uniform(0, 1), 1000, np.random.default_rng(0)).points
    assert np.all((pts >= 0) & (pts <= 1))


def test_pareto_draws_at_least_one():
    assert np.all(sample(Pareto(0.7), 10_000, np.random.default_rng(1)).points >= 1.0)


def test_exponential_mean_clt():
    draws = sample(Exponential(2), 10**6, np.random.default_rng(2)).points
    # mean 1/2, standard deviation 1/2
    assert abs(draws.mean() - 0.5) < 3 * 0.5 / math.sqrt(10**6)


def test_sampling_is_deterministic():
    a = sample(Pareto(2), 50, np.random.default_rng(5)).points
    b = sample(Pareto(2), 50, np.random.default_rng(5)).points
    np.testing.assert_array_equal(a, b)


def test_pointwise_values():
    assert pdf(Pareto(1), 2.0) == pytest.approx(0.25, rel=1e-15)
    assert cdf(Exponential(3), 0.0) == 0.0
    assert cdf(Gaussian(), 0.0) == 0.5
    assert pdf(Pareto(2), 0.5) == 0.0
    assert pdf(Exponential(1), -1.0) == 0.0


class TestBallMass:
    def test_exponential_closed_form(self):
        assert ball_mass(Exponential(1), 0.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)

    def test_uniform_interval_length(self):
        assert ball_mass(Uniform(0, 1), 0.5, 0.2) == pytest.approx(0.4, rel=1e-14)

    @pytest.mark.parametrize("spec", FAMILIES, ids=repr)
    def test_total_mass(self, spec):
        assert ball_mass(spec, 1.3, 1e9) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("spec", FAMILIES, ids=repr)
    def test_monotone_in_radius(self, spec):
        rs = np.linspace(0.0, 5.0, 200)
        for x in (-1.0, 0.3, 1.5, 4.0):
            m = ball_mass(spec, np.full_like(rs, x), rs)
            assert np.all(np.diff(m) >= -1e-15)
            assert np.all((m >= 0) & (m <= 1))

    def test_gaussian_far_tail_keeps_precision(self):
        # mass of [11, 13] under N(0, 1), independent high-precision evaluation
        import mpmath
        exact = (mpmath.erfc(11 / mpmath.sqrt(2)) - mpmath.erfc(13 / mpmath.sqrt(2))) / 2
        assert ball_mass(Gaussian(), 12.0, 1.0) == pytest.approx(float(exact), rel=1e-10)
        assert ball_mass(Gaussian(), -12.0, 1.0) == pytest.approx(float(exact), rel=1e-10)

    def test_pareto_straddling_support_edge(self):
        # [0.8, 1.2] meets the support on [1, 1.2]
        assert ball_mass(Pareto(2), 1.0, 0.2) == pytest.approx(1 - 1.2 ** -2, rel=1e-14)

    def test_multivariate_uniform_unsupported(self):
        with pytest.raises(ValueError):
            ball_mass(Uniform(0, 1, dim=2), np.zeros(2), 0.1)


class TestValidation:
    @pytest.mark.parametrize("make", [lambda: Exponential(0), lambda: Pareto(-1), lambda: Gaussian(0, 0),
                                      lambda: Uniform(1, 1), lambda: Uniform(0, 1, dim=0)])
    def test_bad_parameters(self, make):
        with pytest.raises(ValueError):
            make()

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            sample(Exponential(1), 0, np.random.default_rng(0))


class TestSerialization:
    @pytest.mark.parametrize("spec", FAMILIES + [Uniform(0, 2, dim=3)], ids=repr)
    def test_round_trip(self, spec):
        assert from_dict(spec.to_dict()) == spec

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="unknown"):
            from_dict({"family": "cauchy"})

    def test_bad_parameter_name(self):
        with pytest.raises(ValueError):
            from_dict({"family": "pareto", "shape": 2})

    def test_empirical_from_csv(self, tmp_path):
        (tmp_path / "pts.csv").write_text("1,2\n3,4\n5,6\n")
        spec = from_dict({"family": "empirical", "path": "pts.csv"}, base_dir=tmp_path)
        assert spec.dim == 2
        draws = spec.sample(100, np.random.default_rng(0)).points
        assert set(map(tuple, draws)) <= {(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)}

    def test_empirical_has_no_density(self):
        spec = Empirical(PointCloud(np.zeros((3, 1))))
        with pytest.raises(ValueError):
            spec.pdf(0.0)
