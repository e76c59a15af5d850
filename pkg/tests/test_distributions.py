import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heavytraffic.distributions import (
    DistFamily, bernoulli, binomial, geometric, light_tail_certificate, make_discrete_dist,
    moments, parse_dist, parse_family, point, poisson, sample, uniform,
)
from heavytraffic.errors import ValidationError


def test_symmetric_bernoulli():
    d = make_discrete_dist({0: 0.5, 1: 0.5})
    assert d.mean == 0.5 and d.variance == 0.25 and d.max_support == 1


def test_asymmetric_bernoulli():
    d = make_discrete_dist({0: 0.55, 1: 0.45})
    assert d.mean == pytest.approx(0.45, abs=1e-15)
    assert d.variance == pytest.approx(0.45 * 0.55, abs=1e-15)


@pytest.mark.parametrize("pmf", [{0: 0.5, 1: 0.4}, {}, {-1: 1.0}, {0: 1.2, 1: -0.2}])
def test_invalid_pmf(pmf):
    with pytest.raises(ValidationError):
        make_discrete_dist(pmf)


def test_moments_examples():
    assert moments(make_discrete_dist({0: 1.0}), 3) == 0
    assert moments(make_discrete_dist({1: 1.0}), 5) == 1
    assert moments(make_discrete_dist({0: 1 / 3, 1: 1 / 3, 2: 1 / 3}), 2) == pytest.approx(5 / 3, abs=1e-15)
    with pytest.raises(ValidationError):
        moments(point(1), 0)


pmfs = st.dictionaries(st.integers(0, 30), st.floats(0.01, 1.0), min_size=1, max_size=8).map(
    lambda d: {k: v / sum(d.values()) for k, v in d.items()})


@given(pmfs)
def test_moment_identities(pmf):
    d = make_discrete_dist(pmf)
    mean = math.fsum(k * p for k, p in pmf.items())
    var = math.fsum((k - mean) ** 2 * p for k, p in pmf.items())
    assert d.mean == pytest.approx(mean, abs=1e-12)
    assert d.variance == pytest.approx(var, abs=1e-9)
    assert moments(d, 1) == pytest.approx(d.mean, abs=1e-12)
    assert moments(d, 2) - d.mean**2 == pytest.approx(d.variance, abs=1e-9)
    assert d.max_support == max(k for k, p in pmf.items() if p > 0)


@given(pmfs, st.floats(0.01, 2.0))
def test_certificate_jensen(pmf, theta):
    d = make_discrete_dist(pmf)
    cert = light_tail_certificate(d, theta)
    assert cert.bound >= math.exp(theta * d.mean) * (1 - 1e-12)
    assert cert.bound == pytest.approx(sum(p * math.exp(theta * k) for k, p in d.pmf.items()), rel=1e-9)


def test_sampling():
    assert all(sample(point(2), np.random.default_rng(s)) == 2 for s in range(5))
    d = bernoulli(0.5)
    a = d.sample_array(np.random.default_rng(7), 1000)
    b = d.sample_array(np.random.default_rng(7), 1000)
    assert np.array_equal(a, b)
    seq1 = [sample(d, r) for r in [np.random.default_rng(3)] for _ in range(50)]
    r = np.random.default_rng(3)
    assert seq1 == [sample(d, r) for _ in range(50)]
    x = d.sample_array(np.random.default_rng(11), 10**5)
    assert abs(x.mean() - 0.5) <= 4 * 0.5 / math.sqrt(10**5)
    assert set(np.unique(x)) <= {0, 1}


def test_light_tail_examples():
    assert light_tail_certificate(bernoulli(0.45), 1.0).bound == pytest.approx(0.55 + 0.45 * math.e, abs=1e-12)
    assert light_tail_certificate(point(0), 3.0).bound == 1.0
    assert light_tail_certificate(uniform(0, 5), 1e-9).bound == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValidationError):
        light_tail_certificate(bernoulli(0.5), 0.0)


def test_families():
    assert binomial(2, 0.4).mean == pytest.approx(0.8)
    assert binomial(2, 0.4).variance == pytest.approx(0.48)
    assert uniform(0, 2).mean == pytest.approx(1.0)
    p = poisson(1.5)
    assert p.mean == pytest.approx(1.5, abs=1e-8) and sum(p.pmf.values()) == pytest.approx(1.0, abs=1e-12)
    g = geometric(0.5)
    assert g.mean == pytest.approx(1.0, abs=1e-7)
    fam = DistFamily("binomial", 2)
    assert fam.with_mean(0.9).mean == pytest.approx(0.9)
    with pytest.raises(ValidationError):
        fam.with_mean(2.5)
    with pytest.raises(ValidationError):
        DistFamily("bernoulli").with_mean(-0.1)


def test_parsers():
    assert parse_dist("bernoulli p=0.45").mean == pytest.approx(0.45)
    assert parse_dist("uniform 0..2").max_support == 2
    assert parse_dist({"0": 0.25, "2": 0.75}).mean == pytest.approx(1.5)
    assert parse_dist("point 3").mean == 3
    assert parse_family("binomial n=3") == DistFamily("binomial", 3)
    for bad in ("bernoulli", "zipf a=2", "uniform 3", 5):
        with pytest.raises(ValidationError):
            parse_dist(bad)
    with pytest.raises(ValidationError):
        parse_family("uniform")
