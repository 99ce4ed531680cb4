import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from visa_skill.betadist import beta_inverse_cdf, betainc, quantile_targets

shape = st.floats(0.05, 20.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), shape, shape)
def test_betainc_matches_scipy(x, a, b):
    assert betainc(x, a, b) == pytest.approx(special.betainc(a, b, x), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.001, 0.999), shape, shape)
def test_bisection_inverts_cdf(q, a, b):
    x = beta_inverse_cdf(q, a, b, method="bisect")
    assert abs(betainc(x, a, b) - q) <= 1e-10 or x in (0.0, 1.0) or _flat(x, a, b, q)


def _flat(x, a, b, q):
    # the CDF can jump by more than 1e-10 between adjacent doubles when the density blows up
    lo, hi = np.nextafter(x, 0.0), np.nextafter(x, 1.0)
    return betainc(lo, a, b) <= q <= betainc(hi, a, b)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.001, 0.999), shape, shape)
def test_inverse_matches_scipy(q, a, b):
    x = beta_inverse_cdf(q, a, b)
    assert x == pytest.approx(special.betaincinv(a, b, q), abs=1e-8)


@pytest.mark.parametrize("beta", [0.001, 0.5, 2.0, 7.0])
def test_closed_form_alpha_one_against_bisection(beta):
    for q in (0.01, 0.3, 0.77):
        assert beta_inverse_cdf(q, 1.0, beta) == pytest.approx(
            beta_inverse_cdf(q, 1.0, beta, method="bisect"), abs=1e-9)


def test_closed_form_beta_one():
    assert beta_inverse_cdf(0.25, 2.0, 1.0) == pytest.approx(0.5, abs=1e-15)


def test_endpoints():
    assert beta_inverse_cdf(0.0, 2.0, 3.0) == 0.0
    assert beta_inverse_cdf(1.0, 2.0, 3.0) == 1.0


def test_quantile_targets_monotone():
    t = quantile_targets(32, 2.0, 5.0)
    assert len(t) == 32 and all(a < b for a, b in zip(t, t[1:]))


def test_default_prior_targets_near_one():
    t = quantile_targets(32, 1.0, 0.001)
    assert min(t) > 1 - 1e-5
    assert 1 - t[0] == pytest.approx((1 - 1 / 64) ** 1000, rel=1e-9)


@pytest.mark.parametrize("args", [(0.5, 0.0, 1.0), (0.5, 1.0, -1.0)])
def test_rejects_bad_shapes(args):
    with pytest.raises(ValueError):
        beta_inverse_cdf(*args)


def test_betainc_symmetry():
    for x in (0.1, 0.5, 0.93):
        assert betainc(x, 2.5, 0.7) == pytest.approx(1 - betainc(1 - x, 0.7, 2.5), abs=1e-14)
    assert math.isclose(betainc(0.5, 3.0, 3.0), 0.5, abs_tol=1e-15)
