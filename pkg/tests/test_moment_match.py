import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicevol.errors import DegenerateVarianceError, DomainError, NonPositiveMeanError
from slicevol.moment_match import (
    MomentState,
    match_gamma,
    match_gamma_arrays,
    propagate_batch,
    propagate_moments,
)
from slicevol.sde_core import SdeParams, constant_prediction, terminal_values
from slicevol.slice_data import PiecewiseLinear


def closed_form(v0, p, theta, alpha, t):
    """Constant-coefficient solution of the moment system (theta_t = theta0)."""
    c = 2.0 * alpha * theta
    d = c * p / (2.0 * theta)
    b = c * v0 / theta
    a = v0 * v0 - b - d
    return v0 * math.exp(-theta * t), a * math.exp(-2 * theta * t) + b * math.exp(-theta * t) + d


def test_zero_start_stays_zero():
    f = PiecewiseLinear([0.0, 1.0, 2.0], [50.0, 80.0, 30.0])
    m = propagate_moments(0.0, 0.0, 2.0, f, SdeParams(1.0, 3.0))
    assert m.m1 == 0.0
    assert m.m2 > 0


def test_closed_form_constant_p():
    f = constant_prediction(100.0, -1.0, 10.0)
    m = propagate_moments(5.0, 0.0, 1.0, f, SdeParams(1.0, 2.0))
    m1, m2 = closed_form(5.0, 100.0, 1.0, 2.0, 1.0)
    assert m.m1 == pytest.approx(5 * math.exp(-1), rel=1e-8)
    assert m.m1 == pytest.approx(m1, rel=1e-8)
    assert m.m2 == pytest.approx(m2, rel=1e-8)


@given(
    frac=st.floats(-0.9, 2.0),
    p=st.floats(20, 500),
    theta=st.floats(0.1, 3),
    alpha=st.floats(0.1, 5),
    t=st.floats(0.1, 3),
)
def test_closed_form_property(frac, p, theta, alpha, t):
    v0 = frac * p  # start X = p + v0 stays positive
    f = constant_prediction(p, -1.0, 10.0)
    # finer than the default so theta * h stays small for theta up to 3
    m = propagate_moments(v0, 0.0, t, f, SdeParams(theta, alpha), steps=512)
    m1, m2 = closed_form(v0, p, theta, alpha, t)
    assert m.m1 == pytest.approx(m1, rel=1e-8, abs=1e-12)
    assert m.m2 == pytest.approx(m2, rel=1e-8)
    assert m.m2 >= m.m1**2 - 1e-9 * max(1.0, m.m1**2)


def test_match_gamma_examples():
    g = match_gamma(MomentState(1.0, 5.0), 1.0)  # mu 2, var 4
    assert (g.rate, g.shape) == pytest.approx((0.5, 1.0))
    g = match_gamma(MomentState(0.0, 100.0), 100.0)
    assert (g.rate, g.shape) == pytest.approx((1.0, 100.0))


@given(m1=st.floats(-100, 100), var=st.floats(1e-3, 1e5), p=st.floats(101, 1e4))
def test_match_gamma_round_trip(m1, var, p):
    g = match_gamma(MomentState(m1, var + m1 * m1), p)
    assert g.mean == pytest.approx(m1 + p, rel=1e-12)
    assert g.var == pytest.approx(var, rel=1e-9)


def test_match_gamma_errors():
    with pytest.raises(DegenerateVarianceError):
        match_gamma(MomentState(1.0, 1.0), 5.0)
    with pytest.raises(NonPositiveMeanError):
        match_gamma(MomentState(-5.0, 26.0), 5.0)
    g = match_gamma(MomentState(1.0, 1.0), 5.0, floor=True)
    assert g.var == pytest.approx(1e-12 * 36.0)


def test_match_gamma_arrays_counts_floors():
    shape, rate, n = match_gamma_arrays(np.array([1.0, 0.0]), np.array([1.0, 4.0]), np.array([5.0, 2.0]))
    assert n == 1
    assert shape[1] / rate[1] == pytest.approx(2.0)
    assert shape[1] / rate[1] ** 2 == pytest.approx(4.0)


def test_domain_errors():
    f = PiecewiseLinear([0.0, 1.0, 2.0], [10.0, 0.0, 10.0])
    with pytest.raises(DomainError):
        propagate_moments(1.0, 0.0, 2.0, f, SdeParams(1.0, 1.0))
    with pytest.raises(DomainError):
        propagate_moments(1.0, 1.0, 1.0, f, SdeParams(1.0, 1.0))


def test_rk4_order():
    # steep slope so theta_t varies within the interval
    args = ([30.0], [200.0], [10.0], [1.0], 1.0, 40.0)
    r = [propagate_batch(*args, steps=n)[1][0] for n in (16, 32, 64)]
    ratio = (r[0] - r[1]) / (r[1] - r[2])
    assert 14 < ratio < 20

    # representative slice interval at the default resolution
    typical = ([30.0], [900.0], [700.0], [1.0], 1.0, 25.0)
    fine = [np.array(propagate_batch(*typical, steps=n)) for n in (64, 128)]
    np.testing.assert_allclose(fine[0], fine[1], rtol=1e-6)


def test_stationary_limit():
    p, alpha = 300.0, 4.0
    f = constant_prediction(p, -1.0, 100.0)
    m = propagate_moments(20.0, 0.0, 50.0, f, SdeParams(1.0, alpha))
    g = match_gamma(m, p)
    assert g.shape == pytest.approx(p / alpha, rel=1e-3)
    assert g.rate == pytest.approx(1 / alpha, rel=1e-3)


def test_monotone_decay():
    f = PiecewiseLinear([0.0, 1.0, 2.0, 3.0], [40.0, 200.0, 90.0, 15.0])
    params = SdeParams(0.7, 6.0)
    ts = np.linspace(0.05, 3.0, 60)
    m1 = [abs(propagate_moments(-25.0, 0.0, t, f, params).m1) for t in ts]
    assert np.all(np.diff(m1) <= 1e-12)


def test_backends_agree():
    rng = np.random.default_rng(0)
    n = 50
    args = (rng.normal(0, 20, n), rng.uniform(20, 900, n), rng.uniform(20, 900, n), rng.uniform(0.2, 1, n), 1.3, 7.0)
    a = propagate_batch(*args, use_numba=True)
    b = propagate_batch(*args, use_numba=False)
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_monte_carlo_oracle():
    f = PiecewiseLinear([0.0, 1.0, 2.0], [100.0, 60.0, 120.0])
    params = SdeParams(1.0, 2.0)
    v0, t_end = 5.0, 1.6
    m = propagate_moments(v0, 0.0, t_end, f, params)
    x = terminal_values(f, 0.0, t_end, 100.0 + v0, params, dt=0.001, n_paths=10**6, seed=4)
    v = x - float(f(t_end))
    n = v.size
    assert abs(v.mean() - m.m1) < 3 * v.std() / math.sqrt(n)
    assert abs(np.mean(v * v) - m.m2) < 3 * np.std(v * v) / math.sqrt(n)
