import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etcsim import gains as G
from etcsim.errors import (
    ArgumentError,
    DomainError,
    GainRangeError,
    SlopeEstimationError,
)

XI_X = G.polynomial([70, 40, 15, 3.56, 0.27])

coef = st.floats(0.0, 3.0, allow_nan=False)
poly_coeffs = st.lists(coef, min_size=1, max_size=4).filter(lambda c: c[0] > 1e-3)
pos = st.floats(1e-4, 5.0)


# ------------------------------------------------------------- examples

def test_evaluate_examples():
    assert G.evaluate(G.linear(2.0), 3.0) == 6.0
    # 0.27 + 3.56 + 15 + 40 + 70
    assert XI_X.scalar(1.0) == pytest.approx(128.83, abs=1e-12)
    for g in (XI_X, G.power(2, 0.5), G.identity()):
        assert G.evaluate(g, 0.0) == 0.0


def test_negative_argument_rejected():
    with pytest.raises(DomainError):
        G.evaluate(G.linear(1.0), -1e-9)


def test_compose_examples():
    sq = G.polynomial([0.0, 1.0])
    assert G.compose(G.linear(2), sq).scalar(3.0) == pytest.approx(18.0)
    s = np.linspace(0, 4, 9)
    np.testing.assert_array_equal(G.compose(G.identity(), XI_X)(s), XI_X(s))
    assert G.compose(G.linear(2), G.linear(5)).slope == 10.0


def test_max_examples():
    assert G.max_of([G.identity(), G.linear(2)]).scalar(1.0) == 2.0
    m = G.max_of([G.polynomial([0.0, 1.0]), G.identity()])
    assert m.scalar(0.5) == 0.5
    assert m.scalar(2.0) == 4.0
    with pytest.raises(ArgumentError):
        G.max_of([])


def test_scale_examples():
    assert G.scale(1 / 0.99, G.linear(70)).slope == pytest.approx(70.70707070707071)
    assert G.scale(2, G.polynomial([0.0, 1.0])).scalar(3.0) == 18.0
    np.testing.assert_array_equal(G.scale(1, XI_X)(np.array([0.3, 2.0])), XI_X(np.array([0.3, 2.0])))
    with pytest.raises(ArgumentError):
        G.scale(0.0, XI_X)


def test_inverse_examples():
    sq = G.polynomial([0.0, 1.0], domain_hint=10.0)
    assert G.inverse_eval(sq, 4.0) == pytest.approx(2.0, abs=1e-10)
    assert G.inverse_eval(sq, 0.0) == 0.0
    assert G.inverse_eval(XI_X, 128.83) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(GainRangeError):
        G.inverse_eval(sq, 1e6)


def test_slope_examples():
    assert G.estimate_slope(G.polynomial([3.0, 1.0])) == pytest.approx(3.0, rel=1e-6)
    assert G.estimate_slope(G.power(1.0, 0.5)) == math.inf
    gb = G.scale(1 / 0.99, XI_X)
    assert G.estimate_slope(gb) == pytest.approx(70.707, rel=1e-4)
    assert round(G.slope_at_zero(gb), 1) == 70.7


def test_slope_estimation_error_on_oscillation():
    bad = G.from_callable(lambda s: s * (2.0 + np.sin(1.0 / np.asarray(s, dtype=float))))
    with pytest.raises(SlopeEstimationError) as exc:
        G.estimate_slope(bad)
    assert exc.value.diagnostics


def test_k_infinity_examples():
    assert G.check_k_infinity(G.identity(), [0.1, 1, 10]).passed
    rep = G.check_k_infinity(G.from_callable(np.sin), [1, 2, 3])
    assert not rep.passed
    assert G.check_k_infinity(G.polynomial([5.0, 1.0])).passed


def test_small_gain_examples():
    assert G.check_small_gain(G.linear(0.5), G.identity())
    res = G.check_small_gain(G.linear(2.0), G.identity())
    assert not res and res.witness is not None
    contr = G.from_callable(lambda s: s / (1 + s))
    assert G.check_small_gain(contr, G.identity())


def test_build_gamma_bar_examples():
    gb = G.build_gamma_bar(G.polynomial([0.0, 1.0]), 2.0, 1.0)
    assert gb.scalar(3.0) == pytest.approx(2 * 9 + 3)
    assert G.slope_at_zero(gb) == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        G.build_gamma_bar(G.linear(70), 1.01, 0.0)
    assert G.slope_at_zero(G.build_gamma_bar(G.power(1, 0.5), 2.0, 3.0)) == math.inf


# ----------------------------------------------------------- properties

@settings(max_examples=200, deadline=None)
@given(poly_coeffs, poly_coeffs, poly_coeffs, pos)
def test_compose_associative(a, b, c, s):
    A, B, C = G.polynomial(a), G.polynomial(b), G.polynomial(c)
    lhs = G.compose(A, G.compose(B, C)).scalar(s)
    rhs = G.compose(G.compose(A, B), C).scalar(s)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(poly_coeffs, poly_coeffs)
def test_slope_chain_rule(a, b):
    A, B = G.polynomial(a), G.polynomial(b)
    assert G.slope_at_zero(G.compose(A, B)) == pytest.approx(A.slope * B.slope, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(poly_coeffs, poly_coeffs, st.lists(st.floats(0.0, 10.0), min_size=1, max_size=5))
def test_max_idempotent_commutative(a, b, s):
    A, B = G.polynomial(a), G.polynomial(b)
    s = np.asarray(s)
    np.testing.assert_array_equal(G.max_of([A, A])(s), A(s))
    np.testing.assert_array_equal(G.max_of([A, B])(s), G.max_of([B, A])(s))


@settings(max_examples=200, deadline=None)
@given(poly_coeffs, st.floats(0.0, 20.0))
def test_inverse_is_right_inverse(a, s):
    g = G.polynomial(a)
    y = g.scalar(s)
    s_hat = G.inverse_eval(g, y, tol=0.0, expand=True)
    assert abs(g.scalar(s_hat) - y) <= 1e-12 * max(1.0, y)
    assert abs(G.inverse_eval(g, y, expand=True) - s) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(poly_coeffs, st.floats(1.0, 3.0, exclude_min=True), st.floats(1e-3, 2.0))
def test_gamma_bar_dominates(a, eps1, eps2):
    g = G.polynomial(a)
    gb = G.build_gamma_bar(g, eps1, eps2)
    s = G.default_grid()
    assert np.all(gb(s) >= eps1 * g(s) * (1 - 1e-15))
    assert np.all(gb(s) >= eps2 * s * (1 - 1e-15))


@settings(max_examples=100, deadline=None)
@given(poly_coeffs)
def test_declared_slope_matches_numeric(a):
    g = G.polynomial(a)
    assert G.estimate_slope(g) == pytest.approx(g.slope, rel=1e-5)


def test_inverse_gain_roundtrip():
    inv = G.inverse(XI_X)
    y = np.array([0.0, 1.0, 128.83, 1e4])
    np.testing.assert_allclose(XI_X(inv(y)), y, rtol=1e-13, atol=0)
    assert inv.slope == pytest.approx(1 / 70)
