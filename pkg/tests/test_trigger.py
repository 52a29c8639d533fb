import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etcsim import gains as G
from etcsim.dynamics import get_system
from etcsim.errors import ArgumentError, UnboundedIntervalError
from etcsim.trigger import (
    TriggerState,
    event_fn,
    event_rows,
    interval_upper_bound,
    is_event,
    predicted_limit_interval,
)


def _state(gb):
    sys = get_system("scalar_demo", k=1.0)
    return TriggerState(gb).reset(0.0, np.array([1.0]), sys), sys


def test_reset_holds_feedback():
    ts, _ = _state(G.linear(10))
    assert ts.u_held[0] == -1.0 and ts.R == 0.0 and not is_event(ts, 5.0)


def test_linear_trigger_fires_at_T():
    ts, _ = _state(G.linear(10))
    ts.absorb([0.3])
    assert event_fn(ts, 0.05) < 0
    assert event_fn(ts, 0.1) == pytest.approx(0.0, abs=1e-15)
    assert is_event(ts, 0.1000001)


def test_accumulate_trapezoid_is_exact_for_linear_xi():
    ts, _ = _state(G.linear(10))
    t = np.linspace(0.0, 1.0, 11)
    ts.accumulate([(ti, [2.0 * ti]) for ti in t])
    assert ts.r[0] == pytest.approx(1.0)
    assert ts.R == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        ts.accumulate([(0.5, [0.0])])


def test_predicted_interval():
    assert predicted_limit_interval(G.linear(10)) == pytest.approx(0.1)
    gb = G.scale(1 / 0.99, G.polynomial([70, 40, 15, 3.56, 0.27]))
    assert predicted_limit_interval(gb) == pytest.approx(0.99 / 70)
    assert predicted_limit_interval(G.power(1, 0.5)) is None


def test_interval_upper_bound():
    assert interval_upper_bound(G.linear(10), 3.0) == pytest.approx(0.1)
    with pytest.raises(UnboundedIntervalError):
        interval_upper_bound(G.from_callable(lambda s: np.asarray(s) ** 2, slope=0.0), 1.0)
    with pytest.raises(ArgumentError):
        interval_upper_bound(G.linear(1), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=1, max_size=4).filter(lambda c: c[0] > 1e-2),
       st.floats(1e-3, 10.0))
def test_bound_never_exceeds_predicted(coeffs, r_sup):
    # gamma_bar(s)/s is nondecreasing for nonnegative polynomials
    gb = G.polynomial(coeffs)
    assert interval_upper_bound(gb, r_sup) == pytest.approx(predicted_limit_interval(gb),
                                                            rel=1e-12)


def test_event_rows():
    rows = event_rows([0.1, 0.2], [0.1, 0.1], [1.0, 0.5])
    assert rows[1].k == 2 and math.isclose(rows[1].t_k, 0.2)
