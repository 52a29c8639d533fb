import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etcsim import dynamics as D
from etcsim.errors import ArgumentError, DimensionError

vec4 = st.lists(st.floats(-2, 2), min_size=4, max_size=4).map(np.array)


def test_registry_and_validation():
    assert {"scalar_demo", "paper_sec4", "interconnected_demo"} <= set(D.registered())
    for name in D.registered():
        sys = D.get_system(name)
        assert D.validate_system(sys).passed
    with pytest.raises(ArgumentError):
        D.get_system("nope")
    with pytest.raises(ArgumentError):
        D.get_system("paper_sec4", w1=1.5)


def test_wrong_gradient_is_caught():
    bad = D.ControlledSystem("bad", 1, 1, lambda x, u: np.array([u[0]]),
                             lambda x: np.array([-x[0] ** 3]), lambda x: np.array([[-1.0]]))
    rep = D.validate_system(bad)
    assert not rep.passed and rep.messages


def test_benchmark_xi_matches_chain_rule_at_a_point():
    sys = D.get_system("paper_sec4")
    x = np.array([1.0, 1.0, -1.0, 1.0])
    u = sys.g(x)
    # y = 3.5, g = -(0.3*12.25 + 5)*3.5 = -30.3625
    assert u[0] == pytest.approx(-30.3625)
    fx = sys.f(x, u)
    d = -(0.9 * 3.5 ** 2 + 5.0)
    assert D.xi(sys, x, u)[0] == pytest.approx(d * (2.5 * fx[1] + fx[3]))


def test_dimension_check():
    sys = D.get_system("paper_sec4")
    with pytest.raises(DimensionError):
        D.xi(sys, np.zeros(3), np.zeros(1))


@settings(max_examples=100, deadline=None)
@given(vec4, vec4)
def test_r_direct_is_difference_of_feedbacks(x, xk):
    sys = D.get_system("paper_sec4")
    np.testing.assert_allclose(D.r_direct(sys, x, xk), sys.g(x) - sys.g(xk))
    np.testing.assert_array_equal(D.r_direct(sys, x, x), [0.0])


def test_interconnected_stack_reads_only_x():
    sys = D.get_system("interconnected_demo", a=0.5, k=2.0)
    assert sys.n == 2 and sys.labels() == ("z1", "x1")
    assert sys.g(np.array([5.0, 1.0]))[0] == -2.0
    np.testing.assert_array_equal(sys.grad_g(np.zeros(2)), [[0.0, -2.0]])
