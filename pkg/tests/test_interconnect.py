import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etcsim import gains as G
from etcsim import interconnect as ic
from etcsim.dynamics import get_system
from etcsim.errors import ArgumentError, SmallGainError

L = G.linear
grid = G.default_grid()


def test_demo_certificate_composition():
    cert = ic.demo_certificate(0.5, 2.0)
    gz, gx = ic.closed_loop_gains(cert)
    assert gz.slope == pytest.approx(1.0) and gx.slope == pytest.approx(1.0)
    # max{3ka * 1, 3k^2 * 1, 3k} = 12 for a = 0.5, k = 2
    assert ic.triggering_gain(cert).slope == pytest.approx(12.0)
    assert ic.joint_state_gain(cert).slope == pytest.approx(24.0)
    assert set(cert.validate()) == set(G for G in ic.GAIN_FIELDS if G != "gamma_z_r")


def test_small_gain_violation_has_witness():
    cert = ic.demo_certificate().replace(gamma_z_x=L(2.0), gamma_x_z=L(1.0))
    with pytest.raises(SmallGainError) as exc:
        ic.closed_loop_gains(cert)
    assert exc.value.witness is not None


def test_demo_rejects_bad_parameters():
    with pytest.raises(ArgumentError):
        ic.demo_certificate(a=0.0)


def test_autonomous_z_reduces():
    cert = ic.preset_autonomous_z(L(0.7), L(2.0), L(3.0), L(4.0), L(5.0))
    assert cert.gamma_z_x.is_zero and cert.gamma_z_r.is_zero
    np.testing.assert_allclose(ic.triggering_gain(cert)(grid), ic.reduced_gamma(cert)(grid))


def test_cascade_z():
    cert = ic.preset_cascade_z(L(1.5), L(2.0), L(4.0), L(1.0))
    gz, gx = ic.closed_loop_gains(cert)
    assert gz.slope == pytest.approx(3.0) and gx.slope == pytest.approx(2.0)
    assert ic.triggering_gain(cert).slope == pytest.approx(8.0)


def test_zeno_condition():
    assert ic.zeno_free_condition(L(3.0)).holds
    assert not ic.zeno_free_condition(G.power(1.0, 0.5)).holds


def test_falsifier_accepts_true_certificate():
    sys = get_system("interconnected_demo", a=0.5, k=2.0)
    rep = ic.falsify_certificate(sys, ic.demo_certificate(0.5, 2.0), [0], [1], n_traj=4,
                                 horizon=2.0, step=2e-3)
    assert rep.passed and rep.checks == 4000


def test_falsifier_rejects_false_certificate():
    sys = get_system("interconnected_demo", a=0.5, k=2.0)
    cert = ic.demo_certificate(0.5, 2.0).replace(gamma_x_r=L(0.05))
    rep = ic.falsify_certificate(sys, cert, [0], [1], n_traj=2, horizon=1.0, step=2e-3)
    assert not rep.passed and rep.violations["x"] > 0
    assert rep.witness["bound"] == "x"


slopes = st.floats(0.05, 4.0)


@settings(max_examples=200, deadline=None)
@given(slopes, slopes, st.lists(slopes, min_size=5, max_size=5))
def test_joint_state_gain_dominates(a, b, rest):
    if a * b >= 0.99:
        a = 0.9 / b
    cert = ic.ISSCertificate(L(a), L(rest[0]), L(b), *map(L, rest[1:]))
    gamma, tilde = ic.triggering_gain(cert), ic.joint_state_gain(cert)
    assert np.all(tilde(grid) >= gamma(grid))
