import math

import numpy as np
import pytest

from etcsim import backstepping as bs
from etcsim import gains as G
from etcsim import kernel
from etcsim.errors import ArgumentError, SimulationDivergence
from etcsim.simulator import (
    Scenario,
    interval_convergence,
    simulate,
    write_events_csv,
    write_series_csv,
    zeno_check,
)


@pytest.fixture(scope="module")
def bench_gb():
    d = bs.synthesize(bs.benchmark_design())
    return bs.design_gamma_bar(d, 1 / 0.99, bs.benchmark_declared_xi())


def _bench(gb, backend="auto", horizon=1.0, **kw):
    return Scenario("paper_sec4", gb, {"w1": 0.5, "w2": 0.5}, horizon=horizon,
                    backend=backend, name="bench", **kw)


def test_validation_errors():
    gb = G.linear(10)
    for bad in (dict(step=0.0), dict(horizon=1e-5), dict(loc_tol=1e-3), dict(record_every=0),
                dict(backend="gpu")):
        with pytest.raises(ArgumentError):
            simulate(Scenario("scalar_demo", gb, **bad))
    with pytest.raises(ArgumentError):
        simulate(Scenario("scalar_demo", gb, x0=[1.0, 2.0]))


@pytest.mark.skipif(not kernel.HAVE_NATIVE, reason="compiled kernel not built")
@pytest.mark.parametrize("system,params,x0", [
    ("paper_sec4", {"w1": 0.3, "w2": 0.9}, [0.5, -0.2, 0.1, 0.7]),
    ("scalar_demo", {"k": 1.5}, [-0.8]),
    ("interconnected_demo", {"a": 0.5, "k": 2.0}, [1.0, -1.0]),
])
def test_backends_agree(bench_gb, system, params, x0):
    gb = bench_gb if system == "paper_sec4" else G.polynomial([5.0, 2.0])
    out = {}
    for be in ("native", "python"):
        out[be] = simulate(Scenario(system, gb, params, x0, horizon=0.6, backend=be))
    a, b = out["native"], out["python"]
    assert a.summary["backend"] == "native" and b.summary["backend"] == "python"
    assert a.n_events == b.n_events > 0
    np.testing.assert_allclose(a.event_t, b.event_t, atol=1e-12)
    np.testing.assert_allclose(a.x, b.x, rtol=0, atol=1e-12)
    assert a.diagnostics["steps"] == b.diagnostics["steps"]


def test_native_falls_back_for_non_polynomial_gain():
    sc = Scenario("scalar_demo", G.from_callable(lambda s: 5.0 * np.asarray(s), slope=5.0), {"k": 1.0}, horizon=0.2)
    assert simulate(sc).summary["backend"] == "python"
    if kernel.HAVE_NATIVE:
        with pytest.raises(ArgumentError):
            simulate(Scenario("scalar_demo", G.from_callable(lambda s: 5.0 * np.asarray(s), slope=5.0), backend="native", horizon=0.2))


def test_z1_follows_closed_form(bench_gb):
    # z1' = -z1^3 ignores the control: z1(t) = 1/sqrt(1 + 2t) from z1(0) = 1
    res = simulate(_bench(bench_gb, horizon=2.0))
    exact = 1.0 / np.sqrt(1.0 + 2.0 * res.t)
    assert np.max(np.abs(res.x[:, 0] - exact)) < 1e-12


def test_R_tracks_sup_of_direct_disturbance(bench_gb):
    res = simulate(_bench(bench_gb, horizon=0.3, backend="python"))
    from etcsim.dynamics import get_system
    sys = get_system("paper_sec4")
    g = np.array([sys.g(x)[0] for x in res.x])
    seg_max, gk = 0.0, g[0]
    for i in range(1, res.t.size):
        d = abs(g[i] - gk)
        seg_max = max(seg_max, d)
        assert res.R[i] >= d - 1e-12
        # stage points add at most O(step^2) to the endpoint sup
        assert res.R[i] <= seg_max + 1e-6
        if res.event[i]:
            gk, seg_max = g[i], 0.0


def test_events_recorded_before_reset(bench_gb):
    res = simulate(_bench(bench_gb, horizon=0.2))
    rows = np.flatnonzero(res.event)
    assert rows.size == res.n_events
    np.testing.assert_array_equal(res.t[rows], res.event_t)
    np.testing.assert_array_equal(res.R[rows], res.event_R)
    assert np.all(np.diff(res.t) > 0)


def test_record_every_thins_output(bench_gb):
    full = simulate(_bench(bench_gb, horizon=0.2))
    thin = simulate(_bench(bench_gb, horizon=0.2, record_every=10))
    np.testing.assert_array_equal(full.event_t, thin.event_t)
    assert thin.t.size < full.t.size / 5
    assert thin.t[-1] == full.t[-1]


def test_divergence_reports_last_time():
    sc = Scenario("scalar_demo", G.linear(10), {"k": -1.0}, [1.0], horizon=20.0)
    with pytest.raises(SimulationDivergence) as exc:
        simulate(sc)
    assert 13.0 < exc.value.t_last < 14.5
    assert exc.value.result.diagnostics["status"] == 2


def test_csv_output_is_deterministic(tmp_path, bench_gb):
    paths = []
    for i in range(2):
        res = simulate(_bench(bench_gb, horizon=0.3))
        s = write_series_csv(res, tmp_path / f"s{i}.csv")
        e = write_events_csv(res, tmp_path / f"e{i}.csv")
        paths.append((s.read_bytes(), e.read_bytes()))
    assert paths[0] == paths[1]
    head = paths[0][1].decode().splitlines()
    assert head[0] == "k,t_k,interval,R"
    # full double precision
    assert len(head[1].split(",")[1].replace("0.", "").lstrip("0")) >= 15


def test_zeno_check_examples():
    assert zeno_check([]).passed
    shrinking = [2.0 ** -i for i in range(12)]
    rep = zeno_check(shrinking)
    assert rep.shrinking and not rep.passed
    assert zeno_check([0.1] * 20).passed
    assert not zeno_check([0.1, 0.0]).passed


def test_convergence_report():
    rep = interval_convergence([0.1] * 20, 0.1)
    assert rep.passed and rep.rel_error == 0.0
    assert interval_convergence([0.1] * 3, 0.1).status == "insufficient"
    assert interval_convergence([0.2] * 20, 0.1).status == "fail"


def test_quiescent_from_origin():
    res = simulate(Scenario("scalar_demo", G.linear(10), {"k": 1.0}, [0.0], horizon=0.5))
    assert res.n_events == 0 and res.summary["quiescent"]
    assert math.isnan(res.summary["tail_interval"])


def test_auto_uses_python_loop_without_native(monkeypatch, bench_gb):
    monkeypatch.setattr(kernel, "HAVE_NATIVE", False)
    res = simulate(_bench(bench_gb, horizon=0.05))
    assert res.summary["backend"] == "python"
    with pytest.raises(ArgumentError):
        simulate(_bench(bench_gb, backend="native", horizon=0.05))
