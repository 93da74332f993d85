import math

import numpy as np
import pytest

from mbpetc import simulator
from mbpetc.dynamics import get_model
from mbpetc.errors import ConfigError
from mbpetc.integrate import rk4_step
from mbpetc.simulator import SimConfig

from conftest import make_constants


def _config(**kw):
    base = dict(
        x0=np.array([0.3, 0.0]),
        prediction="zoh",
        h=0.01,
        horizon=4.0,
        substeps=3,
        decimation=1,
    )
    base.update(kw)
    return SimConfig(**base)


@pytest.fixture(scope="module")
def toy_constants():
    # hand-picked constants whose certified bound admits h = 0.01, so the
    # event gaps are observable at test-sized horizons; not a sound
    # certificate for the pendulum, which the semantics tests do not need
    return make_constants("pendulum", 0.258, 0.35, 0.01, 0.01, 11.0, 0.96)


@pytest.fixture(scope="module")
def zoh_trace(toy_constants):
    return simulator.run(_config(), toy_constants)


def test_config_validation(pend_constants, toy_constants):
    with pytest.raises(ConfigError):
        SimConfig(x0=np.zeros(2), substeps=0)
    with pytest.raises(ConfigError):
        SimConfig(x0=np.zeros(2), decimation=0)
    # sampling above the certified bound is refused without the override
    with pytest.raises(ConfigError):
        _config().resolve_h(pend_constants)
    assert _config(unsafe_h_override=True).resolve_h(pend_constants) == 0.01
    # horizon shorter than one period
    with pytest.raises(ConfigError):
        _config(horizon=1e-3).resolve_h(toy_constants)


def test_initial_state_outside_level_set_rejected(toy_constants):
    with pytest.raises(ConfigError):
        simulator.run(_config(x0=np.array([1.0, 1.0])), toy_constants)


def test_certified_period_is_default(pend_constants):
    cfg = _config(h=None)
    assert cfg.resolve_h(pend_constants) == pend_constants.h_sigma_masp


def test_flow_rows_replay_exactly(zoh_trace, toy_constants):
    # with decimation 1 every sub-step is recorded; re-integrating each row
    # with the recorded input must reproduce the next row bit for bit
    model = get_model("pendulum", gamma_rate=toy_constants.gamma_rate)
    tr = zoh_trace
    dt = tr.h / tr.substeps
    for i in range(len(tr.t) - 1):
        u = tr.u[i]
        nxt = rk4_step(lambda xx: model.f(xx, u), tr.x[i], dt)
        assert np.array_equal(nxt, tr.x[i + 1]), f"row {i} diverged"


def test_input_and_mirror_held_between_samples(zoh_trace):
    tr = zoh_trace
    nsub = tr.substeps
    n_samples = (len(tr.t) - 1) // nsub
    for k in range(n_samples):
        rows = slice(k * nsub, (k + 1) * nsub)
        assert np.all(tr.u[rows] == tr.u[k * nsub])
        assert np.all(tr.xhat[rows] == tr.xhat[k * nsub])


def test_lyapunov_column_consistent(zoh_trace, toy_constants):
    model = get_model("pendulum", gamma_rate=toy_constants.gamma_rate)
    assert np.allclose(zoh_trace.v, model.v(zoh_trace.x), rtol=1e-14)


def test_reference_column_closed_form(zoh_trace):
    tr = zoh_trace
    before = tr.t < tr.h
    assert np.all(np.isnan(tr.s[before]))
    after = ~before
    expected = tr.v[0] * np.exp(-tr.sigma * tr.gamma_rate * (tr.t[after] - tr.h))
    assert np.allclose(tr.s[after], expected, rtol=1e-12)


def test_events_match_transmit_rows(zoh_trace):
    tr = zoh_trace
    rows = np.nonzero(tr.transmit)[0]
    assert np.allclose(tr.t[rows], tr.event_times, atol=1e-15)
    assert [tr.reason[i] for i in rows] == tr.event_reasons
    assert tr.event_reasons[0] == "initial"
    # transmissions happen only at sampling instants
    ks = np.round(tr.event_times / tr.h).astype(int)
    assert np.array_equal(ks, tr.event_ks)
    assert len(tr.event_times) >= 2  # the trigger fired at least once after k = 0


def test_origin_start_transmits_every_sample(toy_constants):
    # V = 0 and budget 0: the bound test fires at every sampling instant
    tr = simulator.run(_config(x0=np.zeros(2), horizon=0.1), toy_constants)
    assert tr.summary["transmissions"] == 10
    assert set(tr.event_reasons[1:]) == {"lyapunov_bound"}
    assert np.allclose(tr.gaps(), tr.h)


def test_determinism_bitwise(toy_constants):
    a = simulator.run(_config(horizon=0.5), toy_constants)
    b = simulator.run(_config(horizon=0.5), toy_constants)
    for name in ("t", "x", "xhat", "u", "v", "s", "lambda_k", "budget"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)
    assert np.array_equal(a.event_times, b.event_times)


def test_time_triggered_baseline(toy_constants):
    tr = simulator.run_time_triggered(_config(horizon=0.1), toy_constants)
    assert tr.summary["transmissions"] == 10
    assert tr.event_reasons[0] == "initial"
    assert set(tr.event_reasons[1:]) == {"periodic"}
    assert np.allclose(tr.gaps(), tr.h)


def test_compare_table(zoh_trace, toy_constants):
    tt = simulator.run_time_triggered(_config(), toy_constants)
    report = simulator.compare([zoh_trace, tt])
    assert report.rows[0]["transmissions"] < report.rows[1]["transmissions"]
    table = report.as_table()
    assert "transmissions" in table and len(table.splitlines()) == 3
    with pytest.raises(ValueError):
        simulator.compare([zoh_trace, simulator.run(_config(x0=np.array([0.2, 0.1])), toy_constants)])
    with pytest.raises(ValueError):
        simulator.compare([])


def test_trace_roundtrip(tmp_path, toy_constants):
    tr = simulator.run(_config(horizon=0.2), toy_constants)
    prefix = tmp_path / "trace"
    simulator.save_trace(tr, prefix)
    back = simulator.load_trace(prefix)
    # %.17g round-trips doubles exactly
    for name in ("t", "x", "xhat", "u", "v", "lambda_k", "budget"):
        assert np.array_equal(getattr(tr, name), getattr(back, name), equal_nan=True)
    assert np.array_equal(tr.s, back.s, equal_nan=True)
    assert np.array_equal(tr.transmit, back.transmit)
    assert list(back.reason) == list(tr.reason)
    assert back.h == tr.h and back.nu == tr.nu and back.sigma == tr.sigma
    assert np.array_equal(back.event_times, tr.event_times)
    assert back.event_reasons == tr.event_reasons


def test_decimation_reduces_rows(toy_constants):
    dense = simulator.run(_config(horizon=0.2), toy_constants)
    sparse = simulator.run(_config(horizon=0.2, decimation=5), toy_constants)
    assert len(sparse.t) < len(dense.t)
    # decimated rows are a subset of the dense rows
    assert np.all(np.isin(np.round(sparse.t, 12), np.round(dense.t, 12)))
    # events are never decimated away
    assert np.array_equal(sparse.event_times, dense.event_times)
