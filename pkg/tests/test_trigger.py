import numpy as np
import pytest

from mbpetc import certificates
from mbpetc.prediction import LookupTable, PredictionModel, ZOH, LOOKUP_TABLE
from mbpetc.trigger import TriggerDecision, TriggerReason, TriggerState, default_nu
from mbpetc.errors import SimulationAbort

from conftest import make_constants, make_linear_model


def _zoh(h):
    return PredictionModel(kind=ZOH, step=h)


@pytest.fixture()
def linear():
    return make_linear_model(gamma_rate=1.0)


def _linear_constants(c=2.0, sigma=0.5, rate=1.0):
    return make_constants("linear2", c, sigma, 1.0, 2.0, 2.0, rate)


def test_decision_invariant():
    with pytest.raises(ValueError):
        TriggerDecision(transmit=True, reason=TriggerReason.NONE, u_next=np.zeros(1))
    with pytest.raises(ValueError):
        TriggerDecision(transmit=False, reason=TriggerReason.INITIAL, u_next=np.zeros(1))


def test_default_nu():
    assert default_nu(0.1, 0.5, 1.0) == 200
    assert default_nu(0.01, 0.5, 2.0) == 1000


def test_initial_sample_always_transmits(linear):
    trig = TriggerState(linear, _linear_constants(), _zoh(0.1), 0.1, nu=100)
    d = trig.evaluate(0, np.array([1.0, 0.0]))
    assert d.transmit and d.reason is TriggerReason.INITIAL
    assert trig.i_ref == 0 and trig.V_ref == 1.0


def test_consecutive_sample_enforcement(linear):
    trig = TriggerState(linear, _linear_constants(), _zoh(0.1), 0.1, nu=100)
    with pytest.raises(ValueError):
        trig.evaluate(3, np.array([1.0, 0.0]))  # first call must be k = 0
    trig.evaluate(0, np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        trig.evaluate(2, np.array([1.0, 0.0]))  # skipped k = 1


def test_decay_budget_arithmetic(linear):
    # V_ref = 1, h = 0.1, sigma = 0.5, rate = 1: budget(k) = 1 - (k+1) * 0.05
    trig = TriggerState(linear, _linear_constants(), _zoh(0.1), 0.1, nu=100)
    trig.evaluate(0, np.array([1.0, 0.0]))
    assert trig.decay_budget(0) == pytest.approx(0.95, rel=1e-15)
    assert trig.decay_budget(10) == pytest.approx(1.0 - 11 * 0.05, rel=1e-14)
    # linear in the step count
    diffs = np.diff([trig.decay_budget(k) for k in range(5)])
    assert np.allclose(diffs, -0.05, rtol=1e-12)
    with pytest.raises(ValueError):
        trig.decay_budget(-1)


def test_budget_crossing_closed_form(linear):
    # state jumps to the origin after k = 0, so V = 0 and lambda = 0 for all
    # later samples; the bound test fires exactly when the budget reaches zero:
    # first transmission at k* = ceil(V_ref / (h sigma rate V_ref)) - 1 = 19
    h, sigma = 0.1, 0.5
    trig = TriggerState(linear, _linear_constants(sigma=sigma), _zoh(h), h, nu=100)
    trig.evaluate(0, np.array([1.0, 0.0]))
    zero = np.zeros(2)
    k_star = int(np.ceil(1.0 / (h * sigma * 1.0))) - 1
    assert k_star == 19
    for k in range(1, k_star):
        d = trig.evaluate(k, zero)
        assert not d.transmit, f"early transmission at k = {k}"
        assert d.lambda_k == 0.0
    d = trig.evaluate(k_star, zero)
    assert d.transmit and d.reason is TriggerReason.LYAPUNOV_BOUND
    assert trig.i_ref == k_star and trig.V_ref == 0.0


def test_level_set_exit(linear):
    # c below V(x0): the mirrored prediction leaves the level set immediately
    trig = TriggerState(linear, _linear_constants(c=0.5), _zoh(0.1), 0.1, nu=100)
    trig.evaluate(0, np.array([1.0, 0.0]))
    d = trig.evaluate(1, np.zeros(2))
    assert d.transmit and d.reason is TriggerReason.LEVEL_SET_EXIT


def test_max_interval():
    # negligible decay rate keeps the budget high; nu = 3 forces k = 4
    slow = make_linear_model(gamma_rate=1e-9)
    trig = TriggerState(slow, _linear_constants(rate=1e-9), _zoh(0.1), 0.1, nu=3)
    trig.evaluate(0, np.array([1.0, 0.0]))
    zero = np.zeros(2)
    for k in range(1, 4):
        assert not trig.evaluate(k, zero).transmit
    d = trig.evaluate(4, zero)
    assert d.transmit and d.reason is TriggerReason.MAX_INTERVAL


def test_prediction_domain_exit_forces_transmission(linear):
    # lookup box too small for the state: the mirror prediction fails at k = 1
    table = LookupTable(
        lo=np.array([-0.1, -0.1]), hi=np.array([0.1, 0.1]), values=np.zeros((3, 3, 2))
    )
    pm = PredictionModel(kind=LOOKUP_TABLE, step=0.1, table=table)
    trig = TriggerState(linear, _linear_constants(), pm, 0.1, nu=100)
    trig.evaluate(0, np.array([1.0, 0.0]))
    d = trig.evaluate(1, np.array([0.9, 0.0]))
    assert d.transmit and d.reason is TriggerReason.PREDICTION_DOMAIN


def test_nonfinite_state_aborts(linear):
    trig = TriggerState(linear, _linear_constants(), _zoh(0.1), 0.1, nu=100)
    with pytest.raises(SimulationAbort):
        trig.evaluate(0, np.array([np.nan, 0.0]))


def test_lambda_equals_one_period_bound_increment(pend_model, pend_constants):
    h = pend_constants.h_sigma_masp
    trig = TriggerState(pend_model, pend_constants, _zoh(h), h)
    rng = np.random.default_rng(8)
    for _ in range(50):
        x = rng.uniform(-0.3, 0.3, 2)
        u = pend_model.kappa(rng.uniform(-0.3, 0.3, 2))
        lam = trig._lambda(x, u)
        expected = certificates.v_bound(pend_model, pend_constants, x, u, h) - float(pend_model.v(x))
        assert lam == pytest.approx(expected, abs=1e-12)


def test_hold_keeps_mirrored_input(linear):
    # without a transmission the actuator input comes from the mirror state
    trig = TriggerState(linear, _linear_constants(), _zoh(0.1), 0.1, nu=100)
    trig.evaluate(0, np.array([1.0, 0.0]))
    d = trig.evaluate(1, np.array([0.5, 0.0]))
    assert not d.transmit
    assert np.array_equal(d.u_next, linear.kappa(trig.xhat_sens))
