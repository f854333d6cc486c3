import numpy as np
import pytest

from landergnc.actuators import (G0, INNER, MAIN, OUTER_A, OUTER_B,
                                 ActuatorBank, ActuatorCommand, EngineParams,
                                 aggregate_force_torque, apply_failure_mask,
                                 default_geometry, failure_disable_set,
                                 settle_time_s)


def rct_params(**kw):
    return EngineParams(nominal_thrust_n=22.0, isp_steady_s=285.0, **kw)


def main_params():
    return EngineParams(nominal_thrust_n=460.0, isp_steady_s=320.0)


def make_bank():
    return ActuatorBank(default_geometry(), rct_params(), main_params())


def test_off_from_rest_is_silent():
    bank = make_bank()
    for k in range(100):
        thrust, flow = bank.step(k * 0.005, 0.005)
        assert np.all(thrust == 0.0)
        assert np.all(flow == 0.0)


def test_step_on_settles_to_nominal_within_settle_time():
    t90 = settle_time_s(rct_params(), level=0.9)
    assert t90 < 0.080  # fast valve/chamber fill
    bank = make_bank()
    bank.latch(ActuatorCommand(np.full(17, 10.0), "steady"), 0.0)
    t = 0.0
    for _ in range(1000):  # 5 s
        thrust, flow = bank.step(t, 0.005)
        t += 0.005
    # duty window has filled: steady thrust at nominal, flow = F/(g0 Isp)
    assert thrust[0] == pytest.approx(22.0, rel=5e-3)
    assert flow[0] == pytest.approx(22.0 / (G0 * 285.0), rel=1e-2)
    assert thrust[MAIN] == pytest.approx(460.0, rel=5e-3)


def test_causality_no_output_before_latency():
    bank = make_bank()
    bank.latch(ActuatorCommand(np.full(17, 1.0), "steady"), 0.0)
    t = 0.0
    while t < bank.latency_s[0] - 1e-9:
        thrust, _ = bank.step(t, 0.001)
        assert np.all(thrust == 0.0)
        t += 0.001


def test_half_duty_pulsing_mean_thrust():
    bank = make_bank()
    dt = 0.005
    t = 0.0
    total = 0.0
    n = 0
    for cycle in range(100):  # 5 s of 50 ms cycles at 50% duty
        cmd = np.zeros(17)
        cmd[0] = 0.025
        bank.latch(ActuatorCommand(cmd), t)
        for _ in range(10):
            thrust, flow = bank.step(t, dt)
            if cycle >= 20:  # skip duty-window transient
                total += thrust[0]
                n += 1
            t += dt
    mean = total / n
    assert 0.4 * 22.0 < mean < 0.6 * 22.0


def test_min_impulse_bit_rounds_to_zero():
    bank = make_bank()
    cmd = np.zeros(17)
    cmd[3] = 0.004  # below the 10 ms bit
    bank.latch(ActuatorCommand(cmd), 0.0)
    for k in range(40):
        thrust, _ = bank.step(k * 0.005, 0.005)
        assert thrust[3] == 0.0


def test_failed_thruster_never_fires():
    bank = make_bank()
    bank.set_disabled({5})
    rng = np.random.default_rng(20)
    t = 0.0
    for _ in range(50):
        bank.latch(ActuatorCommand(rng.uniform(0, 0.05, 17)), t)
        for _ in range(10):
            thrust, _ = bank.step(t, 0.005)
            assert thrust[5] == 0.0
            t += 0.005


def test_impulse_flow_bookkeeping_consistent():
    # per-thruster: thrust/(g0*flow) must equal the duty-dependent Isp,
    # so integrated impulse ~= g0 * integral(Isp * mdot) holds exactly
    bank = make_bank()
    rng = np.random.default_rng(21)
    t = 0.0
    imp = 0.0
    isp_flow = 0.0
    for _ in range(200):
        bank.latch(ActuatorCommand(rng.uniform(0, 0.05, 17)), t)
        for _ in range(10):
            thrust, flow = bank.step(t, 0.005)
            imp += thrust[0] * 0.005
            if flow[0] > 0:
                isp_here = thrust[0] / (G0 * flow[0])
                isp_flow += G0 * isp_here * flow[0] * 0.005
            t += 0.005
    assert imp == pytest.approx(isp_flow, rel=1e-9)
    assert imp > 0


# geometry / aggregation ----------------------------------------------------

def test_inner_eight_symmetric_force():
    geom = default_geometry()
    thrusts = np.zeros(17)
    thrusts[INNER] = 22.0
    force, torque = aggregate_force_torque(thrusts, geom, [0, 0, 0.5])
    assert force[2] == pytest.approx(8 * 22.0)
    assert abs(force[0]) < 1e-12 and abs(force[1]) < 1e-12
    assert np.linalg.norm(torque) < 1e-10


def test_single_outer_torque_cross_product():
    geom = default_geometry()
    thrusts = np.zeros(17)
    thrusts[8] = 22.0
    cg = np.array([0.0, 0.0, 0.5])
    force, torque = aggregate_force_torque(thrusts, geom, cg)
    expect = np.cross(geom.positions_m[8] - cg, 22.0 * geom.directions[8])
    assert np.allclose(torque, expect, atol=1e-12)


def test_axial_envelope_from_trade_table():
    # main + inner eight at steady max stays inside the 546..739 N band
    geom = default_geometry()
    thrusts = np.zeros(17)
    thrusts[INNER] = 22.0
    thrusts[MAIN] = 460.0
    force, _ = aggregate_force_torque(thrusts, geom, [0, 0, 0.5])
    assert 546.0 <= force[2] <= 739.0


def test_block_controllability():
    geom = default_geometry()
    cg = np.array([0.0, 0.0, 0.5])
    for block in (OUTER_A, OUTER_B):
        rows = []
        for i in block:
            t = np.zeros(17)
            t[i] = 22.0
            _, torque = aggregate_force_torque(t, geom, cg)
            rows.append(torque)
        assert np.linalg.matrix_rank(np.array(rows), tol=1e-6) == 3


# failure handling -----------------------------------------------------------

def test_no_failure_no_change():
    disabled, events = failure_disable_set([])
    assert disabled == set()
    assert events == []
    cmd = ActuatorCommand(np.ones(17) * 0.02)
    out = apply_failure_mask(cmd, np.ones(17, dtype=bool))
    assert np.array_equal(out.pulse_width_s, cmd.pulse_width_s)


def test_canted_failure_swaps_block():
    disabled, events = failure_disable_set([9])
    assert disabled == set(OUTER_A)
    assert "outer_block_a_disabled" in events
    assert not disabled & set(OUTER_B)


def test_inner_failure_disables_matched_pair_torque_balance():
    disabled, events = failure_disable_set([2])
    assert disabled == {2, 6}
    geom = default_geometry()
    thrusts = np.zeros(17)
    for i in INNER:
        if i not in disabled:
            thrusts[i] = 22.0
    _, torque = aggregate_force_torque(thrusts, geom, [0, 0, 0.5])
    assert np.linalg.norm(torque) < 1e-10


def test_two_rct_failures_unsupported():
    _, events = failure_disable_set([1, 9])
    assert "unsupported_multiple_rct_failures" in events


def test_main_failure_aborts():
    disabled, events = failure_disable_set([MAIN])
    assert MAIN in disabled
    assert "main_engine_failure_abort" in events
