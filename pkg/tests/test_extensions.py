"""Adaptive, predictive and reshape layer checks against small closed-form
or co-simulated oracles."""

import numpy as np
import pytest

from slungload import controller, extensions
from slungload.params import ControllerParams, L1Params, ReshapeParams

A_CL = np.array([[0.0, 1.0], [-100.0, -24.0]])


def test_gamma_window_closed_form():
    # P22 of the altitude error loop has the closed form (kp+1)/(2 kp kd)
    p22 = 101.0 / 4800.0
    lo, hi = extensions.gamma_window(2e-4, p22, 25.0)
    assert lo == pytest.approx(25.0 / p22, rel=1e-12)
    assert hi == pytest.approx(2.0 / (2e-4 * p22), rel=1e-12)
    assert lo == pytest.approx(1188.1, abs=0.1)
    assert hi == pytest.approx(4.7525e5, rel=1e-4)
    # default gain sits inside the admissible window
    assert lo < L1Params().gamma < hi
    with pytest.raises(ValueError):
        extensions.gamma_window(0.0, p22, 25.0)


def _cosim_l1(bank, d, n_ticks):
    """Closed-loop error plant xi' = A xi + b (d + u_ad), Euler at 0.1 ms,
    with the bank fed the measured state once per 1 ms control tick."""
    xi = np.zeros(2)
    u = np.zeros(bank.n)
    for _ in range(n_ticks):
        u = bank.update([xi[0]], [xi[1]])
        for _ in range(10):
            xi = xi + 1e-4 * (A_CL @ xi + np.array([0.0, d + u[0]]))
    return u[0], xi


def test_l1_cancels_constant_disturbance():
    """At a high (still admissible) adaptation gain the injection converges
    to -d; at the default gain it moves monotonically in that direction."""
    bank = extensions.L1Bank(1, L1Params(gamma=8e4))
    u, xi = _cosim_l1(bank, d=2.0, n_ticks=5000)
    assert abs(u + 2.0) / 2.0 < 0.02
    assert abs(xi[0]) < 1e-3
    assert bank.projection_hits == 0

    bank = extensions.L1Bank(1)          # default gamma = 2000: slow but right
    u1, _ = _cosim_l1(bank, d=2.0, n_ticks=1000)
    u2, _ = _cosim_l1(bank, d=2.0, n_ticks=1000)   # continue the same bank
    assert -2.0 < u2 < u1 < 0.0


def test_l1_projection_bounds_the_estimate():
    bank = extensions.L1Bank(1, L1Params(gamma=8e4))
    u, _ = _cosim_l1(bank, d=50.0, n_ticks=4000)
    assert bank.projection_hits > 0
    assert np.all(np.abs(bank.delta) <= bank.params.delta_max + 1e-12)
    assert -bank.params.delta_max - 1e-6 <= u < 0.0


def test_l1_zero_error_means_zero_injection():
    bank = extensions.L1Bank(3)
    u = bank.update(np.zeros(3), np.zeros(3))
    np.testing.assert_array_equal(u, 0.0)


def test_mpc_reduces_to_baseline_projection_under_ceiling():
    """With the tension forecast below the ceiling the slacks are inactive and
    the first-step acceleration equals the baseline per-axis projection."""
    rng = np.random.default_rng(0)
    mpc = extensions.MpcLayer(2)
    for _ in range(60):
        a_t = rng.normal(scale=5.0, size=3)
        t_ff = float(rng.uniform(0.0, 40.0))
        res = mpc.step(0, a_t, t_ff, t_now=float(rng.uniform(0.0, 30.0)),
                       chord_rate=float(rng.uniform(-1.0, 0.0)), tol=1e-8)
        assert res.status == "solved"
        a_ref, _ = controller.qp_project(a_t, t_ff)
        np.testing.assert_allclose(res.a_star, a_ref, atol=1e-5)
        assert np.all(res.slack <= 1e-6)
    assert mpc.statuses_ok and mpc.fallbacks == 0
    assert mpc.n_solves == 60


def test_mpc_slack_activates_over_ceiling():
    mpc = extensions.MpcLayer(1)
    res = mpc.step(0, np.array([0.0, 0.0, 5.0]), t_ff=20.0,
                   t_now=120.0, chord_rate=0.5)
    assert res.status == "solved"
    that = mpc.tension_forecast(120.0, 0.5)
    # slack must cover the (unavoidable) forecast excess over t_max
    np.testing.assert_allclose(res.slack, np.maximum(0.0, that - mpc.cfg.t_max),
                               atol=1e-4)
    assert np.all(np.isfinite(res.a_star))


def test_tension_forecast_chord_rate_hold():
    mpc = extensions.MpcLayer(1)
    that = mpc.tension_forecast(30.0, -2.0)
    k = np.arange(1, mpc.cfg.horizon + 1)
    expect = np.maximum(0.0, 30.0 + mpc.k_eff * -2.0 * k * mpc.cfg.dt)
    np.testing.assert_allclose(that, expect, rtol=1e-12)
    assert np.all(mpc.tension_forecast(1.0, -50.0) >= 0.0)


def test_reshape_targets_four_drone_closed_form():
    nominal = {i: np.pi / 2 * i for i in range(4)}
    targets = extensions.reshape_targets(nominal, [1, 2, 3])
    # survivors at 90/180/270 deg re-space to 120 deg with the middle one fixed
    assert targets[2] == pytest.approx(np.pi, abs=1e-9)
    assert targets[1] == pytest.approx(np.pi / 3, abs=1e-9)
    assert targets[3] == pytest.approx(5 * np.pi / 3, abs=1e-9)
    with pytest.raises(ValueError):
        extensions.reshape_targets(nominal, [2])


def test_reshape_targets_equiangular_and_order_preserving():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(3, 7))
        angles = np.sort(rng.uniform(0.0, 2 * np.pi, size=n))
        survivors = list(range(n))
        targets = extensions.reshape_targets(dict(enumerate(angles)),
                                             survivors)
        vals = np.array([targets[i] for i in survivors])
        gaps = np.diff(np.sort(vals % (2 * np.pi)))
        np.testing.assert_allclose(gaps, 2 * np.pi / n, atol=1e-8)
        # no survivor travels more than pi
        assert np.max(np.abs(vals - angles)) <= np.pi + 1e-9


def test_reshape_static_tension_reduction_value():
    red, targets, nominal = extensions.reshape_static_tension_reduction()
    assert red == pytest.approx(0.3038, abs=0.005)
    np.testing.assert_allclose(
        [targets[1], targets[2], targets[3]],
        np.radians([60.0, 180.0, 300.0]), atol=1e-6)
    np.testing.assert_allclose(nominal, np.radians([0, 90, 180, 270]))


def test_supervisor_latch_broadcast_and_glide():
    sup = extensions.ReshapeSupervisor(5, ReshapeParams(anchor_aware=False))
    T = np.full(5, 20.0)
    t = 0.0
    # a 50 ms dip must not latch
    for _ in range(50):
        t += 1e-3
        sup.update(t, np.where(np.arange(5) == 1, 0.1, 20.0))
    for _ in range(50):
        t += 1e-3
        sup.update(t, T)
    assert sup.latched == set()
    # a sustained drop on drone 1 latches exactly once
    T[1] = 0.0
    for _ in range(200):
        t += 1e-3
        angles = sup.update(t, T)
    assert sup.latched == {1}
    assert sup.bits_per_fault == 3           # ceil(log2 5)
    assert sup.broadcast_bits == 3
    t_latch = t - 0.200 + 0.100
    # mid-transition: survivor angles strictly between nominal and target
    mid = sup.current_angles(t_latch + 2.5)
    end = sup.current_angles(t_latch + sup.params.t_trans + 0.1)
    targets = extensions.reshape_targets(dict(enumerate(sup.nominal)),
                                         [0, 2, 3, 4])
    for i in [0, 2, 3, 4]:
        lo, hi = sorted((sup.nominal[i], targets[i]))
        if hi - lo > 1e-9:
            assert lo - 1e-9 <= mid[i] <= hi + 1e-9
        assert end[i] == pytest.approx(targets[i], abs=1e-9)


def test_supervisor_anchor_aware_holds_nominal():
    sup = extensions.ReshapeSupervisor(5, ReshapeParams(anchor_aware=True))
    T = np.full(5, 20.0)
    T[2] = 0.0
    t = 0.0
    for _ in range(300):
        t += 1e-3
        angles = sup.update(t, T)
    assert sup.latched == {2}
    # fixed payload anchors: survivors stay above their own anchor angles
    for i in [0, 1, 3, 4]:
        assert angles[i] == pytest.approx(sup.nominal[i], abs=1e-9)
