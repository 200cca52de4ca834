"""Closed-form stability certificates for the baseline cascade.

All quantities here are analytic functions of the controller gains and plant
constants: 2x2 Lyapunov solves for the altitude/horizontal error channels,
dominant decay rates, the per-fault-cycle contraction factor, pendulum
constants, anti-swing damping, the post-fault actuator envelope and the
quasi-static steady-state tracking bound.
"""

from __future__ import annotations

import math

import numpy as np

from .params import GRAVITY, ControllerParams, SimParams


def lyap_solve(kp: float, kd: float) -> np.ndarray:
    """Solve A^T P + P A = -I for A = [[0,1],[-kp,-kd]] in closed form.

    Raises ValueError for non-Hurwitz gain pairs.
    """
    if kp <= 0 or kd <= 0:
        raise ValueError("gains must be positive (Hurwitz companion matrix)")
    p12 = 1.0 / (2.0 * kp)
    p22 = (1.0 + 1.0 / kp) / (2.0 * kd)
    p11 = kd / (2.0 * kp) + (kp + 1.0) / (2.0 * kd)
    return np.array([[p11, p12], [p12, p22]])


def companion(kp: float, kd: float) -> np.ndarray:
    return np.array([[0.0, 1.0], [-kp, -kd]])


def decay_rates(kp_z=100.0, kd_z=24.0, kp_xy=30.0, kd_xy=15.0):
    """|Re| of the dominant (slowest) pole of each error channel."""

    def alpha(kp, kd):
        disc = kd * kd - 4.0 * kp
        if disc >= 0.0:
            return 0.5 * (kd - math.sqrt(disc))
        return 0.5 * kd

    a_z = alpha(kp_z, kd_z)
    a_xy = alpha(kp_xy, kd_xy)
    return a_z, a_xy, min(a_z, a_xy)


def pendulum_constants(L: float):
    """(tau_pend, omega_p) of the suspended-payload pendulum."""
    if L <= 0:
        raise ValueError("rope length must be positive")
    omega_p = math.sqrt(GRAVITY / L)
    tau_pend = 2.0 * math.pi / omega_p
    return tau_pend, omega_p


def contraction(alpha_min: float, tau_pend: float) -> float:
    """Per-fault-cycle contraction factor rho = exp(-alpha_min * tau_pend)."""
    return math.exp(-alpha_min * tau_pend)


def antiswing_constants(m_L: float, k_swing: float, L: float):
    """Team-size-independent anti-swing damping coefficient and damping ratio.

    B = m_L * g * k_swing / L is what N_s slots each contributing
    (m_L g / N_s) * k_swing / L sum to, hence independent of N_s.
    """
    B = m_L * GRAVITY * k_swing / L
    _, omega_p = pendulum_constants(L)
    zeta = B / (2.0 * m_L * omega_p)
    return B, zeta


def actuator_envelope(n: int, m_L: float, n_faults: int, kappa_act: float,
                      f_max: float):
    """Static per-survivor load after n_faults severances vs. the tilt-reserved
    thrust envelope kappa_act * f_max.

    Returns (load N, bound N, margin fraction of envelope used, pass flag).
    """
    if n - n_faults < 2:
        raise ValueError("need at least 2 survivors")
    load = m_L * GRAVITY / (n - n_faults)
    bound = kappa_act * f_max
    return load, bound, load / bound, load <= bound


def steady_state_bound(a_xy_max: float, L: float, zeta: float,
                       kappa_qp: float, kp_xy: float) -> float:
    """Quasi-static horizontal tracking bound: pendulum offset + servo lag."""
    pend = L * a_xy_max / GRAVITY * (1.0 - 1.0 / (2.0 * zeta * zeta))
    servo = a_xy_max / (kappa_qp * kp_xy)
    return pend + servo


def chi_bound(delta_f: float, kappa_v: float = 1.0, n_s: int = 5,
              c_f: float = 1.0):
    """Severance jump bound: general c_f*(df + df^2) and the symmetric-hover
    reduced form kappa_v * df^2 / (2 n_s)."""
    if delta_f < 0:
        raise ValueError("delta_f must be nonnegative")
    general = c_f * (delta_f + delta_f * delta_f)
    symmetric = kappa_v * delta_f * delta_f / (2.0 * n_s)
    return general, symmetric


def certificate(sim: SimParams | None = None,
                ctrl: ControllerParams | None = None,
                kappa_act: float = 0.82, n_faults: int = 2,
                a_xy_max: float = 2.47) -> dict:
    """Assemble the full certificate as a JSON-friendly dict."""
    sim = sim or SimParams()
    ctrl = ctrl or ControllerParams()
    P_v = lyap_solve(ctrl.kp_z, ctrl.kd_z)
    P_xy = lyap_solve(ctrl.kp_xy, ctrl.kd_xy)
    a_z, a_xy, a_min = decay_rates(ctrl.kp_z, ctrl.kd_z, ctrl.kp_xy, ctrl.kd_xy)
    tau_pend, omega_p = pendulum_constants(sim.rope_length)
    rho = contraction(a_min, tau_pend)
    B, zeta = antiswing_constants(sim.m_payload, ctrl.k_swing, sim.rope_length)
    load, bound, margin, ok = actuator_envelope(
        sim.n_drones, sim.m_payload, n_faults, kappa_act, sim.f_max)
    ss = steady_state_bound(a_xy_max, sim.rope_length, zeta,
                            ctrl.kappa_qp, ctrl.kp_xy)
    return {
        "P_v": P_v.tolist(),
        "P_xy": P_xy.tolist(),
        "alpha_z": a_z,
        "alpha_xy": a_xy,
        "alpha_min": a_min,
        "lambda": a_min / 2.0,
        "tau_pend": tau_pend,
        "omega_p": omega_p,
        "rho": rho,
        "B_swing": B,
        "zeta_swing": zeta,
        "kappa_qp": ctrl.kappa_qp,
        "envelope": {
            "post_fault_load_N": load,
            "bound_N": bound,
            "utilization": margin,
            "pass": bool(ok),
        },
        "steady_state_bound_m": ss,
    }
