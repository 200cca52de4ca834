"""Per-drone baseline cascade: reference, slot geometry, anti-swing shift,
outer PD, closed-form QP projection with tension feed-forward, and thrust /
attitude commands.

The functions here are the reference implementation (used directly by the unit
tests and the MPC layer); the simulation loop runs the numerically identical
fused kernel in _kernels.control_tick, cross-checked against this module.

The information pattern is enforced structurally: `tick` consumes an InfoSet
that carries one drone's own state, its own scalar rope tension, the payload
velocity and the reference — nothing else exists inside the controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .params import GRAVITY, ControllerParams


def reference(t, ctrl: ControllerParams | None = None):
    """Lemniscate reference with sinusoidal altitude: position, velocity,
    acceleration by closed-form differentiation."""
    ctrl = ctrl or ControllerParams()
    a, T, z0, hz = ctrl.ref_a, ctrl.ref_period, ctrl.ref_z0, ctrl.ref_hz
    phi = 2.0 * np.pi * np.asarray(t, float) / T
    dphi = 2.0 * np.pi / T
    s, c = np.sin(phi), np.cos(phi)
    D = 1.0 + s * s
    p = np.stack([a * c / D, a * s * c / D, z0 + hz * s], axis=-1)
    v = np.stack([-a * s * (3.0 - s * s) / D ** 2,
                  a * (c * c - 2.0 * s * s) / D ** 2,
                  hz * c], axis=-1) * dphi
    acc = np.stack([-a * c * (3.0 - 12.0 * s * s + s ** 4) / D ** 3,
                    -2.0 * a * s * c * (5.0 - 3.0 * s * s) / D ** 3,
                    -hz * s], axis=-1) * dphi * dphi
    return p, v, acc


def slot_offsets(n: int, radius: float = 0.80) -> np.ndarray:
    """Equiangular ring offsets delta_i, drone 0 along +x."""
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.stack([radius * np.cos(ang), radius * np.sin(ang),
                     np.zeros(n)], axis=-1)


def slot(t, delta_i, ctrl: ControllerParams | None = None,
         reshape_angle=None, radius: float = 0.80):
    """Hover slot for one drone: payload reference + ring offset + elevation.

    reshape_angle (rad), when given, replaces the nominal offset direction.
    """
    ctrl = ctrl or ControllerParams()
    p_ref, v_ref, _ = reference(t, ctrl)
    if reshape_angle is not None:
        delta_i = np.array([radius * math.cos(reshape_angle),
                            radius * math.sin(reshape_angle), 0.0])
    p_slot = p_ref + delta_i + np.array([0.0, 0.0, ctrl.d_rope])
    return p_slot, v_ref.copy()


def anti_swing_shift(vL, k_swing: float = 0.8, s_max: float = 0.3):
    """Slot shift opposing the payload's horizontal velocity, saturated."""
    s = -k_swing * np.array([vL[0], vL[1], 0.0])
    nrm = math.hypot(s[0], s[1])
    if nrm > s_max:
        s *= s_max / nrm
    return s


def outer_pd(e_p, e_v, vL, ctrl: ControllerParams | None = None):
    ctrl = ctrl or ControllerParams()
    kp = np.array([ctrl.kp_xy, ctrl.kp_xy, ctrl.kp_z])
    kd = np.array([ctrl.kd_xy, ctrl.kd_xy, ctrl.kd_z])
    damp = ctrl.w_swing * np.array([-ctrl.k_swing * vL[0],
                                    -ctrl.k_swing * vL[1], 0.0])
    return kp * np.asarray(e_p, float) + kd * np.asarray(e_v, float) + damp


def az_bounds(t_ff, ctrl: ControllerParams | None = None,
              m_drone: float = 1.5, f_min: float = 0.0, f_max: float = 150.0):
    """Vertical acceleration box implied by the thrust limits with the tension
    feed-forward already committed."""
    if t_ff < 0:
        raise ValueError("tension feed-forward must be nonnegative")
    return ((f_min - t_ff) / m_drone - GRAVITY,
            (f_max - t_ff) / m_drone - GRAVITY)


def qp_project(a_target, t_ff, ctrl: ControllerParams | None = None,
               m_drone: float = 1.5, f_min: float = 0.0, f_max: float = 150.0):
    """Closed-form solution of the per-axis separable projection QP

        min w_t ||a - a_target||^2 + w_e ||a||^2   s.t. tilt/thrust boxes.

    Returns (a_star, active_set_code); code = cx + 3 cy + 9 cz with
    0 interior / 1 lower bound / 2 upper bound per axis.
    """
    ctrl = ctrl or ControllerParams()
    kappa = ctrl.kappa_qp
    lim = ctrl.axy_max
    az_min, az_max = az_bounds(t_ff, ctrl, m_drone, f_min, f_max)
    lo = np.array([-lim, -lim, az_min])
    hi = np.array([lim, lim, az_max])
    raw = kappa * np.asarray(a_target, float)
    a_star = np.clip(raw, lo, hi)
    code = 0
    for ax in range(3):
        c = 1 if raw[ax] < lo[ax] else (2 if raw[ax] > hi[ax] else 0)
        code += c * 3 ** ax
    return a_star, code


def thrust_command(a_z_star, t_ff, m_drone: float = 1.5,
                   f_min: float = 0.0, f_max: float = 150.0):
    return float(np.clip(m_drone * (GRAVITY + a_z_star) + t_ff, f_min, f_max))


def attitude_cmd(a_x_star, a_y_star, theta_max: float = 0.6):
    pitch_d = float(np.clip(a_x_star / GRAVITY, -theta_max, theta_max))
    roll_d = float(np.clip(-a_y_star / GRAVITY, -theta_max, theta_max))
    return pitch_d, roll_d


def euler_from_R(R):
    """ZYX extraction: (roll, pitch); yaw handled via its projected error."""
    pitch = -math.asin(min(1.0, max(-1.0, R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    return roll, pitch


def attitude_pd(R, w, pitch_d, roll_d, ctrl: ControllerParams | None = None,
                tau_max: float = 10.0):
    """Per-axis Euler PD, torque in N*m per rad of error.

    The gains act directly on torque (not on angular acceleration): with
    the small vehicle inertia this places the inner-loop poles far left of
    the outer horizontal PD, which is required for cascade stability.
    """
    ctrl = ctrl or ControllerParams()
    roll, pitch = euler_from_R(R)
    e_yaw = -0.5 * (R[1, 0] - R[0, 1])
    e = np.array([roll_d - roll, pitch_d - pitch, e_yaw])
    tau = ctrl.kp_att * e - ctrl.kd_att * np.asarray(w, float)
    return np.clip(tau, -tau_max, tau_max)


def smoothstep(x):
    """Quintic smoothstep 10x^3 - 15x^4 + 6x^5 clamped to [0, 1]; C^2 at both
    ends (s'(0)=s'(1)=s''(0)=s''(1)=0)."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass
class InfoSet:
    """Everything a drone's controller is allowed to see, and nothing more."""
    t: float
    p: np.ndarray               # own position
    v: np.ndarray               # own velocity
    R: np.ndarray               # own attitude
    w: np.ndarray               # own body rates
    T: float                    # own rope tension
    vL: np.ndarray              # payload velocity (shared measurement)
    delta: np.ndarray           # own nominal ring offset
    reshape_angle: float | None = None


@dataclass
class ControlOutput:
    f: float
    tau: np.ndarray
    a_target: np.ndarray = None
    a_star: np.ndarray = None
    t_ff: float = 0.0
    active_code: int = 0


def tick(info: InfoSet, ctrl: ControllerParams | None = None,
         m_drone: float = 1.5, J=(0.02, 0.02, 0.04),
         f_min: float = 0.0, f_max: float = 150.0, tau_max: float = 10.0,
         ff_enabled: bool = True, u_ad: float = 0.0,
         a_star_override=None, ramp_time: float = 0.0) -> ControlOutput:
    """One baseline cascade evaluation. Pure function of the InfoSet (plus the
    optional extension injections u_ad / a_star_override).

    ramp_time > 0 enables the smoothstep pickup ramp on the feed-forward
    (bypassed by default in every campaign config).
    """
    ctrl = ctrl or ControllerParams()
    p_slot, v_slot = slot(info.t, info.delta, ctrl,
                          reshape_angle=info.reshape_angle)
    # swing velocity = payload velocity relative to the moving reference;
    # using it (rather than the absolute velocity) keeps the shift a pure
    # pendulum damper with no steady cruise bias
    v_swing = np.asarray(info.vL, float) - v_slot
    shift = anti_swing_shift(v_swing, ctrl.k_swing, ctrl.s_max)
    e_p = p_slot + shift - info.p
    e_v = v_slot - info.v
    a_target = outer_pd(e_p, e_v, v_swing, ctrl)
    a_target = a_target + np.array([0.0, 0.0, u_ad])

    t_ff = info.T if ff_enabled else 0.0
    if ramp_time > 0.0:
        t_ff *= float(smoothstep(info.t / ramp_time))

    if a_star_override is not None:
        a_star = np.asarray(a_star_override, float)
        _, code = qp_project(a_star / ctrl.kappa_qp, t_ff, ctrl, m_drone,
                             f_min, f_max)
    else:
        a_star, code = qp_project(a_target, t_ff, ctrl, m_drone, f_min, f_max)

    f = thrust_command(a_star[2], t_ff, m_drone, f_min, f_max)
    pitch_d, roll_d = attitude_cmd(a_star[0], a_star[1], ctrl.theta_max)
    tau = attitude_pd(info.R, info.w, pitch_d, roll_d, ctrl, tau_max)
    return ControlOutput(f=f, tau=tau, a_target=a_target, a_star=a_star,
                         t_ff=t_ff, active_code=code)
