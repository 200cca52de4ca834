"""Hot numerical kernels: bead-chain/rigid-body derivative, RK3 substepping,
tension measurement and the fused per-drone control tick.

Every kernel is written as a plain python function over flat float64 arrays and
jitted with numba unless SLUNGLOAD_NO_NUMBA=1 (or numba is unavailable), in
which case the pure-python/numpy versions run unchanged. Keep everything in
here loop-based and allocation-light; this is the 95% of the runtime.

State vector layout (flat, length 66*n + 6 for n drones with 8 beads/rope):
  drone i  [18*i : 18*i+18]  -> p(3), v(3), R(9, row-major), w(3)
  payload  [18*n : 18*n+6]   -> pL(3), vL(3)
  beads    [18*n+6 + (i*NB + b)*6 : +6] -> bp(3), bv(3)
"""

from __future__ import annotations

import math
import os

import numpy as np

NUMBA_DISABLED = os.environ.get("SLUNGLOAD_NO_NUMBA", "") == "1"

if not NUMBA_DISABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover
        NUMBA_DISABLED = True

if NUMBA_DISABLED:
    def _jit(func):
        return func
else:
    def _jit(func):
        return numba.njit(cache=True, fastmath=False)(func)

DRONE_STRIDE = 18
BEAD_STRIDE = 6


def state_size(n: int, nb: int) -> int:
    return DRONE_STRIDE * n + 6 + n * nb * BEAD_STRIDE


@_jit
def deriv(y, dy, f, tau, severed, gust, wind_on, att, n, nb,
          m_d, m_L, m_b, g, ks, cs, l0, c_drag, wmax, Jx, Jy, Jz):
    """Full ODE right-hand side. Controls (f, tau) and gust are held constant.

    Returns the number of degenerate (near-coincident) segment endpoints seen.
    """
    offL = DRONE_STRIDE * n
    offB = offL + 6
    n_coincident = 0

    fLx = 0.0
    fLy = 0.0
    fLz = 0.0
    pLx = y[offL]
    pLy = y[offL + 1]
    pLz = y[offL + 2]
    vLx = y[offL + 3]
    vLy = y[offL + 4]
    vLz = y[offL + 5]

    for i in range(n):
        base = DRONE_STRIDE * i
        bb = offB + i * nb * BEAD_STRIDE

        # bead kinematics + gravity default (free fall if severed/slack)
        for b in range(nb):
            o = bb + b * BEAD_STRIDE
            dy[o] = y[o + 3]
            dy[o + 1] = y[o + 4]
            dy[o + 2] = y[o + 5]
            dy[o + 3] = 0.0
            dy[o + 4] = 0.0
            dy[o + 5] = -g

        cfx = 0.0
        cfy = 0.0
        cfz = 0.0
        if severed[i] == 0:
            px = y[base]
            py = y[base + 1]
            pz = y[base + 2]
            pvx = y[base + 3]
            pvy = y[base + 4]
            pvz = y[base + 5]
            for j in range(nb + 1):
                if j < nb:
                    o = bb + j * BEAD_STRIDE
                    qx = y[o]
                    qy = y[o + 1]
                    qz = y[o + 2]
                    qvx = y[o + 3]
                    qvy = y[o + 4]
                    qvz = y[o + 5]
                else:
                    qx = pLx + att[i, 0]
                    qy = pLy + att[i, 1]
                    qz = pLz + att[i, 2]
                    qvx = vLx
                    qvy = vLy
                    qvz = vLz
                ex = qx - px
                ey = qy - py
                ez = qz - pz
                ell = math.sqrt(ex * ex + ey * ey + ez * ez)
                if ell > 1e-9:
                    ldot = (ex * (qvx - pvx) + ey * (qvy - pvy)
                            + ez * (qvz - pvz)) / ell
                    mag = ks * (ell - l0) + cs * ldot
                    if ell > l0 and mag > 0.0:
                        s = mag / ell
                        Fx = s * ex
                        Fy = s * ey
                        Fz = s * ez
                        if j == 0:
                            cfx += Fx
                            cfy += Fy
                            cfz += Fz
                        else:
                            o = bb + (j - 1) * BEAD_STRIDE
                            dy[o + 3] += Fx / m_b
                            dy[o + 4] += Fy / m_b
                            dy[o + 5] += Fz / m_b
                        if j == nb:
                            fLx -= Fx
                            fLy -= Fy
                            fLz -= Fz
                        else:
                            o = bb + j * BEAD_STRIDE
                            dy[o + 3] -= Fx / m_b
                            dy[o + 4] -= Fy / m_b
                            dy[o + 5] -= Fz / m_b
                else:
                    n_coincident += 1
                px = qx
                py = qy
                pz = qz
                pvx = qvx
                pvy = qvy
                pvz = qvz

        # translational dynamics
        dy[base] = y[base + 3]
        dy[base + 1] = y[base + 4]
        dy[base + 2] = y[base + 5]
        tx = f[i] * y[base + 8]    # thrust along body z: third column of R
        ty = f[i] * y[base + 11]
        tz = f[i] * y[base + 14]
        dfx = 0.0
        dfy = 0.0
        dfz = 0.0
        if wind_on == 1:
            dfx = c_drag * (gust[0] - y[base + 3])
            dfy = c_drag * (gust[1] - y[base + 4])
            dfz = c_drag * (gust[2] - y[base + 5])
            nrm = math.sqrt(dfx * dfx + dfy * dfy + dfz * dfz)
            if nrm > wmax:
                sc = wmax / nrm
                dfx *= sc
                dfy *= sc
                dfz *= sc
        dy[base + 3] = (tx + cfx + dfx) / m_d
        dy[base + 4] = (ty + cfy + dfy) / m_d
        dy[base + 5] = (tz + cfz + dfz) / m_d - g

        # attitude: Rdot = R [w]x, Euler equations with diagonal J
        wx = y[base + 15]
        wy = y[base + 16]
        wz = y[base + 17]
        for r in range(3):
            r0 = y[base + 6 + 3 * r]
            r1 = y[base + 6 + 3 * r + 1]
            r2 = y[base + 6 + 3 * r + 2]
            dy[base + 6 + 3 * r] = r1 * wz - r2 * wy
            dy[base + 6 + 3 * r + 1] = r2 * wx - r0 * wz
            dy[base + 6 + 3 * r + 2] = r0 * wy - r1 * wx
        dy[base + 15] = (tau[i, 0] - wy * wz * (Jz - Jy)) / Jx
        dy[base + 16] = (tau[i, 1] - wz * wx * (Jx - Jz)) / Jy
        dy[base + 17] = (tau[i, 2] - wx * wy * (Jy - Jx)) / Jz

    # payload
    dfx = 0.0
    dfy = 0.0
    dfz = 0.0
    if wind_on == 1:
        dfx = c_drag * (gust[0] - vLx)
        dfy = c_drag * (gust[1] - vLy)
        dfz = c_drag * (gust[2] - vLz)
        nrm = math.sqrt(dfx * dfx + dfy * dfy + dfz * dfz)
        if nrm > wmax:
            sc = wmax / nrm
            dfx *= sc
            dfy *= sc
            dfz *= sc
    dy[offL] = vLx
    dy[offL + 1] = vLy
    dy[offL + 2] = vLz
    dy[offL + 3] = (fLx + dfx) / m_L
    dy[offL + 4] = (fLy + dfy) / m_L
    dy[offL + 5] = (fLz + dfz) / m_L - g
    return n_coincident


@_jit
def rk3_step(y, yt, k1, k2, k3, dt, f, tau, severed, gust, wind_on, att,
             n, nb, m_d, m_L, m_b, g, ks, cs, l0, c_drag, wmax, Jx, Jy, Jz):
    """One explicit third-order Runge-Kutta step (Kutta's scheme), in place."""
    ny = y.shape[0]
    deriv(y, k1, f, tau, severed, gust, wind_on, att, n, nb,
          m_d, m_L, m_b, g, ks, cs, l0, c_drag, wmax, Jx, Jy, Jz)
    for idx in range(ny):
        yt[idx] = y[idx] + 0.5 * dt * k1[idx]
    deriv(yt, k2, f, tau, severed, gust, wind_on, att, n, nb,
          m_d, m_L, m_b, g, ks, cs, l0, c_drag, wmax, Jx, Jy, Jz)
    for idx in range(ny):
        yt[idx] = y[idx] - dt * k1[idx] + 2.0 * dt * k2[idx]
    deriv(yt, k3, f, tau, severed, gust, wind_on, att, n, nb,
          m_d, m_L, m_b, g, ks, cs, l0, c_drag, wmax, Jx, Jy, Jz)
    for idx in range(ny):
        y[idx] += dt / 6.0 * (k1[idx] + 4.0 * k2[idx] + k3[idx])


@_jit
def reorthonormalize(y, n):
    """Two Newton iterations of R <- R (3I - R^T R)/2 per drone block.

    Keeps per-tick orthonormality drift far below 1e-9.
    """
    for i in range(n):
        base = DRONE_STRIDE * i + 6
        for _ in range(2):
            # G = R^T R
            g00 = g01 = g02 = g11 = g12 = g22 = 0.0
            for r in range(3):
                a = y[base + 3 * r]
                b = y[base + 3 * r + 1]
                c = y[base + 3 * r + 2]
                g00 += a * a
                g01 += a * b
                g02 += a * c
                g11 += b * b
                g12 += b * c
                g22 += c * c
            h00 = 1.5 - 0.5 * g00
            h11 = 1.5 - 0.5 * g11
            h22 = 1.5 - 0.5 * g22
            h01 = -0.5 * g01
            h02 = -0.5 * g02
            h12 = -0.5 * g12
            for r in range(3):
                a = y[base + 3 * r]
                b = y[base + 3 * r + 1]
                c = y[base + 3 * r + 2]
                y[base + 3 * r] = a * h00 + b * h01 + c * h02
                y[base + 3 * r + 1] = a * h01 + b * h11 + c * h12
                y[base + 3 * r + 2] = a * h02 + b * h12 + c * h22


@_jit
def advance_tick(y, yt, k1, k2, k3, n_sub, dt_sub, f, tau, severed, gust,
                 wind_on, att, n, nb, m_d, m_L, m_b, g, ks, cs, l0,
                 c_drag, wmax, Jx, Jy, Jz):
    """Advance one control tick: n_sub RK3 substeps with controls held ZOH,
    then rotation re-orthonormalization."""
    for _ in range(n_sub):
        rk3_step(y, yt, k1, k2, k3, dt_sub, f, tau, severed, gust, wind_on,
                 att, n, nb, m_d, m_L, m_b, g, ks, cs, l0, c_drag, wmax,
                 Jx, Jy, Jz)
    reorthonormalize(y, n)


@_jit
def measure_tensions(y, severed, att, n, nb, ks, cs, l0, out):
    """Per-rope drone-side scalar tension (norm of the first segment's force)."""
    offL = DRONE_STRIDE * n
    offB = offL + 6
    for i in range(n):
        if severed[i] == 1:
            out[i] = 0.0
            continue
        base = DRONE_STRIDE * i
        o = offB + i * nb * BEAD_STRIDE
        ex = y[o] - y[base]
        ey = y[o + 1] - y[base + 1]
        ez = y[o + 2] - y[base + 2]
        ell = math.sqrt(ex * ex + ey * ey + ez * ez)
        if ell <= max(l0, 1e-9):
            out[i] = 0.0
            continue
        ldot = (ex * (y[o + 3] - y[base + 3]) + ey * (y[o + 4] - y[base + 4])
                + ez * (y[o + 5] - y[base + 5])) / ell
        mag = ks * (ell - l0) + cs * ldot
        out[i] = mag if mag > 0.0 else 0.0


@_jit
def control_tick(y, T, slot, vld, u_ad, ff_on, use_override, a_override,
                 n, m_d, g, kp_xy, kd_xy, kp_z, kd_z, kp_att, kd_att,
                 k_swing, w_swing, s_max, kappa, axy_max, f_min, f_max,
                 tau_max, Jx, Jy, Jz, theta_max,
                 out_f, out_tau, out_atgt, out_ast, out_code):
    """Fused baseline cascade for all drones at one tick.

    Inputs beyond each drone's own state are exactly the admissible ones:
    own tension T[i], payload velocity (read from the state vector, standing
    in for the shared payload-velocity measurement) and the reference slot.
    """
    offL = DRONE_STRIDE * n
    # swing velocity: payload velocity relative to the moving reference, so
    # the shift damps the pendulum without biasing steady cruise tracking
    vLx = y[offL + 3] - vld[0]
    vLy = y[offL + 4] - vld[1]

    # anti-swing slot shift (identical for all drones)
    sx = -k_swing * vLx
    sy = -k_swing * vLy
    nrm = math.sqrt(sx * sx + sy * sy)
    if nrm > s_max:
        sc = s_max / nrm
        sx *= sc
        sy *= sc

    for i in range(n):
        base = DRONE_STRIDE * i
        epx = slot[i, 0] + sx - y[base]
        epy = slot[i, 1] + sy - y[base + 1]
        epz = slot[i, 2] - y[base + 2]
        evx = vld[0] - y[base + 3]
        evy = vld[1] - y[base + 4]
        evz = vld[2] - y[base + 5]

        atx = kp_xy * epx + kd_xy * evx + w_swing * (-k_swing * vLx)
        aty = kp_xy * epy + kd_xy * evy + w_swing * (-k_swing * vLy)
        atz = kp_z * epz + kd_z * evz + u_ad[i]
        out_atgt[i, 0] = atx
        out_atgt[i, 1] = aty
        out_atgt[i, 2] = atz

        t_ff = T[i] if ff_on == 1 else 0.0
        az_min = (f_min - t_ff) / m_d - g
        az_max = (f_max - t_ff) / m_d - g

        if use_override == 1:
            ax = a_override[i, 0]
            ay = a_override[i, 1]
            az = a_override[i, 2]
            tol = 1e-9
            cx = 1 if ax <= -axy_max + tol else (2 if ax >= axy_max - tol else 0)
            cy = 1 if ay <= -axy_max + tol else (2 if ay >= axy_max - tol else 0)
            cz = 1 if az <= az_min + tol else (2 if az >= az_max - tol else 0)
        else:
            ax = kappa * atx
            cx = 0
            if ax < -axy_max:
                ax = -axy_max
                cx = 1
            elif ax > axy_max:
                ax = axy_max
                cx = 2
            ay = kappa * aty
            cy = 0
            if ay < -axy_max:
                ay = -axy_max
                cy = 1
            elif ay > axy_max:
                ay = axy_max
                cy = 2
            az = kappa * atz
            cz = 0
            if az < az_min:
                az = az_min
                cz = 1
            elif az > az_max:
                az = az_max
                cz = 2
        out_ast[i, 0] = ax
        out_ast[i, 1] = ay
        out_ast[i, 2] = az
        out_code[i] = cx + 3 * cy + 9 * cz

        fi = m_d * (g + az) + t_ff
        if fi < f_min:
            fi = f_min
        elif fi > f_max:
            fi = f_max
        out_f[i] = fi

        # attitude setpoints from the projected lateral acceleration
        pitch_d = ax / g
        if pitch_d > theta_max:
            pitch_d = theta_max
        elif pitch_d < -theta_max:
            pitch_d = -theta_max
        roll_d = -ay / g
        if roll_d > theta_max:
            roll_d = theta_max
        elif roll_d < -theta_max:
            roll_d = -theta_max

        # ZYX Euler extraction: R row-major at base+6
        r20 = y[base + 12]
        if r20 > 1.0:
            r20 = 1.0
        elif r20 < -1.0:
            r20 = -1.0
        pitch = -math.asin(r20)
        roll = math.atan2(y[base + 13], y[base + 14])
        e_yaw = -0.5 * (y[base + 9] - y[base + 7])   # -(R21 - R12)/2

        wx = y[base + 15]
        wy = y[base + 16]
        wz = y[base + 17]
        # direct torque gains (N*m per rad): with the small quadrotor
        # inertia this yields a fast, heavily damped inner loop, which the
        # outer 30/15 horizontal PD requires for cascade stability
        tx = kp_att * (roll_d - roll) - kd_att * wx
        ty = kp_att * (pitch_d - pitch) - kd_att * wy
        tz = kp_att * e_yaw - kd_att * wz
        if tx > tau_max:
            tx = tau_max
        elif tx < -tau_max:
            tx = -tau_max
        if ty > tau_max:
            ty = tau_max
        elif ty < -tau_max:
            ty = -tau_max
        if tz > tau_max:
            tz = tau_max
        elif tz < -tau_max:
            tz = -tau_max
        out_tau[i, 0] = tx
        out_tau[i, 1] = ty
        out_tau[i, 2] = tz


def py_func(kernel):
    """Return the pure-python version of a (possibly jitted) kernel."""
    return getattr(kernel, "py_func", kernel)
