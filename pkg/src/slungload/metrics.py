"""Post-run evaluation: tracking/recovery metrics, Lyapunov-proxy estimators
and the H1a/H1b/H3 admissibility gates.

Every function is a pure function of trace arrays so that recomputing metrics
from stored artifacts reproduces the stored values byte-identically.
"""

from __future__ import annotations

import math

import numpy as np

from . import cables
from .analysis import lyap_solve, pendulum_constants

RECOVERY_THRESHOLD = 0.35   # m, 3-D
RECOVERY_HOLD = 0.3         # s
H3_MAX = 0.01
EVAL_WINDOW = (8.0, 30.0)
DC_WINDOW = 0.2             # s pre-fault DC-offset estimation
THRUST_WARN = 0.9           # fraction of f_max


def _win(t, lo, hi):
    return (t >= lo - 1e-12) & (t <= hi + 1e-12)


def rmse(pL, ref_p, t, window=EVAL_WINDOW):
    m = _win(t, *window)
    e = np.asarray(pL, float)[m] - np.asarray(ref_p, float)[m]
    return {
        "rmse_3d": float(np.sqrt(np.mean(np.sum(e ** 2, axis=1)))),
        "rmse_xy": float(np.sqrt(np.mean(np.sum(e[:, :2] ** 2, axis=1)))),
        "rmse_z": float(np.sqrt(np.mean(e[:, 2] ** 2))),
    }


def recovery_time(e3d, t, t_star, threshold=RECOVERY_THRESHOLD,
                  hold=RECOVERY_HOLD):
    """First time after t_star with ||e|| below threshold held continuously;
    returns seconds relative to t_star, or None if never recovered."""
    dt = float(t[1] - t[0])
    k0 = int(np.searchsorted(t, t_star - 1e-12))
    hold_n = max(1, int(round(hold / dt)))
    below = e3d[k0:] < threshold
    if len(below) < hold_n:
        return None
    # run-length scan for the first window of hold_n consecutive True
    count = 0
    for j, b in enumerate(below):
        count = count + 1 if b else 0
        if count >= hold_n:
            start = j - hold_n + 1
            return float(max(0.0, start * dt))
    return None


def iae(e3d, t, t_star, gap):
    tau_pend, _ = pendulum_constants(1.25)
    horizon = min(tau_pend, gap)
    m = _win(t, t_star, t_star + horizon)
    return float(np.trapezoid(e3d[m], t[m]))


def lyapunov_proxy(e_z, dt, P=None, smooth_s=0.010):
    """V(t) = xi^T P_v xi with xi = (e_z, smoothed central-difference e_z_dot)."""
    if P is None:
        P = lyap_solve(100.0, 24.0)
    e_z = np.asarray(e_z, float)
    ed = np.gradient(e_z, dt)
    nwin = max(1, int(round(smooth_s / dt)) | 1)   # odd-length boxcar
    kern = np.ones(nwin) / nwin
    ed = np.convolve(ed, kern, mode="same")
    return (P[0, 0] * e_z ** 2 + 2.0 * P[0, 1] * e_z * ed + P[1, 1] * ed ** 2)


def _fault_windows(t, fault_times, tau_pend):
    """Per-fault analysis horizon: min(tau_pend, gap to next fault, run end)."""
    t_end = float(t[-1])
    wins = []
    for j, tk in enumerate(fault_times):
        gap = (fault_times[j + 1] - tk) if j + 1 < len(fault_times) else np.inf
        wins.append(min(tau_pend, gap, t_end - tk))
    return wins


def rho_hat(e, t, fault_times, P=None):
    """Contraction estimators over consecutive faults.

    (a) 'excursion': ratio of per-fault peak 3-D DC-removed error excursions
        (the gate estimator; the composite certificate covers altitude and
        horizontal channels together), DC taken per axis over the 0.2 s
        window ending at each fault.
    (b) 'proxy_prefault': raw altitude-proxy V(t2-)/V(t1-).
    (c) 'proxy_excursion': ratio of per-fault peak altitude-proxy V on the
        DC-removed altitude error.
    """
    if len(fault_times) < 2:
        raise ValueError("need at least two faults")
    e = np.atleast_2d(np.asarray(e, float))
    if e.shape[0] == 1:
        e = e.T
    e_z = e[:, -1]
    dt = float(t[1] - t[0])
    tau_pend, _ = pendulum_constants(1.25)
    wins = _fault_windows(t, fault_times, tau_pend)
    V_raw = lyapunov_proxy(e_z, dt, P)
    peaks, vpeaks, vpre = [], [], []
    for tk, wk in zip(fault_times, wins):
        k = int(np.searchsorted(t, tk - 1e-12))
        pre = _win(t, tk - DC_WINDOW, tk)
        dc = e[pre].mean(axis=0) if pre.any() else np.zeros(e.shape[1])
        post = _win(t, tk, tk + wk)
        peaks.append(float(np.max(np.linalg.norm(e[post] - dc, axis=1))))
        V_dc = lyapunov_proxy(e_z - dc[-1], dt, P)
        vpeaks.append(float(np.max(V_dc[post])))
        vpre.append(float(V_raw[max(0, k - 1)]))

    def ratio(a, b):
        return float(a / b) if b > 0 else None

    return {
        "excursion": ratio(peaks[1], peaks[0]),
        "proxy_prefault": ratio(vpre[1], vpre[0]),
        "proxy_excursion": ratio(vpeaks[1], vpeaks[0]),
        "peaks_m": peaks,
        "v_peaks": vpeaks,
    }


def chi_hat(e_z, t, fault_times, window=0.5, P=None):
    """Per-fault Lyapunov-proxy jump estimate: peak V within `window` after
    the fault minus V just before it."""
    dt = float(t[1] - t[0])
    V = lyapunov_proxy(np.asarray(e_z, float), dt, P)
    out = []
    for tk in fault_times:
        k = int(np.searchsorted(t, tk - 1e-12))
        post = _win(t, tk, tk + window)
        out.append(float(np.max(V[post]) - V[max(0, k - 1)]))
    return out


def domain_gates(tension, code, active, t, window=EVAL_WINDOW):
    """H1a (max slack run), H1b (slack duty), H3 (active-set transition rate)
    over the evaluation window, survivors only."""
    m = _win(t, *window)
    dt = float(t[1] - t[0])
    audit = cables.slack_audit(tension[m], dt, active[m].astype(bool))
    code_w = code[m]
    act_w = active[m].astype(bool)
    both = act_w[1:] & act_w[:-1]
    changes = (code_w[1:] != code_w[:-1]) & both
    denom = int(both.sum())
    h3 = float(changes.sum() / denom) if denom else 0.0
    return {
        "h1a_ms": audit.max_run * 1e3,
        "h1b": audit.duty,
        "h3": h3,
        "pass_h1a": bool(audit.pass_h1a),
        "pass_h1b": bool(audit.pass_h1b),
        "pass_h3": bool(h3 <= H3_MAX),
        "per_rope_max_run_ms": [r * 1e3 for r in audit.per_rope_max_run],
    }


def actuator_audit(thrust, t, f_max=150.0, window=EVAL_WINDOW):
    m = _win(t, *window)
    dt = float(t[1] - t[0])
    f = np.asarray(thrust, float)[m]
    ratios = f.max(axis=0) / f_max
    above = (f > THRUST_WARN * f_max).sum(axis=0) * dt
    return {
        "max_ratio_per_drone": [float(r) for r in ratios],
        "max_ratio": float(ratios.max()),
        "time_above_090_s": [float(a) for a in above],
        "saturated": bool((f >= f_max - 1e-9).any()),
    }


def sag_mm(pL_z, ref_z, t, t_lo, t_hi):
    m = _win(t, t_lo, t_hi)
    return float(np.max(np.maximum(0.0, ref_z[m] - pL_z[m])) * 1e3)


def compute_metrics(traces: dict, fault_times=None, fault_drones=None,
                    f_max=150.0, window=EVAL_WINDOW, tension_ceiling=None):
    """Full RunMetrics dict from a trace-array bundle.

    traces: t, pL, ref_p, tension, thrust, code, active (full rate).
    """
    t = np.asarray(traces["t"], float)
    pL = np.asarray(traces["pL"], float)
    ref = np.asarray(traces["ref_p"], float)
    tension = np.asarray(traces["tension"], float)
    active = np.asarray(traces["active"])
    fault_times = list(fault_times or [])
    fault_drones = list(fault_drones or [])
    dt = float(t[1] - t[0])
    tau_pend, _ = pendulum_constants(1.25)

    e = pL - ref
    e3d = np.sqrt(np.sum(e ** 2, axis=1))
    e_z = e[:, 2]

    out = dict(rmse(pL, ref, t, window))
    m = _win(t, *window)
    act = active[m].astype(bool)
    tw = tension[m]
    out["peak_tension_N"] = float(tw[act].max()) if act.any() else 0.0
    out["asymmetry_N"] = cables.tension_asymmetry(tw, act)
    out["gates"] = domain_gates(tension, traces["code"], active, t, window)
    out["actuator"] = actuator_audit(traces["thrust"], t, f_max, window)

    per_fault = []
    wins = _fault_windows(t, fault_times, tau_pend)
    chis = chi_hat(e_z, t, fault_times) if fault_times else []
    for j, tk in enumerate(fault_times):
        gap = (fault_times[j + 1] - tk) if j + 1 < len(fault_times) else math.inf
        post = _win(t, tk, tk + wins[j])
        per_fault.append({
            "t_star": tk,
            "drone": fault_drones[j] if j < len(fault_drones) else None,
            "peak_error_mm": float(np.max(e3d[post]) * 1e3),
            "t_rec_s": recovery_time(e3d, t, tk),
            "iae_ms": iae(e3d, t, tk, gap),
            "sag_mm": sag_mm(pL[:, 2], ref[:, 2], t, tk, tk + tau_pend),
            "chi_hat": chis[j],
        })
    out["per_fault"] = per_fault
    if fault_times:
        out["peak_sag_mm"] = max(pf["sag_mm"] for pf in per_fault)
    else:
        out["peak_sag_mm"] = sag_mm(pL[:, 2], ref[:, 2], t, *window)
    out["rho_hat"] = (rho_hat(e, t, fault_times)
                      if len(fault_times) >= 2 else None)
    if tension_ceiling is not None:
        over = (tw > tension_ceiling).any(axis=1)
        out["time_over_ceiling"] = float(over.mean())
        out["tension_ceiling_N"] = float(tension_ceiling)
    return out
