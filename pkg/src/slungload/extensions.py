"""Optional control layers: L1 adaptive altitude augmentation, receding-horizon
MPC with a penalized tension ceiling, and the fault-triggered formation
reshape supervisor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from . import qpsolver
from .analysis import lyap_solve
from .controller import smoothstep
from .params import (GRAVITY, K_EFF, ControllerParams, L1Params, MpcParams,
                     ReshapeParams)

BIG = 1e20


# ---------------------------------------------------------------------------
# L1 adaptive altitude layer
# ---------------------------------------------------------------------------

def gamma_window(ts: float, p22: float, omega_c: float):
    """Admissible adaptation-gain window (bandwidth floor, discretization
    ceiling)."""
    if ts <= 0 or p22 <= 0 or omega_c <= 0:
        raise ValueError("all arguments must be positive")
    return omega_c / p22, 2.0 / (ts * p22)


class L1Bank:
    """One L1 loop per drone on the altitude-error channel.

    Predictor on the closed-loop error model A_m = [[0,1],[-kp_z,-kd_z]],
    projected-gradient estimate of the matched residual, first-order low-pass
    on the injected correction. Runs at ts (5 substeps per control tick) with
    the measured (e_z, e_z_dot) held ZOH across the tick.
    """

    def __init__(self, n: int, params: L1Params | None = None,
                 kp_z: float = 100.0, kd_z: float = 24.0):
        self.params = params or L1Params()
        self.n = n
        self.A = np.array([[0.0, 1.0], [-kp_z, -kd_z]])
        P = lyap_solve(kp_z, kd_z)
        self.pb = np.array([P[0, 1], P[1, 1]])   # P b with b = (0, 1)
        self.xhat = np.zeros((n, 2))
        self.delta = np.zeros(n)
        self.u_ad = np.zeros(n)
        self.projection_hits = 0

    def update(self, e_z, e_dot, n_sub: int = 5):
        """Advance n_sub adaptation substeps; returns the per-drone injection
        u_ad (added to the vertical target acceleration)."""
        p = self.params
        x = np.stack([np.asarray(e_z, float), np.asarray(e_dot, float)], axis=-1)
        for _ in range(n_sub):
            xt = self.xhat - x
            grad = xt @ self.pb
            self.delta -= p.ts * p.gamma * grad
            clipped = np.clip(self.delta, -p.delta_max, p.delta_max)
            self.projection_hits += int(np.sum(clipped != self.delta))
            self.delta = clipped
            dx = self.xhat @ self.A.T
            dx[:, 1] += self.delta + self.u_ad
            self.xhat += p.ts * dx
            self.u_ad += p.ts * p.omega_c * (-self.delta - self.u_ad)
        return self.u_ad.copy()


# ---------------------------------------------------------------------------
# MPC layer
# ---------------------------------------------------------------------------

@dataclass
class MpcResult:
    a_star: np.ndarray
    slack: np.ndarray
    status: str
    iterations: int


class MpcLayer:
    """Horizon QP over per-step accelerations + tension-ceiling slacks.

    The tension forecast holds the current chord rate constant, so it is
    decoupled from the acceleration decision variables; the acceleration block
    then reduces exactly to the baseline projection whenever the forecast stays
    under the ceiling. The full QP is nevertheless solved by the ADMM backend
    every MPC tick (warm-started per drone) so solver health is exercised.
    """

    def __init__(self, n_drones: int, cfg: MpcParams | None = None,
                 ctrl: ControllerParams | None = None, m_drone: float = 1.5,
                 f_min: float = 0.0, f_max: float = 150.0,
                 k_eff: float = K_EFF):
        self.cfg = cfg or MpcParams()
        self.ctrl = ctrl or ControllerParams()
        self.m_drone = m_drone
        self.f_min = f_min
        self.f_max = f_max
        self.k_eff = k_eff
        Np = self.cfg.horizon
        nu, ns = 3 * Np, Np
        nz = nu + ns
        wt, we = self.ctrl.w_t, self.ctrl.w_e
        P = np.zeros((nz, nz))
        P[:nu, :nu] = 2.0 * (wt + we) * np.eye(nu)
        rows = []
        # u boxes
        rows.append(np.hstack([np.eye(nu), np.zeros((nu, ns))]))
        # s >= 0
        rows.append(np.hstack([np.zeros((ns, nu)), np.eye(ns)]))
        # -s_k <= T_max - That_k
        rows.append(np.hstack([np.zeros((ns, nu)), -np.eye(ns)]))
        A = np.vstack(rows)
        # large rho: the l1 slack cost (w_slack ~ 1e4) needs the constraint
        # duals to reach that scale, which small-rho ADMM does too slowly
        self._template = qpsolver.QpProblem(
            P=P, q=np.zeros(nz), A=A,
            l=-BIG * np.ones(A.shape[0]), u=BIG * np.ones(A.shape[0]),
            rho=100.0)
        self._template.validate()
        qpsolver._factor(self._template)
        self._warm = [(None, None)] * n_drones
        self._last = [np.zeros(3) for _ in range(n_drones)]
        self.fallbacks = 0
        self.n_solves = 0
        self.statuses_ok = True

    def tension_forecast(self, t_now: float, chord_rate: float) -> np.ndarray:
        k = np.arange(1, self.cfg.horizon + 1)
        return np.maximum(0.0, t_now + self.k_eff * chord_rate * k * self.cfg.dt)

    def step(self, drone: int, a_target, t_ff: float, t_now: float,
             chord_rate: float, tol: float = 1e-6) -> MpcResult:
        cfg, ctrl = self.cfg, self.ctrl
        Np = cfg.horizon
        nu, ns = 3 * Np, Np
        prob = self._template
        lim = ctrl.axy_max
        az_min = (self.f_min - t_ff) / self.m_drone - GRAVITY
        az_max = (self.f_max - t_ff) / self.m_drone - GRAVITY
        lo = np.tile([-lim, -lim, az_min], Np)
        hi = np.tile([lim, lim, az_max], Np)
        that = self.tension_forecast(t_now, chord_rate)
        q = np.empty(nu + ns)
        q[:nu] = np.tile(-2.0 * ctrl.w_t * np.asarray(a_target, float), Np)
        q[nu:] = cfg.w_slack
        prob.q = q
        prob.l = np.concatenate([lo, np.zeros(ns), -BIG * np.ones(ns)])
        prob.u = np.concatenate([hi, BIG * np.ones(ns), cfg.t_max - that])
        prob.x0, prob.y0 = self._warm[drone]
        res = qpsolver.solve(prob, tol=tol, validate=False)
        self._warm[drone] = (prob.x0, prob.y0)
        self.n_solves += 1
        if res.status != "solved":
            self.statuses_ok = False
            self.fallbacks += 1
            return MpcResult(self._last[drone].copy(), np.zeros(ns),
                             res.status, res.iterations)
        a_star = res.x[:3].copy()
        self._last[drone] = a_star.copy()
        return MpcResult(a_star, res.x[nu:].copy(), res.status, res.iterations)


# ---------------------------------------------------------------------------
# Formation reshape
# ---------------------------------------------------------------------------

def _wrap(a):
    return (np.asarray(a, float) + np.pi) % (2.0 * np.pi) - np.pi


def reshape_targets(current_angles, survivors):
    """Equiangular reassignment of survivor slot angles.

    Survivors keep their cyclic order; the global phase minimizes the total
    absolute angular travel (circular-median choice, midpoint of the optimal
    interval for an even count). Returns {drone: target_angle}.
    """
    survivors = sorted(survivors, key=lambda i: current_angles[i] % (2 * np.pi))
    ns = len(survivors)
    if ns < 2:
        raise ValueError("need at least 2 survivors")
    phi = np.array([current_angles[i] for i in survivors])
    spacing = 2.0 * np.pi * np.arange(ns) / ns
    resid = phi - spacing
    # circular median of the residuals
    ref = math.atan2(np.sin(resid).mean(), np.cos(resid).mean())
    d = np.sort(_wrap(resid - ref))
    if ns % 2 == 1:
        theta0 = ref + d[ns // 2]
    else:
        theta0 = ref + 0.5 * (d[ns // 2 - 1] + d[ns // 2])
    targets = theta0 + spacing
    # express each target within pi of its source (minimal travel direction)
    targets = phi + _wrap(targets - phi)
    return {i: float(t) for i, t in zip(survivors, targets)}


def _hover_equilibrium_tensions(angles, ring=0.80, elev=1.25, rest=1.25,
                                k=K_EFF, m_L=10.0):
    """Static cable tensions of a point payload hung from ring anchors.

    Anchors sit on the ring at `elev` above the nominal payload point; the
    payload position minimizes elastic + gravitational energy with
    tension-only springs. Used by the reshape static model.
    """
    angles = np.asarray(angles, float)
    anchors = np.stack([ring * np.cos(angles), ring * np.sin(angles),
                        np.full(len(angles), elev)], axis=-1)

    def energy_grad(r):
        d = r - anchors
        ell = np.linalg.norm(d, axis=1)
        stretch = np.maximum(0.0, ell - rest)
        U = 0.5 * k * np.sum(stretch ** 2) + m_L * GRAVITY * r[2]
        g = k * (stretch / np.maximum(ell, 1e-12))[:, None] * d
        grad = g.sum(axis=0) + np.array([0.0, 0.0, m_L * GRAVITY])
        return U, grad

    x0 = np.array([0.0, 0.0, elev - rest - m_L * GRAVITY / (k * len(angles))])
    res = scipy.optimize.minimize(energy_grad, x0, jac=True, method="L-BFGS-B",
                                  options={"ftol": 1e-15, "gtol": 1e-12,
                                           "maxiter": 500})
    d = res.x - anchors
    ell = np.linalg.norm(d, axis=1)
    return k * np.maximum(0.0, ell - rest)


def reshape_static_tension_reduction(n: int = 4, severed: int = 0,
                                     ring: float = 0.80, elev: float = 1.25,
                                     rest: float = 1.25, k: float = K_EFF,
                                     m_L: float = 10.0):
    """Worst-case static peak-tension reduction of the equiangular
    reassignment vs. leaving survivors at their nominal slots, under the
    hover-geometry elastic load-sharing model.

    Returns (reduction_fraction, targets, nominal_angles).
    """
    nominal = 2.0 * np.pi * np.arange(n) / n
    survivors = [i for i in range(n) if i != severed]
    before = _hover_equilibrium_tensions(nominal[survivors], ring, elev,
                                         rest, k, m_L)
    targets = reshape_targets(dict(enumerate(nominal)), survivors)
    after = _hover_equilibrium_tensions([targets[i] for i in survivors],
                                        ring, elev, rest, k, m_L)
    reduction = 1.0 - after.max() / before.max()
    return reduction, targets, nominal


class ReshapeSupervisor:
    """Fault-latch detector + slot-angle scheduler.

    The severed drone self-detects (own tension < T_fault sustained tau_det),
    latches once, and broadcasts its index — ceil(log2 N) bits, the only
    inter-drone message in the system. Survivors then glide to the equiangular
    reassignment through a quintic smoothstep over t_trans seconds.
    """

    def __init__(self, n: int, params: ReshapeParams | None = None,
                 dt: float = 1e-3):
        self.params = params or ReshapeParams()
        self.n = n
        self.dt = dt
        self.nominal = 2.0 * np.pi * np.arange(n) / n
        self._below = np.zeros(n)           # continuous time below threshold
        self.latched: set[int] = set()
        self.broadcast_bits = 0
        self.bits_per_fault = math.ceil(math.log2(n))
        # per-drone (source, target, t_start) transition; None = hold angle
        self._trans = [None] * n
        self._angle = self.nominal.copy()

    def current_angles(self, t: float) -> np.ndarray:
        out = self._angle.copy()
        for i, tr in enumerate(self._trans):
            if tr is not None:
                a0, a1, t0 = tr
                s = float(smoothstep((t - t0) / self.params.t_trans))
                out[i] = a0 + (a1 - a0) * s
                if s >= 1.0:
                    self._angle[i] = a1
                    self._trans[i] = None
        return out

    def update(self, t: float, tensions) -> np.ndarray:
        """Feed one tick of own-tension measurements; returns slot angles."""
        p = self.params
        tensions = np.asarray(tensions, float)
        below = tensions < p.t_fault
        self._below = np.where(below, self._below + self.dt, 0.0)
        for i in range(self.n):
            if i not in self.latched and self._below[i] >= p.tau_det:
                self._latch(i, t)
        return self.current_angles(t)

    def _latch(self, idx: int, t: float):
        self.latched.add(idx)
        self.broadcast_bits += self.bits_per_fault
        survivors = [i for i in range(self.n) if i not in self.latched]
        if len(survivors) < 2:
            return
        current = self.current_angles(t)
        if self.params.anchor_aware:
            # fixed payload-side anchors: each survivor's minimum-stress slot
            # is directly above its own anchor
            targets = {i: self.nominal[i] for i in survivors}
        else:
            targets = reshape_targets(dict(enumerate(current)), survivors)
        for i in survivors:
            self._angle[i] = current[i]
            self._trans[i] = (current[i], targets[i], t)
