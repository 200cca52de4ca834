"""Seeded Dryden low-altitude turbulence and per-body drag forces.

The longitudinal (u) channel is a first-order shaping filter discretized
exactly (OU process); the lateral/vertical (v, w) channels use the standard
second-order Dryden shaping filter in state-space form, discretized with the
exact ZOH transition matrix and the exact stationary-consistent noise
covariance Qd = S - Ad S Ad^T (S the continuous stationary covariance). The
stationary output variance therefore equals sigma^2 exactly at any step size.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .params import DrydenParams


class _SecondOrderChannel:
    def __init__(self, sigma, scale, V, dt):
        tau = scale / V
        A = np.array([[0.0, 1.0], [-1.0 / tau ** 2, -2.0 / tau]])
        B = np.array([[0.0], [1.0]])
        # continuous stationary covariance for unit-intensity noise
        S = scipy.linalg.solve_continuous_lyapunov(A, -(B @ B.T))
        C = np.array([1.0 / tau ** 2, math.sqrt(3.0) / tau])
        var0 = float(C @ S @ C)
        self.C = C * (sigma / math.sqrt(var0)) if var0 > 0 else C * 0.0
        self.Ad = scipy.linalg.expm(A * dt)
        Qd = S - self.Ad @ S @ self.Ad.T
        Qd = 0.5 * (Qd + Qd.T)
        self.L = np.linalg.cholesky(Qd + 1e-18 * np.eye(2))
        self.x = np.zeros(2)

    def step(self, n2):
        self.x = self.Ad @ self.x + self.L @ n2
        return float(self.C @ self.x)


class DrydenWind:
    """Shared gust velocity for all bodies (separations << scale lengths)."""

    def __init__(self, params: DrydenParams | None = None, dt: float = 1e-3):
        self.params = params or DrydenParams()
        self.dt = dt
        p = self.params
        V = max(float(np.linalg.norm(p.mean)), 0.1)
        # u: exact OU discretization
        tau_u = p.scale[0] / V
        self._au = math.exp(-dt / tau_u)
        self._su = p.sigma[0] * math.sqrt(max(0.0, 1.0 - self._au ** 2))
        self._xu = 0.0
        self._v = _SecondOrderChannel(p.sigma[1], p.scale[1], V, dt)
        self._w = _SecondOrderChannel(p.sigma[2], p.scale[2], V, dt)
        self.rng = np.random.default_rng(p.seed)
        self.t = 0.0

    def update(self) -> np.ndarray:
        """Advance one dt and return the gust velocity vector."""
        n = self.rng.standard_normal(5)
        self._xu = self._au * self._xu + self._su * n[0]
        gv = self._v.step(n[1:3])
        gw = self._w.step(n[3:5])
        self.t += self.dt
        return np.array([self.params.mean[0] + self._xu,
                         self.params.mean[1] + gv,
                         self.params.mean[2] + gw])

    def sequence(self, n_steps: int) -> np.ndarray:
        out = np.empty((n_steps, 3))
        for k in range(n_steps):
            out[k] = self.update()
        return out


def body_force(gust, v_body, c_drag: float, w_max: float):
    """Linear drag on a body, clipped to the admissible magnitude.

    Returns (force, clipped_flag).
    """
    f = c_drag * (np.asarray(gust, float) - np.asarray(v_body, float))
    nrm = float(np.linalg.norm(f))
    if nrm > w_max:
        return f * (w_max / nrm), True
    return f, False
