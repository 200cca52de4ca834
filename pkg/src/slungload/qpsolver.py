"""Small dense convex-QP solver.

Operator-splitting (ADMM) scheme in the standard form

    min 1/2 x^T P x + q^T x    s.t.  l <= A x <= u

with over-relaxation and warm starting. Problems here are tiny (<= ~100
variables) so all linear algebra is dense; the KKT-like system
(P + sigma I + rho A^T A) is factorized once per problem structure and reused
across warm-started solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

RHO = 0.1
SIGMA = 1e-6
ALPHA = 1.6          # over-relaxation
MAX_ITER = 4000
CHECK_EVERY = 10


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    A: np.ndarray
    l: np.ndarray
    u: np.ndarray
    x0: np.ndarray | None = None
    y0: np.ndarray | None = None
    rho: float = RHO
    _cho: tuple = field(default=None, repr=False)

    def validate(self):
        n = self.q.shape[0]
        m = self.l.shape[0]
        if self.P.shape != (n, n) or self.A.shape != (m, n):
            raise ValueError("inconsistent QP dimensions")
        if not np.allclose(self.P, self.P.T, atol=1e-10):
            raise ValueError("P must be symmetric")
        # PSD check with jitter
        try:
            np.linalg.cholesky(self.P + 1e-9 * np.eye(n))
        except np.linalg.LinAlgError as exc:
            raise ValueError("P must be positive semidefinite") from exc
        if np.any(self.l > self.u):
            raise ValueError("l > u")


@dataclass
class QpResult:
    x: np.ndarray
    y: np.ndarray
    status: str          # solved | max-iter | infeasible-detected
    iterations: int
    pri_res: float
    dua_res: float


def _factor(prob: QpProblem):
    n = prob.q.shape[0]
    K = prob.P + SIGMA * np.eye(n) + prob.rho * (prob.A.T @ prob.A)
    prob._cho = scipy.linalg.cho_factor(K, lower=True)
    return prob._cho


def solve(prob: QpProblem, tol: float = 1e-6, max_iter: int = MAX_ITER,
          validate: bool = True) -> QpResult:
    """ADMM solve; warm-starts from prob.x0 / prob.y0 when provided."""
    if validate:
        prob.validate()
    n = prob.q.shape[0]
    A, q, l, u = prob.A, prob.q, prob.l, prob.u
    cho = prob._cho if prob._cho is not None else _factor(prob)
    rho = prob.rho

    x = np.zeros(n) if prob.x0 is None else prob.x0.astype(float).copy()
    y = np.zeros(l.shape[0]) if prob.y0 is None else prob.y0.astype(float).copy()
    z = np.clip(A @ x, l, u)

    pri = dua = np.inf
    status = "max-iter"
    it = 0
    dy_acc = np.zeros_like(y)
    for it in range(1, max_iter + 1):
        rhs = SIGMA * x - q + A.T @ (rho * z - y)
        x = scipy.linalg.cho_solve(cho, rhs)
        Ax = A @ x
        z_relaxed = ALPHA * Ax + (1.0 - ALPHA) * z
        z_new = np.clip(z_relaxed + y / rho, l, u)
        dy = rho * (z_relaxed - z_new)
        y = y + dy
        dy_acc = 0.9 * dy_acc + dy
        z = z_new
        if it % CHECK_EVERY == 0 or it == max_iter:
            pri = np.max(np.abs(Ax - z)) if len(z) else 0.0
            Px = prob.P @ x
            Aty = A.T @ y
            dua = np.max(np.abs(Px + q + Aty))
            # relative scaling (residuals measured against problem magnitude)
            sc_pri = 1.0 + (max(np.max(np.abs(Ax)), np.max(np.abs(z)))
                            if len(z) else 0.0)
            sc_dua = 1.0 + max(np.max(np.abs(Px)), np.max(np.abs(q)),
                               np.max(np.abs(Aty)))
            if pri <= tol * sc_pri and dua <= tol * sc_dua:
                status = "solved"
                break
            # crude divergence certificate: dual direction keeps growing while
            # supporting no feasible z movement
            if it > 500 and np.max(np.abs(y)) > 1e10:
                status = "infeasible-detected"
                break

    prob.x0, prob.y0 = x.copy(), y.copy()
    return QpResult(x=x, y=y, status=status, iterations=it,
                    pri_res=float(pri), dua_res=float(dua))


def solve_box(P, q, lb, ub, tol=1e-6, x0=None) -> QpResult:
    """Convenience wrapper for pure box-constrained QPs (A = I)."""
    n = q.shape[0]
    prob = QpProblem(P=np.asarray(P, float), q=np.asarray(q, float),
                     A=np.eye(n), l=np.asarray(lb, float),
                     u=np.asarray(ub, float), x0=x0)
    return solve(prob, tol=tol)
