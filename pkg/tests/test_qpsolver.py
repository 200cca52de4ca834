"""ADMM QP solver checks: oracle comparisons, KKT residuals, statuses."""

import numpy as np
import pytest

from slungload import qpsolver


def _random_box_qp(rng, n):
    M = rng.normal(size=(n, n))
    P = M @ M.T + n * np.eye(n)
    q = rng.normal(scale=3.0, size=n)
    lb = rng.uniform(-2.0, -0.1, size=n)
    ub = rng.uniform(0.1, 2.0, size=n)
    return P, q, lb, ub


def _box_oracle(P, q, lb, ub):
    """Projected-Newton reference solution for a strictly convex box QP."""
    x = np.clip(np.linalg.solve(P, -q), lb, ub)
    for _ in range(200):
        g = P @ x + q
        free = ~(((x <= lb + 1e-12) & (g > 0)) | ((x >= ub - 1e-12) & (g < 0)))
        if not free.any():
            break
        step = np.zeros_like(x)
        idx = np.flatnonzero(free)
        step[idx] = np.linalg.solve(P[np.ix_(idx, idx)], -g[idx])
        x_new = np.clip(x + step, lb, ub)
        if np.max(np.abs(x_new - x)) < 1e-13:
            x = x_new
            break
        x = x_new
    return x


def test_solve_box_matches_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        n = rng.integers(2, 8)
        P, q, lb, ub = _random_box_qp(rng, n)
        res = qpsolver.solve_box(P, q, lb, ub, tol=1e-9)
        assert res.status == "solved"
        x_ref = _box_oracle(P, q, lb, ub)
        obj = 0.5 * res.x @ P @ res.x + q @ res.x
        obj_ref = 0.5 * x_ref @ P @ x_ref + q @ x_ref
        assert obj <= obj_ref + 1e-7
        np.testing.assert_allclose(res.x, x_ref, atol=1e-5)


def test_kkt_residuals_at_solution():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        P, q, lb, ub = _random_box_qp(rng, n)
        res = qpsolver.solve_box(P, q, lb, ub, tol=1e-10)
        # stationarity: P x + q + y = 0 with y the box multipliers
        assert np.max(np.abs(P @ res.x + q + res.y)) < 1e-6
        # complementary slackness / sign conditions
        at_lb = res.x <= lb + 1e-7
        at_ub = res.x >= ub - 1e-7
        interior = ~(at_lb | at_ub)
        assert np.all(np.abs(res.y[interior]) < 1e-5)
        assert np.all(res.y[at_lb] < 1e-5)
        assert np.all(res.y[at_ub] > -1e-5)


def test_warm_start_reuses_factorization_and_converges_fast():
    rng = np.random.default_rng(11)
    P, q, lb, ub = _random_box_qp(rng, 5)
    prob = qpsolver.QpProblem(P=P, q=q, A=np.eye(5), l=lb, u=ub)
    r1 = qpsolver.solve(prob, tol=1e-9)
    # a nearby problem from the stored warm start
    prob.q = q + 0.01
    r2 = qpsolver.solve(prob, tol=1e-9)
    assert r2.status == "solved"
    assert r2.iterations <= r1.iterations


def test_validate_rejects_bad_problems():
    good = qpsolver.QpProblem(P=np.eye(2), q=np.zeros(2), A=np.eye(2),
                              l=-np.ones(2), u=np.ones(2))
    good.validate()
    with pytest.raises(ValueError):
        qpsolver.QpProblem(P=np.eye(3), q=np.zeros(2), A=np.eye(2),
                           l=-np.ones(2), u=np.ones(2)).validate()
    with pytest.raises(ValueError):
        qpsolver.QpProblem(P=np.array([[0.0, 1.0], [-1.0, 0.0]]),
                           q=np.zeros(2), A=np.eye(2),
                           l=-np.ones(2), u=np.ones(2)).validate()
    with pytest.raises(ValueError):
        qpsolver.QpProblem(P=-np.eye(2), q=np.zeros(2), A=np.eye(2),
                           l=-np.ones(2), u=np.ones(2)).validate()
    with pytest.raises(ValueError):
        qpsolver.QpProblem(P=np.eye(2), q=np.zeros(2), A=np.eye(2),
                           l=np.ones(2), u=-np.ones(2)).validate()


def test_equality_like_constraints():
    # tight box forces Ax ~ b
    P = np.eye(2)
    q = np.array([-1.0, -1.0])
    A = np.array([[1.0, 1.0]])
    prob = qpsolver.QpProblem(P=P, q=q, A=A, l=np.array([0.5]),
                              u=np.array([0.5]))
    res = qpsolver.solve(prob, tol=1e-10)
    assert res.status == "solved"
    assert res.x[0] + res.x[1] == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(res.x, [0.25, 0.25], atol=1e-5)
