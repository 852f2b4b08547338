"""Independent brute-force references used by the test-suite."""
import itertools

import numpy as np


def qp_active_set_enumeration(P, q, A_eq, b_eq, lower, upper, tol=1e-9):
    """Minimum over every box face of the face-restricted KKT solution.

    Requires finite bounds and positive definite P, so every face problem has
    a unique minimizer and the global one is among them.
    """
    P, q = np.asarray(P, float), np.asarray(q, float)
    A_eq, b_eq = np.asarray(A_eq, float).reshape(-1, q.size), np.asarray(b_eq, float)
    d, e = q.size, b_eq.size
    best_x, best_f = None, np.inf
    for status in itertools.product((0, 1, 2), repeat=d):
        status = np.array(status)
        fixed = status > 0
        xf = np.where(status == 1, lower, upper)
        free = ~fixed
        nf = int(free.sum())
        K = np.zeros((nf + e, nf + e))
        K[:nf, :nf] = P[np.ix_(free, free)]
        K[:nf, nf:] = A_eq[:, free].T
        K[nf:, :nf] = A_eq[:, free]
        rhs = np.concatenate([-q[free] - P[np.ix_(free, fixed)] @ xf[fixed],
                              b_eq - A_eq[:, fixed] @ xf[fixed]])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.linalg.norm(K @ sol - rhs) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
            continue
        x = np.where(fixed, xf, 0.0)
        x[free] = sol[:nf]
        if np.any(x < lower - tol) or np.any(x > upper + tol):
            continue
        if e and np.max(np.abs(A_eq @ x - b_eq)) > 1e-8:
            continue
        f = 0.5 * x @ P @ x + q @ x
        if f < best_f:
            best_f, best_x = f, x
    return best_x, best_f


def lp_vertex_enumeration(c, A_eq, b_eq, lower, upper, tol=1e-9):
    """Best basic feasible point: d-e coordinates at a bound, the rest solved."""
    c = np.asarray(c, float)
    A_eq, b_eq = np.asarray(A_eq, float).reshape(-1, c.size), np.asarray(b_eq, float)
    d, e = c.size, b_eq.size
    best_x, best_f = None, np.inf
    for basis in itertools.combinations(range(d), e):
        basis = list(basis)
        nonbasic = [j for j in range(d) if j not in basis]
        B = A_eq[:, basis]
        if e and abs(np.linalg.det(B)) < 1e-12:
            continue
        for at_upper in itertools.product((False, True), repeat=len(nonbasic)):
            x = np.zeros(d)
            for j, up in zip(nonbasic, at_upper):
                x[j] = upper[j] if up else lower[j]
            if e:
                x[basis] = np.linalg.solve(B, b_eq - A_eq[:, nonbasic] @ x[nonbasic])
            if np.any(x < lower - tol) or np.any(x > upper + tol):
                continue
            f = c @ x
            if f < best_f:
                best_f, best_x = f, x
    return best_x, best_f


def random_qp(rng, d, e):
    M = rng.standard_normal((d, d))
    P = M @ M.T + 1e-2 * np.eye(d)
    q = rng.standard_normal(d) * 3
    lower = -rng.uniform(0.2, 2.0, d)
    upper = rng.uniform(0.2, 2.0, d)
    A = rng.standard_normal((e, d))
    x_feas = rng.uniform(lower, upper)
    return P, q, A, A @ x_feas, lower, upper


def random_lp(rng, d, e):
    c = rng.standard_normal(d)
    lower = -rng.uniform(0.2, 2.0, d)
    upper = rng.uniform(0.2, 2.0, d)
    A = rng.standard_normal((e, d))
    x_feas = rng.uniform(lower, upper)
    return c, A, A @ x_feas, lower, upper


def condensed_mpc(sys, x0, y_ref, u_ref, Q, R, horizon):
    """Unconstrained model-based MPC: minimize tracking cost over u by a linear solve."""
    n, m, p = sys.n, sys.m, sys.p
    O = np.zeros((p * horizon, n))
    G = np.zeros((p * horizon, m * horizon))
    Ak = np.eye(n)
    for k in range(horizon):
        O[k * p:(k + 1) * p] = sys.C @ Ak
        Ak = sys.A @ Ak
    for k in range(horizon):
        for j in range(k + 1):
            if j == k:
                blk = sys.D
            else:
                blk = sys.C @ np.linalg.matrix_power(sys.A, k - j - 1) @ sys.B
            G[k * p:(k + 1) * p, j * m:(j + 1) * m] = blk
    Qb = np.kron(np.eye(horizon), Q)
    Rb = np.kron(np.eye(horizon), R)
    free = O @ x0
    H = G.T @ Qb @ G + Rb
    rhs = G.T @ Qb @ (y_ref - free) + Rb @ u_ref
    u = np.linalg.solve(H, rhs)
    return u, free + G @ u
