import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepc_traffic.qpsolve import (
    AdmmSolver, QpProblem, Status, dual_residual, load_dump, lp_as_qp, primal_residual, solve_lp,
    solve_qp,
)

from oracles import lp_vertex_enumeration, qp_active_set_enumeration, random_lp, random_qp

NOEQ = np.zeros((0, 1))


def test_clipped_scalar():
    sol = solve_qp(QpProblem(P=[[2.0]], q=[-2.0], A_eq=NOEQ, b_eq=[], lower=[0.0], upper=[0.5]))
    assert sol.status is Status.SOLVED
    assert sol.x[0] == pytest.approx(0.5, abs=1e-9)


def test_symmetric_equality():
    sol = solve_qp(QpProblem(P=2 * np.eye(2), q=[0, 0], A_eq=[[1, 1]], b_eq=[1],
                             lower=-np.inf, upper=np.inf))
    np.testing.assert_allclose(sol.x, [0.5, 0.5], atol=1e-9)


def test_lp_box():
    sol = solve_lp([-1.0], NOEQ, [], [0.0], [3.0])
    assert sol.x[0] == pytest.approx(3.0, abs=1e-7)
    assert sol.objective == pytest.approx(-3.0, abs=1e-7)


def test_lp_with_slack():
    # max x1 + x2 s.t. x1 + x2 + s = 1, x, s >= 0
    sol = solve_lp([-1.0, -1.0, 0.0], [[1, 1, 1]], [1.0], [0, 0, 0], [np.inf] * 3)
    assert sol.objective == pytest.approx(-1.0, abs=1e-7)


@pytest.mark.parametrize("seed", range(50))
def test_random_qp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 9))
    e = int(rng.integers(0, min(3, d - 1) + 1)) if d > 1 else 0
    P, q, A, b, lo, hi = random_qp(rng, d, e)
    sol = solve_qp(QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi))
    _, f_ref = qp_active_set_enumeration(P, q, A, b, lo, hi)
    assert sol.status is Status.SOLVED
    assert sol.primal_residual <= 1e-6 and sol.dual_residual <= 1e-6
    assert sol.objective == pytest.approx(f_ref, abs=1e-6)


@pytest.mark.parametrize("seed", range(30))
def test_random_lp_matches_vertices(seed):
    rng = np.random.default_rng(1000 + seed)
    d = int(rng.integers(1, 7))
    e = int(rng.integers(0, min(2, d - 1) + 1)) if d > 1 else 0
    c, A, b, lo, hi = random_lp(rng, d, e)
    sol = solve_lp(c, A, b, lo, hi)
    _, f_ref = lp_vertex_enumeration(c, A, b, lo, hi)
    assert sol.status is Status.SOLVED
    assert sol.objective == pytest.approx(f_ref, abs=1e-5)


def test_degenerate_vertex_small():
    # max x1 + x2 with three slack rows all tight at (1, 1): two free variables, three rows
    A = [[1, 0, 1, 0, 0], [0, 1, 0, 1, 0], [1, 1, 0, 0, 1]]
    sol = solve_lp([-1, -1, 0, 0, 0], A, [1, 1, 2], np.zeros(5), np.full(5, np.inf))
    assert sol.status is Status.SOLVED
    np.testing.assert_allclose(sol.x[:2], [1, 1], atol=1e-6)
    assert dual_residual(lp_as_qp([-1, -1, 0, 0, 0], A, [1, 1, 2], np.zeros(5),
                                  np.full(5, np.inf)), sol.x, sol.y_eq) <= 1e-6


def test_polish_picks_admissible_multipliers_at_degenerate_vertex():
    # at x = (1, 1, 0, 0, 0) stationarity fixes only y1 + y3 = 1 and y2 + y3 = 3;
    # the minimum-norm choice has y1 = -1/3, which the lower-bound slack x3 forbids
    A = np.array([[1, 0, 1, 0, 0], [0, 1, 0, 1, 0], [1, 1, 0, 0, 1.0]])
    prob = lp_as_qp([-1, -3, 0, 0, 0], A, [1, 1, 2], np.zeros(5), np.full(5, np.inf))
    code = np.array([0, 0, 1, 1, 1], dtype=np.int8)
    out = AdmmSolver(prob.P, prob.A_eq, prob.q)._polish(
        prob, code.tobytes() + np.zeros(5, dtype=np.int8).tobytes(), 1e-6, 1e-6)
    assert out is not None
    x, y, _, polished = out
    assert polished
    np.testing.assert_allclose(x, [1, 1, 0, 0, 0], atol=1e-9)
    assert np.all(y >= -1e-6)
    assert dual_residual(prob, x, y) <= 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_degenerate_lp_matches_vertices(seed):
    # append a slack row that is tight at the known optimum, so the optimal
    # vertex has more active constraints than needed and multipliers are not unique
    rng = np.random.default_rng(3000 + seed)
    d = int(rng.integers(2, 6))
    e = int(rng.integers(1, min(2, d - 1) + 1))
    c, A, b, lo, hi = random_lp(rng, d, e)
    x_ref, f_ref = lp_vertex_enumeration(c, A, b, lo, hi)
    a = rng.standard_normal(d)
    A2 = np.zeros((e + 1, d + 1))
    A2[:e, :d] = A
    A2[e, :d] = a
    A2[e, d] = 1.0
    b2 = np.append(b, a @ x_ref)
    c2, lo2, hi2 = np.append(c, 0.0), np.append(lo, 0.0), np.append(hi, np.inf)
    sol = solve_lp(c2, A2, b2, lo2, hi2)
    assert sol.status is Status.SOLVED
    assert sol.objective == pytest.approx(f_ref, abs=1e-5)


def test_l1_soft_threshold_scalar():
    # min 1/2 (x - 3)^2 + 1 |x|  ->  x = 2 ; with target 0.5 -> x = 0
    for target, expect in ((3.0, 2.0), (0.5, 0.0), (-4.0, -3.0)):
        prob = QpProblem(P=[[1.0]], q=[-target], A_eq=NOEQ, b_eq=[], lower=[-10], upper=[10],
                         l1_weight=1.0, l1_index=[0])
        sol = solve_qp(prob)
        assert sol.status is Status.SOLVED
        assert sol.x[0] == pytest.approx(expect, abs=1e-7)


def test_l1_against_split_variable_reformulation():
    # |x| = x+ + x-, which turns the L1 problem into a smooth QP the oracle can enumerate
    rng = np.random.default_rng(7)
    for _ in range(10):
        d = 3
        P, q, A, b, lo, hi = random_qp(rng, d, 1)
        w = 0.7
        sol = solve_qp(QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi,
                                 l1_weight=w, l1_index=[0, 1, 2]))
        # variables (x+, x-) with x = x+ - x-, bounds 0 <= x+ <= hi, 0 <= x- <= -lo
        T = np.hstack([np.eye(d), -np.eye(d)])
        P2 = T.T @ P @ T + 1e-9 * np.eye(2 * d)
        q2 = T.T @ q + w
        _, f_ref = qp_active_set_enumeration(P2, q2, A @ T, b, np.zeros(2 * d),
                                             np.concatenate([hi, -lo]))
        assert sol.objective == pytest.approx(f_ref, abs=1e-6)


def test_infeasible_detected():
    # x1 + x2 = 5 with both in [0, 1]
    sol = solve_qp(QpProblem(P=np.eye(2), q=[0, 0], A_eq=[[1, 1]], b_eq=[5.0],
                             lower=[0, 0], upper=[1, 1]), max_iter=5000)
    assert sol.status is Status.INFEASIBLE
    assert sol.primal_residual > 1.0


def test_max_iterations_status():
    rng = np.random.default_rng(3)
    P, q, A, b, lo, hi = random_qp(rng, 6, 2)
    sol = solve_qp(QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi), max_iter=3,
                   polish=False)
    assert sol.status is Status.MAX_ITERATIONS
    assert sol.iterations == 3


def test_warm_start_converges_fast():
    rng = np.random.default_rng(11)
    P, q, A, b, lo, hi = random_qp(rng, 8, 3)
    prob = QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi)
    first = solve_qp(prob)
    again = solve_qp(prob, warm_x=first.x, warm_y=np.concatenate([first.y_eq, first.y_box]))
    assert again.status is Status.SOLVED
    assert again.iterations <= 5


@pytest.mark.parametrize("seed", range(10))
def test_local_optimality_probe(seed):
    rng = np.random.default_rng(500 + seed)
    P, q, A, b, lo, hi = random_qp(rng, 5, 0)
    prob = QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi)
    sol = solve_qp(prob)
    f0 = prob.objective(sol.x)
    for i in range(5):
        for step in (1e-4, -1e-4):
            x = sol.x.copy()
            x[i] += step
            if lo[i] <= x[i] <= hi[i]:
                assert prob.objective(x) >= f0 - 1e-6


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
@settings(max_examples=25, deadline=None)
def test_argmin_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    P, q, A, b, lo, hi = random_qp(rng, 4, 1)
    a = solve_qp(QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi))
    s = solve_qp(QpProblem(P=scale * P, q=scale * q, A_eq=A, b_eq=b, lower=lo, upper=hi))
    np.testing.assert_allclose(a.x, s.x, atol=1e-8)


def test_residual_certificates():
    prob = QpProblem(P=np.eye(2), q=[-2.0, 0.0], A_eq=np.zeros((0, 2)), b_eq=[],
                     lower=[0, 0], upper=[1, 1])
    assert primal_residual(prob, [1.0, 0.0]) == 0.0
    assert dual_residual(prob, [1.0, 0.0], []) == 0.0
    # interior point with nonzero gradient
    assert dual_residual(prob, [0.5, 0.5], []) == pytest.approx(1.5)
    assert primal_residual(prob, [1.2, -0.1]) == pytest.approx(0.2)


def test_dump_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    P, q, A, b, lo, hi = random_qp(rng, 4, 2)
    prob = QpProblem(P=P, q=q, A_eq=A, b_eq=b, lower=lo, upper=hi, l1_weight=0.5,
                     l1_index=[1, 2], constant=3.0)
    path = tmp_path / "prob.mtx"
    prob.dump(path)
    back = load_dump(path)
    for name in ("P", "q", "A_eq", "b_eq", "lower", "upper", "l1_index"):
        np.testing.assert_array_equal(getattr(back, name), getattr(prob, name))
    assert back.l1_weight == 0.5 and back.constant == 3.0


def test_rejects_bad_problems():
    with pytest.raises(ValueError):
        QpProblem(P=[[1, 2], [0, 1]], q=[0, 0], A_eq=np.zeros((0, 2)), b_eq=[], lower=0, upper=1)
    with pytest.raises(ValueError):
        QpProblem(P=np.eye(1), q=[0], A_eq=NOEQ, b_eq=[], lower=[1], upper=[0])
