import numpy as np
import pytest
import scipy.sparse as sp

from qp_cases import cvxopt_solution, kkt_violation, structured_qp
from ttplan.errors import ConfigurationError
from ttplan.qp import QpProblem, QpSettings, QpStatus, dump_problem, kkt_residual, load_problem, solve_qp

METHODS = ["admm", "ipm"]


@pytest.mark.parametrize("method", METHODS)
def test_projection_onto_half_line(method):
    prob = QpProblem(sp.csc_matrix([[2.0]]), [-2.0], sp.csc_matrix([[1.0]]), [-np.inf], [0.5])
    sol = solve_qp(prob, QpSettings(method=method))
    assert sol.status == QpStatus.SOLVED
    assert sol.x[0] == pytest.approx(0.5, abs=1e-6)
    assert sol.y[0] > 0


@pytest.mark.parametrize("method", METHODS)
def test_equality_qps_match_dense_kkt(method):
    rng = np.random.default_rng(1)
    for _ in range(10):
        n, m = 30, 10
        M = rng.normal(size=(n, n))
        P = M @ M.T + np.eye(n)
        q = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        K = np.block([[P, A.T], [A, np.zeros((m, m))]])
        ref = np.linalg.solve(K, np.concatenate([-q, b]))[:n]
        sol = solve_qp(QpProblem(P, q, A, b, b), QpSettings(method=method))
        assert sol.status == QpStatus.SOLVED
        assert np.max(np.abs(sol.x - ref)) <= 1e-6


@pytest.mark.parametrize("method", METHODS)
def test_separable_box_qp_is_a_clamp(method):
    rng = np.random.default_rng(2)
    n = 40
    d = rng.uniform(0.5, 3.0, n)
    q = rng.normal(scale=3.0, size=n)
    lo, up = -rng.uniform(0.1, 1.0, n), rng.uniform(0.1, 1.0, n)
    sol = solve_qp(QpProblem(sp.diags(d), q, sp.identity(n), lo, up),
                   QpSettings(method=method, eps_abs=1e-10, eps_rel=0.0))
    assert np.max(np.abs(sol.x - np.clip(-q / d, lo, up))) <= 1e-8


@pytest.mark.parametrize("method", METHODS)
def test_structured_qps_satisfy_kkt_and_match_reference(method):
    worst_kkt = worst_x = 0.0
    for seed in range(50):
        prob = structured_qp(seed)
        sol = solve_qp(prob, QpSettings(method=method, eps_abs=1e-9, eps_rel=0.0))
        assert sol.status == QpStatus.SOLVED, seed
        worst_kkt = max(worst_kkt, kkt_violation(prob, sol.x, sol.y))
        worst_x = max(worst_x, np.max(np.abs(sol.x - cvxopt_solution(prob))))
    assert worst_kkt <= 1e-6
    assert worst_x <= 1e-6


def test_clarabel_cross_check():
    clarabel = pytest.importorskip("clarabel")
    prob = structured_qp(7)
    A = prob.A.toarray()
    eq = np.isclose(prob.l, prob.u)
    iu = ~eq & np.isfinite(prob.u)
    il = ~eq & np.isfinite(prob.l)
    Acl = sp.csc_matrix(np.vstack([A[eq], A[iu], -A[il]]))
    b = np.concatenate([prob.u[eq], prob.u[iu], -prob.l[il]])
    cones = [clarabel.ZeroConeT(int(eq.sum())), clarabel.NonnegativeConeT(int(iu.sum() + il.sum()))]
    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_gap_abs = s.tol_gap_rel = s.tol_feas = 1e-12
    ref = clarabel.DefaultSolver(sp.triu(prob.P).tocsc(), prob.q, Acl, b, cones, s).solve()
    ours = solve_qp(prob, QpSettings(method="ipm", eps_abs=1e-9, eps_rel=0.0))
    assert np.max(np.abs(ours.x - np.array(ref.x))) <= 1e-6


@pytest.mark.parametrize("method", METHODS)
def test_multiplier_signs(method):
    prob = structured_qp(3)
    sol = solve_qp(prob, QpSettings(method=method, eps_abs=1e-9, eps_rel=0.0))
    Ax = prob.A @ sol.x
    inactive = (Ax > prob.l + 1e-5) & (Ax < prob.u - 1e-5)
    assert np.max(np.abs(sol.y[inactive])) <= 1e-6
    assert kkt_residual(prob, sol.x, sol.y) <= 10 * 1e-9 * (1 + np.max(np.abs(prob.q)))


def test_primal_infeasible_detected():
    A = sp.csc_matrix([[1.0, 0.0], [1.0, 0.0]])
    prob = QpProblem(sp.identity(2), np.zeros(2), A, [1.0, -np.inf], [np.inf, 0.0])
    sol = solve_qp(prob)
    assert sol.status == QpStatus.PRIMAL_INFEASIBLE
    assert "certificate" in sol.info


def test_warm_start_terminates_quickly():
    prob = structured_qp(11)
    first = solve_qp(prob)
    again = solve_qp(prob, x0=first.x, y0=first.y)
    assert again.status == QpStatus.SOLVED
    assert again.iterations <= 5


@pytest.mark.parametrize("method", METHODS)
def test_bitwise_determinism(method):
    prob = structured_qp(5)
    a = solve_qp(prob, QpSettings(method=method))
    b = solve_qp(prob, QpSettings(method=method))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    assert a.iterations == b.iterations


def test_dump_round_trip(tmp_path):
    prob = structured_qp(4)
    f = tmp_path / "qp.txt"
    dump_problem(prob, f)
    back = load_problem(f)
    assert abs(back.P - prob.P).max() == 0.0 and abs(back.A - prob.A).max() == 0.0
    assert np.array_equal(back.q, prob.q)
    assert np.array_equal(back.l, prob.l) and np.array_equal(back.u, prob.u)


def test_problem_validation():
    with pytest.raises(ConfigurationError):
        QpProblem(sp.identity(2), np.zeros(3), sp.identity(2), np.zeros(2), np.ones(2))
    with pytest.raises(ConfigurationError):
        QpProblem(sp.identity(2), np.zeros(2), sp.identity(2), np.ones(2), np.zeros(2))
    with pytest.raises(ConfigurationError):
        QpProblem(sp.csc_matrix([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2), sp.identity(2), np.zeros(2), np.ones(2))
    with pytest.raises(ConfigurationError):
        solve_qp(structured_qp(0), QpSettings(method="simplex"))
