"""Random QPs with the planner's stage structure, plus an independent optimality check."""
import numpy as np
import scipy.sparse as sp

from ttplan.qp import QpProblem


def structured_qp(seed: int, N: int = 8, nx: int = 2, nu: int = 1) -> QpProblem:
    """Linear dynamics equalities, state/input boxes and a few coupling rows.

    A random input sequence is rolled out first and every bound is placed
    around it, so the problem is always feasible.
    """
    rng = np.random.default_rng(seed)
    n = (N + 1) * nx + N * nu
    M = rng.normal(size=(n, n)) / np.sqrt(n)
    P = M @ M.T + np.diag(rng.uniform(0.1, 1.0, n))
    q = rng.normal(scale=2.0, size=n)
    ref = np.empty(n)
    ref[:nx] = rng.normal(size=nx)
    rows, lo, up = [], [], []
    for i in range(N):
        A = np.eye(nx) + 0.1 * rng.normal(size=(nx, nx))
        B = rng.normal(size=(nx, nu))
        g = rng.normal(scale=0.1, size=nx)
        x, xn = slice(i * nx, (i + 1) * nx), slice((i + 1) * nx, (i + 2) * nx)
        u = slice((N + 1) * nx + i * nu, (N + 1) * nx + (i + 1) * nu)
        ref[u] = rng.uniform(-0.5, 0.5, nu)
        ref[xn] = A @ ref[x] + B @ ref[u] + g
        for k in range(nx):
            r = np.zeros(n)
            r[xn.start + k] = 1.0
            r[x] -= A[k]
            r[u] -= B[k]
            rows.append(r), lo.append(g[k]), up.append(g[k])
    for k in range(nx):
        r = np.zeros(n)
        r[k] = 1.0
        rows.append(r), lo.append(ref[k]), up.append(ref[k])
    for j in range(nx, n):
        r = np.zeros(n)
        r[j] = 1.0
        rows.append(r)
        lo.append(ref[j] - rng.uniform(0.05, 1.0) if rng.random() < 0.8 else -np.inf)
        up.append(ref[j] + rng.uniform(0.05, 1.0))
    for _ in range(N // 2):
        r = np.zeros(n)
        r[rng.choice(n, 3, replace=False)] = rng.normal(size=3)
        rows.append(r), lo.append(-np.inf), up.append(r @ ref + rng.uniform(0.0, 0.5))
    return QpProblem(sp.csc_matrix(P), q, sp.csc_matrix(np.array(rows)), np.array(lo), np.array(up))


def kkt_violation(prob: QpProblem, x, y) -> float:
    """Largest violation of stationarity, primal/dual feasibility and complementarity."""
    Ax = prob.A @ x
    stat = np.abs(prob.P @ x + prob.q + prob.A.T @ y)
    prim = np.maximum(np.maximum(prob.l - Ax, Ax - prob.u), 0.0)
    # y < 0 only at finite lower bounds, y > 0 only at finite upper bounds
    dual = np.where(np.isfinite(prob.u), 0.0, np.maximum(y, 0.0)) + \
        np.where(np.isfinite(prob.l), 0.0, np.maximum(-y, 0.0))
    slack_u = np.where(np.isfinite(prob.u), prob.u - Ax, 0.0)
    slack_l = np.where(np.isfinite(prob.l), Ax - prob.l, 0.0)
    comp = np.abs(np.maximum(y, 0.0) * slack_u) + np.abs(np.minimum(y, 0.0) * slack_l)
    return float(max(stat.max(), prim.max(), dual.max(), comp.max()))


def cvxopt_solution(prob: QpProblem) -> np.ndarray:
    """Reference minimizer from cvxopt's interior-point QP solver."""
    import cvxopt
    cvxopt.solvers.options.update(show_progress=False, abstol=1e-10, reltol=1e-10, feastol=1e-10, maxiters=200)
    A = prob.A.toarray()
    eq = np.isclose(prob.l, prob.u)
    G = np.vstack([A[~eq & np.isfinite(prob.u)], -A[~eq & np.isfinite(prob.l)]])
    h = np.concatenate([prob.u[~eq & np.isfinite(prob.u)], -prob.l[~eq & np.isfinite(prob.l)]])
    m = lambda a: cvxopt.matrix(np.asarray(a, dtype=float))
    sol = cvxopt.solvers.qp(m(prob.P.toarray()), m(prob.q), m(G), m(h), m(A[eq]), m(prob.u[eq]))
    assert sol["status"] == "optimal"
    return np.array(sol["x"]).ravel()
