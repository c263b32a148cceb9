"""Operator-splitting QP solver.

Solves

    minimize    1/2 x'Px + q'x
    subject to  l <= Ax <= u

with the ADMM iteration popularized by OSQP: Ruiz equilibration, a reduced
positive definite linear system factorized once per rho value, over-relaxation,
adaptive rho, primal infeasibility certificates and an active-set polish step.

A Mehrotra predictor-corrector interior-point method over the same problem
type is available for LP-like subproblems, where ADMM converges slowly and
the active set is too degenerate to polish.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError

log = logging.getLogger(__name__)

INF = 1e20
RHO_EQ_SCALE = 1e3
RHO_MIN, RHO_MAX = 1e-6, 1e6
RHO_FREE = RHO_MIN


class QpStatus(enum.Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE = "primal_infeasible"


@dataclass
class QpProblem:
    P: sp.spmatrix
    q: np.ndarray
    A: sp.spmatrix
    l: np.ndarray
    u: np.ndarray
    layout: Optional[dict] = None

    def __post_init__(self):
        self.P = sp.csc_matrix(self.P, dtype=float)
        self.A = sp.csc_matrix(self.A, dtype=float)
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.l = np.asarray(self.l, dtype=float).ravel()
        self.u = np.asarray(self.u, dtype=float).ravel()
        n, m = self.n, self.m
        if self.P.shape != (n, n):
            raise ConfigurationError(f"P has shape {self.P.shape}, expected {(n, n)}")
        if self.A.shape[1] != n:
            raise ConfigurationError("A column count does not match q")
        if self.l.shape != (m,) or self.u.shape != (m,):
            raise ConfigurationError("bound vectors do not match A")
        if np.any(self.l > self.u):
            raise ConfigurationError("l > u for some rows")
        if np.any(np.isnan(self.l)) or np.any(np.isnan(self.u)) or np.any(~np.isfinite(self.q)):
            raise ConfigurationError("NaN in problem data")
        if abs(self.P - self.P.T).max() > 1e-9 * max(1.0, abs(self.P).max()):
            raise ConfigurationError("P is not symmetric")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass
class QpSettings:
    method: str = "admm"
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_pinf: float = 1e-7
    max_iter: int = 20000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling_iters: int = 10
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 50
    adaptive_rho_tolerance: float = 5.0
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine: int = 5
    polish_rounds: int = 8
    polish_interval: int = 100
    check_interval: int = 10
    ipm_gap_rel: float = 1e-10
    ipm_correctors: int = 3
    ipm_refine: int = 2
    ipm_max_iter: int = 200


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    status: QpStatus
    iterations: int
    prim_res: float
    dual_res: float
    objective: float = math.nan
    polished: bool = False
    rho_updates: int = 0
    info: dict = field(default_factory=dict)


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


class _Scaling:
    """Ruiz equilibration: P~ = c D P D, A~ = E A D, q~ = c D q."""

    def __init__(self, P, q, A, iters):
        n, m = P.shape[0], A.shape[0]
        D = np.ones(n)
        E = np.ones(m)
        c = 1.0
        Ps, As, qs = P.copy(), A.copy(), q.copy()
        for _ in range(iters):
            # column norms of [P; A], row norms of A
            normP = np.asarray(abs(Ps).max(axis=0).todense()).ravel() if Ps.nnz else np.zeros(n)
            normA = np.asarray(abs(As).max(axis=0).todense()).ravel() if As.nnz else np.zeros(n)
            dcol = np.maximum(normP, normA)
            drow = np.asarray(abs(As).max(axis=1).todense()).ravel() if As.nnz else np.zeros(m)
            dcol = 1.0 / np.sqrt(np.clip(dcol, 1e-4, 1e4))
            drow = 1.0 / np.sqrt(np.clip(drow, 1e-4, 1e4))
            Dk = sp.diags(dcol)
            Ek = sp.diags(drow)
            Ps = Dk @ Ps @ Dk
            As = Ek @ As @ Dk
            qs = dcol * qs
            D *= dcol
            E *= drow
            # cost scaling
            gamma = max(np.mean(np.asarray(abs(Ps).max(axis=0).todense()).ravel()) if Ps.nnz else 0.0,
                        _inf_norm(qs))
            gamma = 1.0 / np.clip(gamma, 1e-4, 1e4) if gamma > 0 else 1.0
            Ps = gamma * Ps
            qs = gamma * qs
            c *= gamma
        self.D, self.E, self.c = D, E, c
        self.P = sp.csc_matrix(Ps)
        self.A = sp.csc_matrix(As)
        self.q = qs


def solve_qp(prob: QpProblem, settings: Optional[QpSettings] = None,
             x0: Optional[np.ndarray] = None, y0: Optional[np.ndarray] = None) -> QpSolution:
    """Solve a convex QP; warm start from (x0, y0) when their sizes match.

    ``settings.method`` picks the ADMM iteration (default) or the
    interior-point method, which ignores warm starts.
    """
    st = settings or QpSettings()
    if st.method == "ipm":
        return solve_qp_ipm(prob, st)
    if st.method != "admm":
        raise ConfigurationError(f"unknown QP method {st.method!r}")
    n, m = prob.n, prob.m
    sc = _Scaling(prob.P, prob.q, prob.A, st.scaling_iters)
    P, A, q = sc.P, sc.A, sc.q
    D, E, c = sc.D, sc.E, sc.c
    Dinv, Einv = 1.0 / D, 1.0 / E
    l = np.where(prob.l <= -INF, -INF, prob.l * E)
    u = np.where(prob.u >= INF, INF, prob.u * E)

    eq = np.abs(u - l) < 1e-8 * np.maximum(1.0, np.abs(u))
    free = (l <= -INF) & (u >= INF)

    def rho_vec(rho):
        r = np.full(m, rho)
        r[eq] = RHO_EQ_SCALE * rho
        r[free] = RHO_FREE
        return r

    rho = st.rho
    R = rho_vec(rho)
    At = sp.csc_matrix(A.T)
    Pdiag = P + st.sigma * sp.identity(n, format="csc")

    def factor(Rv):
        K = sp.csc_matrix(Pdiag + At @ sp.diags(Rv) @ A)
        return spla.splu(K, permc_spec="MMD_AT_PLUS_A")

    lu = factor(R)

    x = np.zeros(n)
    z = np.zeros(m)
    y = np.zeros(m)
    warm = x0 is not None and len(x0) == n
    if warm:
        x = np.asarray(x0, dtype=float) * Dinv
        if y0 is not None and len(y0) == m:
            y = np.asarray(y0, dtype=float) * Einv * c
        z = np.clip(A @ x, l, u)

    status = QpStatus.MAX_ITER
    prim = dual = math.inf
    rho_updates = 0
    it = 0
    for it in range(1, st.max_iter + 1):
        x_prev, z_prev, y_prev = x, z, y
        rhs = st.sigma * x - q + At @ (R * z - y)
        xt = lu.solve(rhs)
        zt = A @ xt
        x = st.alpha * xt + (1 - st.alpha) * x_prev
        zr = st.alpha * zt + (1 - st.alpha) * z_prev
        z = np.clip(zr + y_prev / R, l, u)
        y = y_prev + R * (zr - z)

        if it > 5 and it % st.check_interval and it % st.adaptive_rho_interval:
            continue
        # unscaled residuals
        Ax = A @ x
        Px = P @ x
        Aty = At @ y
        prim = _inf_norm(Einv * (Ax - z))
        dual = _inf_norm(Dinv * (Px + q + Aty)) / c
        eps_p = st.eps_abs + st.eps_rel * max(_inf_norm(Einv * Ax), _inf_norm(Einv * z))
        eps_d = st.eps_abs + st.eps_rel * max(_inf_norm(Dinv * Px), _inf_norm(Dinv * Aty),
                                              _inf_norm(Dinv * q)) / c
        if prim <= eps_p and dual <= eps_d:
            status = QpStatus.SOLVED
            break

        if st.polish and st.polish_interval and it % st.polish_interval == 0:
            early = _try_polish(prob, x, y, z, l, u, D, E, c, it, rho_updates, st)
            if early is not None:
                return early

        dy = y - y_prev
        if it % st.check_interval == 0 and _primal_infeasible(dy, At, l, u, D, E, st.eps_pinf):
            status = QpStatus.PRIMAL_INFEASIBLE
            break

        if st.adaptive_rho and it % st.adaptive_rho_interval == 0:
            # balance residuals measured in the scaled space
            num = _inf_norm(Ax - z) / max(_inf_norm(Ax), _inf_norm(z), 1e-30)
            den = _inf_norm(Px + q + Aty) / max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(q), 1e-30)
            ratio = math.sqrt(num / max(den, 1e-30))
            new_rho = min(max(rho * ratio, RHO_MIN), RHO_MAX)
            if new_rho > rho * st.adaptive_rho_tolerance or new_rho < rho / st.adaptive_rho_tolerance:
                rho = new_rho
                R = rho_vec(rho)
                lu = factor(R)
                rho_updates += 1

    xs = D * x
    ys = E * y / c
    sol = QpSolution(xs, ys, status, it, prim, dual, rho_updates=rho_updates)
    if status == QpStatus.PRIMAL_INFEASIBLE:
        dy = y - y_prev
        sol.info["certificate"] = E * dy / max(_inf_norm(E * dy), 1e-30)
        return sol
    if st.polish:
        _polish(prob, sol, *_active_sets(z, y, l, u), st)
    sol.objective = prob.objective(sol.x)
    return sol


def _active_sets(z, y, l, u):
    return (z - l < -y) & (l > -INF), (u - z < y) & (u < INF)


def _try_polish(prob, x, y, z, l, u, D, E, c, it, rho_updates, st):
    """Polish from an intermediate iterate; return a solution only if it meets tolerance."""
    sol = QpSolution(D * x, E * y / c, QpStatus.MAX_ITER, it, math.inf, math.inf,
                     rho_updates=rho_updates)
    _polish(prob, sol, *_active_sets(z, y, l, u), st)
    if sol.status != QpStatus.SOLVED:
        return None
    sol.info["early_polish"] = True
    sol.objective = prob.objective(sol.x)
    return sol


def _primal_infeasible(dy, At, l, u, D, E, eps):
    dyu = E * dy
    nrm = _inf_norm(dyu)
    if nrm < 1e-30:
        return False
    Atdy = (At @ dy) / D
    if _inf_norm(Atdy) > eps * nrm:
        return False
    ub = np.where(u >= INF, 0.0, u / E)
    lb = np.where(l <= -INF, 0.0, l / E)
    if np.any((u >= INF) & (dyu > eps * nrm)) or np.any((l <= -INF) & (dyu < -eps * nrm)):
        return False
    return float(ub @ np.maximum(dyu, 0) + lb @ np.minimum(dyu, 0)) < -eps * nrm


def _residuals(prob: QpProblem, x, y):
    Ax = prob.A @ x
    zproj = np.clip(Ax, prob.l, prob.u)
    prim = _inf_norm(Ax - zproj)
    dual = _inf_norm(prob.P @ x + prob.q + prob.A.T @ y)
    return prim, dual


def _kkt_solve(prob: QpProblem, low, upp, eq, st: QpSettings):
    """Equality-constrained QP on rows ``low | upp | eq``; returns (x, y) or None."""
    act = low | upp | eq
    idx = np.flatnonzero(act)
    n, k = prob.n, len(idx)
    Aact = prob.A[idx, :]
    b = np.where(upp[idx], prob.u[idx], prob.l[idx])
    d = st.polish_delta
    K = sp.bmat([[prob.P + d * sp.identity(n), Aact.T],
                 [Aact, -d * sp.identity(k)]], format="csc")
    Ktrue = sp.bmat([[prob.P, Aact.T], [Aact, None]], format="csc") if k else sp.csc_matrix(prob.P)
    rhs = np.concatenate([-prob.q, b])
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError:
        return None
    sol_k = lu.solve(rhs)
    for _ in range(st.polish_refine):
        sol_k = sol_k + lu.solve(rhs - Ktrue @ sol_k)
    if not np.all(np.isfinite(sol_k)):
        return None
    y = np.zeros(prob.m)
    y[idx] = sol_k[n:]
    return sol_k[:n], y


def _polish(prob: QpProblem, sol: QpSolution, low, upp, st: QpSettings):
    """Solve the equality-constrained QP on the estimated active set.

    The guess is refined a few times: violated rows join the active set and
    rows whose multiplier has the wrong sign leave it.
    """
    l, u = prob.l, prob.u
    eq = (u < INF) & (l > -INF) & ((u - l) <= 1e-12 * np.maximum(1.0, np.abs(u)))
    low = low & ~eq & (l > -INF)
    upp = upp & ~low & ~eq & (u < INF)
    p0, d0 = _residuals(prob, sol.x, sol.y)
    best = None
    seen = set()
    for _ in range(max(1, st.polish_rounds)):
        key = (np.packbits(low).tobytes(), np.packbits(upp).tobytes())
        if key in seen:
            break
        seen.add(key)
        res = _kkt_solve(prob, low, upp, eq, st)
        if res is None:
            break
        xp, yp = res
        Ax = prob.A @ xp
        tol = st.eps_abs
        add_low = (Ax < l - tol) & ~eq
        add_upp = (Ax > u + tol) & ~eq
        drop_low = low & (yp > 0)
        drop_upp = upp & (yp < 0)
        if not (add_low.any() or add_upp.any() or drop_low.any() or drop_upp.any()):
            best = (xp, yp)
            break
        low = (low & ~drop_low) | add_low
        upp = (upp & ~drop_upp) | add_upp
        best = (xp, np.where(low, np.minimum(yp, 0), np.where(upp, np.maximum(yp, 0), np.where(eq, yp, 0.0))))
    if best is None:
        sol.prim_res, sol.dual_res = p0, d0
        return
    xp, yp = best
    p1, d1 = _residuals(prob, xp, yp)
    ok = p1 <= st.eps_abs and d1 <= st.eps_abs
    if ok or (p1 <= p0 and d1 <= d0):
        sol.x, sol.y = xp, yp
        sol.prim_res, sol.dual_res = p1, d1
        sol.polished = True
        if ok:
            sol.status = QpStatus.SOLVED
    else:
        sol.prim_res, sol.dual_res = p0, d0


def solve_qp_ipm(prob: QpProblem, settings: Optional[QpSettings] = None) -> QpSolution:
    """Primal-dual interior-point method (Mehrotra predictor-corrector).

    The problem is Ruiz-equilibrated first. Rows with l == u become
    equalities; every finite bound of the other rows becomes an inequality
    ``g x <= h`` with slack s > 0 and multiplier lam > 0. Each Newton step
    solves the regularized augmented system

        [P + d I   Ae'     G'         ] [dx  ]
        [Ae       -d I     0          ] [dy  ]
        [G         0      -S/Lam - d I] [dlam]

    refined against the unregularized matrix, followed by up to
    ``ipm_correctors`` Gondzio centrality corrections. Termination is tested
    on the unscaled residuals.
    """
    st = settings or QpSettings()
    n, m = prob.n, prob.m
    sc = _Scaling(sp.csc_matrix(prob.P), prob.q, sp.csc_matrix(prob.A), st.scaling_iters)
    D, E, c = sc.D, sc.E, sc.c
    A = sp.csr_matrix(sc.A)
    l, u = E * prob.l, E * prob.u
    finite_l = l > -INF
    finite_u = u < INF
    eq = finite_l & finite_u & ((u - l) <= 1e-12 * np.maximum(1.0, np.abs(u)))
    iu = np.flatnonzero(finite_u & ~eq)
    il = np.flatnonzero(finite_l & ~eq)
    ie = np.flatnonzero(eq)
    Ae = A[ie]
    be = 0.5 * (l[ie] + u[ie])
    G = sp.vstack([A[iu], -A[il]], format="csr")
    h = np.concatenate([u[iu], -l[il]])
    Gt = sp.csc_matrix(G.T)
    Aet = sp.csc_matrix(Ae.T)
    mi, me = G.shape[0], Ae.shape[0]
    P = sc.P
    q = sc.q
    d = st.polish_delta
    reg = sp.diags(np.concatenate([np.full(n, d), np.full(me + mi, -d)]))
    # unscaling factors for the residual test
    inv_rd = 1.0 / (D * c)
    inv_rp = 1.0 / E[ie]
    inv_rg = 1.0 / np.concatenate([E[iu], E[il]])

    # least-squares starting point, then Mehrotra's shift into the interior
    K0 = (sp.bmat([[P, Aet, Gt], [Ae, None, None], [G, None, -sp.identity(mi)]], format="csc")
          + reg).tocsc()
    lu0 = spla.splu(K0, permc_spec="COLAMD")
    sol0 = lu0.solve(np.concatenate([-q, be, h]))
    x, y, lam = sol0[:n], sol0[n:n + me], sol0[n + me:]
    s = h - G @ x
    if mi:
        s = s + max(-1.5 * s.min(), 0.0)
        lam = lam + max(-1.5 * lam.min(), 0.0)
        sl = float(s @ lam)
        s = s + 0.5 * sl / max(lam.sum(), 1e-300) + 1e-8
        lam = lam + 0.5 * sl / max(s.sum(), 1e-300) + 1e-8

    def fraction(v, dv):
        neg = dv < 0
        return min(1.0, float(np.min(-v[neg] / dv[neg]))) if neg.any() else 1.0

    def step(ds, dlam):
        return min(1.0, 0.99 * min(fraction(s, ds), fraction(lam, dlam)))

    status = QpStatus.MAX_ITER
    it = 0
    for it in range(1, st.ipm_max_iter + 1):
        rd = P @ x + q + Aet @ y + Gt @ lam
        rp = Ae @ x - be
        rg = G @ x + s - h
        mu = float(s @ lam) / mi if mi else 0.0
        res_d = _inf_norm(rd * inv_rd)
        res_p = max(_inf_norm(rp * inv_rp), _inf_norm(rg * inv_rg))
        gap = mu * mi / c
        pobj = float(0.5 * x @ (P @ x) + q @ x) / c
        log.debug("ipm %3d  primal=%.2e dual=%.2e gap=%.2e", it, res_p, res_d, gap)
        if res_p <= st.eps_abs and res_d <= st.eps_abs and gap <= st.eps_abs + st.ipm_gap_rel * abs(pobj):
            status = QpStatus.SOLVED
            break
        Ktrue = sp.bmat([[P, Aet, Gt], [Ae, None, None], [G, None, -sp.diags(s / lam)]], format="csc")
        try:
            lu = spla.splu((Ktrue + reg).tocsc(), permc_spec="COLAMD")
        except RuntimeError:
            break

        def newton(rc, residuals=True):
            if residuals:
                rhs = np.concatenate([-rd, -rp, -rg + rc / lam])
            else:
                rhs = np.concatenate([np.zeros(n + me), rc / lam])
            sol = lu.solve(rhs)
            for _ in range(st.ipm_refine):
                sol = sol + lu.solve(rhs - Ktrue @ sol)
            dlam = sol[n + me:]
            return sol[:n], sol[n:n + me], -(rc + s * dlam) / lam, dlam

        dx, dy, ds, dlam = newton(s * lam)
        a_aff = min(fraction(s, ds), fraction(lam, dlam))
        mu_aff = float((s + a_aff * ds) @ (lam + a_aff * dlam)) / mi if mi else 0.0
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dx, dy, ds, dlam = newton(s * lam + ds * dlam - sigma * mu)
        alpha = step(ds, dlam)
        # Gondzio centrality correctors: pull outlying products s*lam back
        # into [0.1, 10] * sigma*mu at an enlarged trial step
        for _ in range(st.ipm_correctors if mi else 0):
            if alpha >= 0.999:
                break
            trial = min(1.0, 1.5 * alpha + 0.1)
            v = (s + trial * ds) * (lam + trial * dlam)
            target = np.clip(v, 0.1 * sigma * mu, 10.0 * sigma * mu)
            corr = np.maximum(target - v, -10.0 * sigma * mu)
            cx, cy, cs, cl = newton(-corr, residuals=False)
            a_new = step(ds + cs, dlam + cl)
            if a_new < 1.01 * alpha + 1e-3:
                break
            dx, dy, ds, dlam, alpha = dx + cx, dy + cy, ds + cs, dlam + cl, a_new
        x = x + alpha * dx
        y = y + alpha * dy
        s = np.maximum(s + alpha * ds, 1e-300)
        lam = np.maximum(lam + alpha * dlam, 1e-300)

    ys = np.zeros(m)
    ys[ie] = y
    np.add.at(ys, iu, lam[: len(iu)])
    np.add.at(ys, il, -lam[len(iu):])
    x_out = D * x
    y_out = E * ys / c
    prim, dual = _residuals(prob, x_out, y_out)
    sol = QpSolution(x_out, y_out, status, it, prim, dual)
    sol.info["method"] = "ipm"
    sol.objective = prob.objective(x_out)
    return sol


def kkt_residual(prob: QpProblem, x, y) -> float:
    return _inf_norm(prob.P @ x + prob.q + prob.A.T @ y)


def dump_problem(prob: QpProblem, path) -> None:
    """Write (P, q, A, l, u) as coordinate triplets, one entry per line.

    Format::

        # n m
        P i j value        (upper triangle incl. diagonal)
        q i value
        A i j value
        l i value          (+-inf written as inf / -inf)
        u i value
    """
    P = sp.triu(prob.P).tocoo()
    A = prob.A.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {prob.n} {prob.m}\n")
        for i, j, v in zip(P.row, P.col, P.data):
            fh.write(f"P {i} {j} {v:.17g}\n")
        for i, v in enumerate(prob.q):
            fh.write(f"q {i} {v:.17g}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"A {i} {j} {v:.17g}\n")
        for i, v in enumerate(prob.l):
            fh.write(f"l {i} {v:.17g}\n")
        for i, v in enumerate(prob.u):
            fh.write(f"u {i} {v:.17g}\n")


def load_problem(path) -> QpProblem:
    """Inverse of dump_problem."""
    Pr, Pc, Pv, Ar, Ac, Av = [], [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        n, m = map(int, fh.readline()[1:].split())
        q = np.zeros(n)
        l = np.zeros(m)
        u = np.zeros(m)
        for line in fh:
            tag, *rest = line.split()
            if tag == "P":
                Pr.append(int(rest[0]))
                Pc.append(int(rest[1]))
                Pv.append(float(rest[2]))
            elif tag == "A":
                Ar.append(int(rest[0]))
                Ac.append(int(rest[1]))
                Av.append(float(rest[2]))
            else:
                {"q": q, "l": l, "u": u}[tag][int(rest[0])] = float(rest[1])
    Pu = sp.coo_matrix((Pv, (Pr, Pc)), shape=(n, n)).tocsc()
    P = Pu + sp.triu(Pu, 1).T
    A = sp.coo_matrix((Av, (Ar, Ac)), shape=(m, n))
    return QpProblem(P, q, A, l, u)
