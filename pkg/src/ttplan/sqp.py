"""Sequential quadratic programming planner.

Each iteration linearizes the dynamics, the trailer map and every body point
around the incumbent, solves one sparse QP for the curvature sequence, and
re-simulates the nonlinear model with that sequence. Corridor rows carry
nonnegative slacks so every subproblem is feasible.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .corridor import (BodyPointSet, body_offsets_batch, collision_rows, free_intervals,
                       linearize_body_offsets_batch)
from .errors import ConfigurationError, DomainError, PlannerError
from .objectives import (ObjectiveKind, ObjectiveSpec, SideModels, TrailerModels, VariableLayout,
                         affine_from_reference, build_cost, lateral_objective, smoothness)
from .qp import QpProblem, QpSettings, QpSolution, QpStatus, solve_qp
from .scenario import Scenario
from .vehicle import DEFAULT_DELTA, linearize_steps, rollout, trailer_partials, trailer_states

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannerConfig:
    ds: float = 0.2
    horizon: float = 134.2
    max_sqp_iters: int = 50
    step_tol: float = 1e-4
    kappa_tol: float = 1e-5
    trust_region: Tuple[float, float, float, float] = (0.5, 0.1, 0.1, 0.02)
    slack_weight: float = 1e4
    objective: ObjectiveSpec = ObjectiveSpec()
    body_spacing: float = 0.5
    max_shrinks: int = 5
    merit_tol: float = 1e-10
    min_trust_scale: float = 1e-6
    accept_ratio: float = 0.1
    obstacle_pad: float = 0.0
    shrink_factor: float = 0.5
    delta: Tuple[float, float, float] = DEFAULT_DELTA
    qp: QpSettings = field(default_factory=lambda: QpSettings(eps_rel=0.0))
    qp_method: str = "auto"

    def __post_init__(self):
        if not self.ds > 0:
            raise ConfigurationError("ds must be > 0")
        if not self.horizon >= 2 * self.ds:
            raise ConfigurationError("horizon must cover at least two steps")
        if len(self.trust_region) != 4 or any(not t > 0 for t in self.trust_region):
            raise ConfigurationError("trust_region needs four positive entries")
        if not self.slack_weight > 0:
            raise ConfigurationError("slack_weight must be > 0")
        if self.qp_method not in ("auto", "admm", "ipm"):
            raise ConfigurationError(f"unknown qp_method {self.qp_method!r}")

    @property
    def qp_settings(self) -> QpSettings:
        """QP settings for the subproblems; "auto" selects the interior-point method."""
        method = "ipm" if self.qp_method == "auto" else self.qp_method
        return replace(self.qp, method=method)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.ds))


def make_config(scenario: Scenario, **overrides) -> PlannerConfig:
    """Planner config from scenario defaults, then keyword overrides."""
    kw = {"objective": scenario.objective, "ds": scenario.ds, "horizon": scenario.horizon}
    for k, v in scenario.planner.items():
        kw[k] = tuple(v) if k == "trust_region" else v
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return PlannerConfig(**kw)


@dataclass
class Trajectory:
    s: np.ndarray  # (N+1,)
    Z: np.ndarray  # (N+1, 3)
    kappa: np.ndarray  # (N,)
    slack: np.ndarray = None  # (N+1,) corridor violation per station

    def __post_init__(self):
        if self.slack is None:
            self.slack = np.zeros(len(self.s))

    @property
    def N(self) -> int:
        return len(self.kappa)


@dataclass
class IterationInfo:
    iteration: int
    objective: float
    merit: float
    step_z: float
    step_kappa: float
    qp_status: str
    qp_iterations: int
    shrinks: int
    seconds: float
    accepted: bool = True
    trust_scale: float = 1.0


@dataclass
class PlanResult:
    trajectory: Trajectory
    converged: bool
    sqp_iterations: int
    history: List[IterationInfo]
    wall_time: float
    metrics: object = None
    objective: ObjectiveSpec = None

    @property
    def objective_values(self):
        return [h.objective for h in self.history]

    @property
    def step_norms(self):
        return [h.step_z for h in self.history]


# ---------------------------------------------------------------------------

def stations(scenario: Scenario, config: PlannerConfig) -> np.ndarray:
    return scenario.s_start + config.ds * np.arange(config.n_steps + 1)


def project_kappa(kappas, kappa_start, kappa_max, rate):
    """Clamp a curvature sequence into the box and rate limits, front to back."""
    k = np.array(kappas, dtype=float)
    k[0] = kappa_start
    for i in range(1, len(k)):
        lo = max(k[i - 1] - rate, -kappa_max)
        hi = min(k[i - 1] + rate, kappa_max)
        k[i] = min(max(k[i], lo), hi)
    return k


def initialize_trajectory(scenario: Scenario, config: PlannerConfig) -> Trajectory:
    """Centerline guess: zero states, curvature equal to the road curvature within limits."""
    s = stations(scenario, config)
    v = scenario.vehicle
    kg = scenario.path.curvatures(s[:-1])
    k = project_kappa(kg, scenario.kappa_start, v.kappa_max, v.rate_per_step(config.ds))
    Z = np.zeros((len(s), 3))
    Z[0] = scenario.z_start.as_array()
    return Trajectory(s, Z, k)


class _Problem:
    """Per-plan constant data."""

    def __init__(self, scenario: Scenario, config: PlannerConfig):
        self.sc = scenario
        self.cfg = config
        self.path = scenario.path
        self.params = scenario.vehicle
        self.corridor = scenario.corridor
        self.pts = BodyPointSet.from_params(self.params, config.body_spacing)
        self.s = stations(scenario, config)
        self.N = config.n_steps
        self.layout = VariableLayout(self.N, config.objective.n_aux)
        self.rate = self.params.rate_per_step(config.ds)
        self.slack_unit = config.slack_weight if config.qp_settings.method == "admm" else 1.0
        if self.s[-1] > self.path.total_length + 1e-9:
            raise ConfigurationError("planning horizon extends beyond the reference path")

    def rollout(self, kappas) -> np.ndarray:
        return rollout(self.params, self.path, self.s[0], self.sc.z_start, kappas, self.cfg.ds)

    def _violation(self, st, offs, s_pad=0.0):
        lo, hi = free_intervals(self.corridor, st, check=False, s_pad=s_pad)
        m = self.corridor.margin
        left = self.pts.left
        v = np.maximum(np.where(left[None, :], offs - (hi - m), (lo + m) - offs), 0.0)
        # one slack per side and station, as in the QP
        viol = v[:, left].max(axis=1, initial=0.0) + v[:, ~left].max(axis=1, initial=0.0)
        viol[0] = 0.0
        return viol

    def evaluate(self, Z, kappas):
        """(objective, corridor violation per station) of a nonlinear trajectory."""
        spec = self.cfg.objective
        st, offs = body_offsets_batch(self.params, self.path, self.pts, self.s, Z)
        viol = self._violation(st, offs, self.cfg.obstacle_pad)
        et = None
        if spec.needs_trailer:
            _, et, _ = trailer_states(self.params, self.path, self.s, Z)
        obj = lateral_objective(spec, Z[:, 0], et, offs) + smoothness(kappas, spec.smooth_weight)
        return obj, viol

    def model_violation(self, Z):
        """Violation against the padded rows the QP is built from."""
        st, offs = body_offsets_batch(self.params, self.path, self.pts, self.s, Z)
        return self._violation(st, offs, 2.0 * self.cfg.obstacle_pad)


def _merit(obj, viol, weight):
    return obj + weight * float(np.sum(viol))


def build_qp(prob: _Problem, traj: Trajectory, tr_scale: float = 1.0) -> QpProblem:
    """Assemble the QP subproblem linearized around ``traj``."""
    cfg, lay, N = prob.cfg, prob.layout, prob.N
    n = lay.n
    s, Zb, Kb = traj.s, traj.Z, traj.kappa
    spec = cfg.objective
    params = prob.params

    A_, B_, G_ = linearize_steps(params, prob.path, s[:-1], Zb[:-1], Kb, cfg.ds)

    rows, cols, vals = [], [], []
    lo_parts, up_parts = [], []
    r0 = 0

    # dynamics: z_{i+1} - A z_i - B kappa_i = G
    i = np.arange(N)
    for k in range(3):
        r = r0 + 3 * i + k
        rows.append(r)
        cols.append(lay.z(i + 1, k))
        vals.append(np.ones(N))
        for j in range(3):
            rows.append(r)
            cols.append(lay.z(i, j))
            vals.append(-A_[:, k, j])
        rows.append(r)
        cols.append(lay.kappa(i))
        vals.append(-B_[:, k])
    g = G_.ravel()
    lo_parts.append(g)
    up_parts.append(g)
    r0 += 3 * N

    # variable bounds (identity rows)
    vlo = np.full(n, -np.inf)
    vup = np.full(n, np.inf)
    tr = np.asarray(cfg.trust_region) * tr_scale
    zi = Zb.ravel()
    trz = np.tile(tr[:3], N + 1)
    vlo[: lay.n_z] = zi - trz
    vup[: lay.n_z] = zi + trz
    vlo[:3] = vup[:3] = prob.sc.z_start.as_array()
    kidx = lay.kappa(np.arange(N))
    vlo[kidx] = np.maximum(-params.kappa_max, Kb - tr[3])
    vup[kidx] = np.minimum(params.kappa_max, Kb + tr[3])
    vlo[kidx[0]] = vup[kidx[0]] = prob.sc.kappa_start
    vlo[lay.sp0:lay.aux0] = 0.0
    if lay.n_aux:
        vlo[lay.aux0:] = 0.0
    rows.append(r0 + np.arange(n))
    cols.append(np.arange(n))
    vals.append(np.ones(n))
    lo_parts.append(vlo)
    up_parts.append(vup)
    r0 += n

    # curvature rate
    j = np.arange(1, N)
    r = r0 + np.arange(N - 1)
    rows += [r, r]
    cols += [lay.kappa(j), lay.kappa(j - 1)]
    vals += [np.ones(N - 1), -np.ones(N - 1)]
    lo_parts.append(np.full(N - 1, -prob.rate))
    up_parts.append(np.full(N - 1, prob.rate))
    r0 += N - 1

    # corridor rows for stations 1..N
    st_idx = np.arange(1, N + 1)
    bst, bbase, bgrad = linearize_body_offsets_batch(params, prob.path, prob.pts, s[st_idx],
                                                     Zb[st_idx], cfg.delta)
    cr = collision_rows(prob.corridor, prob.pts, bst, bbase, bgrad, Zb[st_idx],
                        s_pad=2.0 * cfg.obstacle_pad)
    P_ = len(prob.pts)
    left = np.broadcast_to(prob.pts.left[None, :], (N, P_))
    # rows that cannot bind anywhere inside the trust box are dropped (exact)
    reach = np.einsum("npk,k->np", np.abs(cr.coef), tr[:3])
    val = np.einsum("npk,nk->np", cr.coef, Zb[st_idx])
    keep = np.where(left, val + reach >= cr.upper - 1e-9, val - reach <= cr.lower + 1e-9)
    ki, kp = np.nonzero(keep)
    nk = len(ki)
    rr = r0 + np.arange(nk)
    zc = lay.z(st_idx[ki])[:, None] + np.arange(3)[None, :]
    rows.append(np.repeat(rr, 3))
    cols.append(zc.ravel())
    vals.append(cr.coef[ki, kp].ravel())
    kl = left[ki, kp]
    # slack columns hold sigma * slack_unit; penalty units suit ADMM's
    # equilibration, metres the interior-point method
    unit = prob.slack_unit
    slack_col = np.where(kl, lay.slack_up(st_idx[ki]), lay.slack_lo(st_idx[ki]))
    rows.append(rr)
    cols.append(slack_col)
    vals.append(np.where(kl, -1.0, 1.0) / unit)
    lo_parts.append(cr.lower[ki, kp])
    up_parts.append(cr.upper[ki, kp])
    r0 += nk

    # objective
    trailer = sides = None
    if spec.needs_trailer:
        (_, et, _), d_ey, _ = trailer_partials(params, prob.path, s, Zb, cfg.delta)
        trailer = TrailerModels(affine_from_reference(et, d_ey, Zb), d_ey)
    if spec.needs_sides:
        base_full = np.zeros((N + 1, P_))
        grad_full = np.zeros((N + 1, P_, 3))
        base_full[1:] = bbase
        grad_full[1:] = bgrad
        Zfull = Zb
        sides = SideModels(affine_from_reference(base_full, grad_full, Zfull), grad_full, prob.pts.left)
    cost = build_cost(spec, lay, trailer, sides)
    q = cost.q.copy()
    q[lay.sp0:lay.aux0] += cfg.slack_weight / unit
    if cost.aux_A.shape[0]:
        keep = _binding_epigraph_rows(cost, lay, Zb, tr)
        aux = cost.aux_A[keep].tocoo()
        rows.append(r0 + aux.row)
        cols.append(aux.col)
        vals.append(aux.data)
        lo_parts.append(cost.aux_l[keep])
        up_parts.append(cost.aux_u[keep])
        r0 += len(keep)

    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(r0, n)).tocsc()
    l = np.concatenate(lo_parts)
    u = np.concatenate(up_parts)
    qp = QpProblem(cost.P, q, A, l, u, layout={"N": N, "n_aux": lay.n_aux})
    qp.constant = cost.constant
    return qp


def _binding_epigraph_rows(cost, lay: VariableLayout, Zb, tr):
    """Indices of epigraph rows ``t >= h(z)`` that can bind inside the trust box.

    Every row bounds t from below by the minimum of its h over the box; a row
    whose maximum stays below the largest such bound is never active.
    """
    A = cost.aux_A.tocsc()
    a = A[:, : lay.n_z]
    tcol = A[:, lay.aux0].toarray().ravel()
    zc = Zb.ravel()
    rad = np.tile(tr[:3], len(Zb))
    rad[:3] = 0.0
    mid = a @ zc
    half = abs(a) @ rad
    upper = tcol < 0  # a.z - t <= u
    hmax = np.where(upper, mid + half - cost.aux_u, cost.aux_l - (mid - half))
    hmin = np.where(upper, mid - half - cost.aux_u, cost.aux_l - (mid + half))
    return np.flatnonzero(hmax >= hmin.max() - 1e-9)


def sqp_iterate(prob: _Problem, traj: Trajectory, warm: Optional[QpSolution] = None,
                tr_scale: float = 1.0):
    """One SQP step.

    Returns (candidate trajectory, qp solution, shrinks used, objective, model
    merit), the last being the QP's prediction of the candidate's merit.
    """
    cfg = prob.cfg
    last_err = None
    for shrink in range(cfg.max_shrinks + 1):
        qp = build_qp(prob, traj, tr_scale)
        x0 = warm.x if warm is not None else None
        y0 = warm.y if warm is not None else None
        sol = solve_qp(qp, cfg.qp_settings, x0=x0, y0=y0)
        if sol.status == QpStatus.PRIMAL_INFEASIBLE:
            raise PlannerError("QP subproblem reported infeasible despite corridor slacks")
        k = sol.x[prob.layout.kappa(np.arange(prob.N))]
        k = project_kappa(k, prob.sc.kappa_start, prob.params.kappa_max, prob.rate)
        try:
            Z = prob.rollout(k)
            obj, viol = prob.evaluate(Z, k)
        except DomainError as exc:
            last_err = exc
            tr_scale *= cfg.shrink_factor
            warm = None
            log.debug("rollout failed (%s); shrinking trust region to %.3g", exc, tr_scale)
            continue
        new = Trajectory(traj.s, Z, k, viol)
        return new, sol, shrink, obj, sol.objective + qp.constant
    raise PlannerError(f"trust region shrinking did not recover a valid rollout: {last_err}")


def plan(scenario: Scenario, config: Optional[PlannerConfig] = None, callback=None) -> PlanResult:
    """Run the SQP loop until the state and curvature updates fall below tolerance."""
    from .metrics import compute_metrics

    cfg = config or make_config(scenario)
    t0 = time.perf_counter()
    prob = _Problem(scenario, cfg)
    init = initialize_trajectory(scenario, cfg)
    Z0 = prob.rollout(init.kappa)
    obj0, viol0 = prob.evaluate(Z0, init.kappa)
    traj = Trajectory(init.s, Z0, init.kappa, viol0)
    best, best_merit = traj, _merit(obj0, viol0, cfg.slack_weight)
    history: List[IterationInfo] = []
    converged = False
    warm = None
    merit_cur, obj_cur = best_merit, obj0
    tr_scale = 1.0
    for it in range(1, cfg.max_sqp_iters + 1):
        ti = time.perf_counter()
        new, sol, shrinks, obj, model = sqp_iterate(prob, traj, warm, tr_scale)
        dz = float(np.max(np.abs(new.Z - traj.Z)))
        dk = float(np.max(np.abs(new.kappa - traj.kappa)))
        merit = _merit(obj, new.slack, cfg.slack_weight)
        used = tr_scale * cfg.shrink_factor ** shrinks
        # ratio of actual to predicted merit reduction drives the trust box;
        # the prediction starts from the model's own value at the incumbent
        tol = cfg.merit_tol * max(1.0, abs(merit_cur))
        model0 = obj_cur + cfg.slack_weight * float(np.sum(prob.model_violation(traj.Z)))
        predicted = model0 - model
        actual = merit_cur - merit
        stationary = predicted <= tol and sol.status == QpStatus.SOLVED
        ratio = actual / predicted if predicted > tol else (1.0 if actual >= -tol else -1.0)
        accepted = not stationary and (ratio >= cfg.accept_ratio or used <= cfg.min_trust_scale)
        info = IterationInfo(it, obj, merit, dz, dk, sol.status.value, sol.iterations, shrinks,
                             time.perf_counter() - ti, accepted, used)
        history.append(info)
        log.info("sqp %2d  J=%.8g  merit=%.8g  |dz|=%.2e  |dk|=%.2e  qp=%s/%d  tr=%.3g  rho=%.2f%s  %.1fs",
                 it, obj, merit, dz, dk, info.qp_status, sol.iterations, used, ratio,
                 "" if accepted else "  rejected", info.seconds)
        if callback is not None:
            callback(info)
        if ratio < 0.25:
            tr_scale = used * cfg.shrink_factor
        elif ratio > 0.75:
            tr_scale = min(1.0, used / cfg.shrink_factor)
        else:
            tr_scale = used
        if stationary:
            # no model decrease left: the incumbent is a stationary point
            converged = True
            best = traj
            break
        if not accepted:
            continue
        warm = sol
        traj, merit_cur, obj_cur = new, merit, obj
        if merit <= best_merit:
            best, best_merit = new, merit
        if dz <= cfg.step_tol and dk <= cfg.kappa_tol:
            converged = True
            best = new
            break
    wall = time.perf_counter() - t0
    result = PlanResult(best, converged, len(history), history, wall, objective=cfg.objective)
    result.metrics = compute_metrics(scenario.path, scenario.vehicle, best, prob.pts, wall)
    return result


def k_sweep(scenarios: Sequence[Scenario], K_grid: Sequence[float], config_overrides=None,
            callback=None):
    """Pick the blend weight K minimizing the worst |a_L - a_R| over the scenarios.

    Returns (best_K, table) where table maps K -> list of area differences
    (None where planning failed). Ties go to the smallest K.
    """
    if not len(K_grid):
        raise ConfigurationError("empty K grid")
    if any(not 0.0 <= k <= 1.0 for k in K_grid):
        raise ConfigurationError("K values must lie in [0, 1]")
    overrides = dict(config_overrides or {})
    table = {}
    best_K, best_val = None, math.inf
    for K in sorted(K_grid):
        vals = []
        for sc in scenarios:
            sck = sc.with_objective(ObjectiveKind.BLEND, K)
            try:
                res = plan(sck, make_config(sck, **overrides))
                vals.append(res.metrics.area_diff)
            except PlannerError as exc:
                log.warning("K=%.3f on %s failed: %s", K, sc.name, exc)
                vals.append(None)
            if callback is not None:
                callback(K, sc, vals[-1])
        table[K] = vals
        if any(v is None for v in vals):
            continue
        worst = max(abs(v) for v in vals)
        if worst < best_val:
            best_K, best_val = K, worst
    if best_K is None:
        raise PlannerError("every K in the grid failed")
    return best_K, table
