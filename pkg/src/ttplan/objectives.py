"""Path objectives and their assembly into QP cost data.

Five lateral objectives are supported:

1. tractor centering        sum of e_y^2
2. trailer centering        sum of e_y,tra^2
3. blend                    sum of ((1-K) e_y + K e_y,tra)^2
4. max axle deviation       max |e_y|, |e_y,tra|   (epigraph variable)
5. swept sides              max |side offset| over sampled body points (epigraph)

Each is combined with ``smooth_weight * sum (kappa_i - kappa_{i-1})^2``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError


class ObjectiveKind(enum.IntEnum):
    TRACTOR_CENTERING = 1
    TRAILER_CENTERING = 2
    BLEND = 3
    MAX_DEVIATION = 4
    SWEPT_SIDES = 5


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: ObjectiveKind = ObjectiveKind.BLEND
    K: Optional[float] = 0.45
    smooth_weight: float = 1.0

    def __post_init__(self):
        try:
            kind = ObjectiveKind(int(self.kind))
        except ValueError:
            raise ConfigurationError(f"unknown objective kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        if kind == ObjectiveKind.BLEND:
            if self.K is None or not (0.0 <= float(self.K) <= 1.0):
                raise ConfigurationError("blend objective needs K in [0, 1]")
            object.__setattr__(self, "K", float(self.K))
        else:
            object.__setattr__(self, "K", None)
        if not (math.isfinite(self.smooth_weight) and self.smooth_weight > 0):
            raise ConfigurationError("smooth_weight must be finite and > 0")

    @property
    def n_aux(self) -> int:
        return 1 if self.kind in (ObjectiveKind.MAX_DEVIATION, ObjectiveKind.SWEPT_SIDES) else 0

    @property
    def needs_trailer(self) -> bool:
        return self.kind in (ObjectiveKind.TRAILER_CENTERING, ObjectiveKind.BLEND,
                             ObjectiveKind.MAX_DEVIATION)

    @property
    def needs_sides(self) -> bool:
        return self.kind == ObjectiveKind.SWEPT_SIDES


@dataclass(frozen=True)
class VariableLayout:
    """Index map of the stacked QP variable.

    x = [z_0 .. z_N | kappa_0 .. kappa_{N-1} | slack_up_1..N | slack_lo_1..N | aux]
    """

    N: int
    n_aux: int = 0

    @property
    def n_z(self) -> int:
        return 3 * (self.N + 1)

    @property
    def k0(self) -> int:
        return self.n_z

    @property
    def sp0(self) -> int:
        return self.k0 + self.N

    @property
    def sm0(self) -> int:
        return self.sp0 + self.N

    @property
    def aux0(self) -> int:
        return self.sm0 + self.N

    @property
    def n(self) -> int:
        return self.aux0 + self.n_aux

    def z(self, i, k=0):
        return 3 * np.asarray(i) + k

    def kappa(self, i):
        return self.k0 + np.asarray(i)

    def slack_up(self, i):
        return self.sp0 + np.asarray(i) - 1

    def slack_lo(self, i):
        return self.sm0 + np.asarray(i) - 1


@dataclass
class CostAssembly:
    P: sp.csc_matrix
    q: np.ndarray
    constant: float
    n_aux: int
    aux_A: sp.csr_matrix
    aux_l: np.ndarray
    aux_u: np.ndarray

    def value(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.constant)


@dataclass
class TrailerModels:
    """Affine trailer lateral error per station: e_tra ~ const + grad . z."""

    const: np.ndarray  # (N+1,)
    grad: np.ndarray  # (N+1, 3)


@dataclass
class SideModels:
    """Affine side-point offsets per station and body point."""

    const: np.ndarray  # (N+1, P)
    grad: np.ndarray  # (N+1, P, 3)
    left: np.ndarray  # (P,) bool


def affine_from_reference(base, grad, Zref):
    """Turn ``base + grad.(z - zref)`` into ``const + grad.z``."""
    if base.ndim == 1:
        return base - np.einsum("nk,nk->n", grad, Zref)
    return base - np.einsum("npk,nk->np", grad, Zref)


def _square_terms(layout: VariableLayout, h, c, rows, cols, vals, q, stations):
    """Accumulate sum_i (c_i + h_i . z_i)^2 over the given stations."""
    h = h[stations]
    c = c[stations]
    idx = layout.z(stations)[:, None] + np.arange(3)[None, :]
    for a in range(3):
        for b in range(3):
            rows.append(idx[:, a])
            cols.append(idx[:, b])
            vals.append(2.0 * h[:, a] * h[:, b])
    np.add.at(q, idx.ravel(), (2.0 * c[:, None] * h).ravel())
    return float(np.sum(c**2))


def build_cost(spec: ObjectiveSpec, layout: VariableLayout, trailer: Optional[TrailerModels] = None,
               sides: Optional[SideModels] = None) -> CostAssembly:
    """Quadratic cost and epigraph rows for the chosen objective plus smoothing."""
    if layout.n_aux != spec.n_aux:
        raise ConfigurationError("layout auxiliary count does not match the objective")
    if spec.needs_trailer and trailer is None:
        raise ConfigurationError(f"objective {int(spec.kind)} needs trailer models")
    if spec.needs_sides and sides is None:
        raise ConfigurationError("objective 5 needs side-point models")
    N, n = layout.N, layout.n
    rows, cols, vals = [], [], []
    q = np.zeros(n)
    const = 0.0
    st = np.arange(1, N + 1)
    e1 = np.zeros((N + 1, 3))
    e1[:, 0] = 1.0
    zero = np.zeros(N + 1)
    kind = spec.kind

    if kind == ObjectiveKind.TRACTOR_CENTERING:
        const += _square_terms(layout, e1, zero, rows, cols, vals, q, st)
    elif kind == ObjectiveKind.TRAILER_CENTERING:
        const += _square_terms(layout, trailer.grad, trailer.const, rows, cols, vals, q, st)
    elif kind == ObjectiveKind.BLEND:
        K = spec.K
        h = (1.0 - K) * e1 + K * trailer.grad
        const += _square_terms(layout, h, K * trailer.const, rows, cols, vals, q, st)

    # smoothing over kappa_1..kappa_{N-1}
    w = spec.smooth_weight
    i = np.arange(1, N)
    ki, kj = layout.kappa(i), layout.kappa(i - 1)
    for r, c_, v in ((ki, ki, 2 * w), (kj, kj, 2 * w), (ki, kj, -2 * w), (kj, ki, -2 * w)):
        rows.append(r)
        cols.append(c_)
        vals.append(np.full(len(i), v))

    aux_r, aux_c, aux_v, aux_l, aux_u = [], [], [], [], []
    nrow = 0
    if kind in (ObjectiveKind.MAX_DEVIATION, ObjectiveKind.SWEPT_SIDES):
        t = layout.aux0
        q[t] += 1.0
        if kind == ObjectiveKind.MAX_DEVIATION:
            terms = [(e1[st], zero[st]), (trailer.grad[st], trailer.const[st])]
            for g, c0 in terms:
                zi = layout.z(st)[:, None] + np.arange(3)[None, :]
                for sign in (1.0, -1.0):
                    # c0 + g.z - t <= 0  and  c0 + g.z + t >= 0
                    r = nrow + np.arange(len(st))
                    aux_r += [np.repeat(r, 3), r]
                    aux_c += [zi.ravel(), np.full(len(st), t)]
                    aux_v += [g.ravel(), np.full(len(st), -sign)]
                    if sign > 0:
                        aux_l.append(np.full(len(st), -np.inf))
                        aux_u.append(-c0)
                    else:
                        aux_l.append(-c0)
                        aux_u.append(np.full(len(st), np.inf))
                    nrow += len(st)
        else:
            g = sides.grad[st]  # (N, P, 3)
            c0 = sides.const[st]  # (N, P)
            P_ = g.shape[1]
            left = np.broadcast_to(sides.left[None, :], c0.shape)
            zi = (layout.z(st)[:, None, None] + np.arange(3)[None, None, :])
            zi = np.broadcast_to(zi, g.shape)
            r = nrow + np.arange(len(st) * P_)
            aux_r += [np.repeat(r, 3), r]
            aux_c += [zi.ravel(), np.full(r.shape, t)]
            # left points: c0 + g.z <= t ; right points: c0 + g.z >= -t
            aux_v += [g.ravel(), np.where(left, -1.0, 1.0).ravel()]
            aux_l.append(np.where(left, -np.inf, -c0).ravel())
            aux_u.append(np.where(left, -c0, np.inf).ravel())
            nrow += len(r)

    P = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsc()
    if nrow:
        aux_A = sp.coo_matrix((np.concatenate(aux_v), (np.concatenate(aux_r), np.concatenate(aux_c))),
                              shape=(nrow, n)).tocsr()
        aux_l = np.concatenate(aux_l)
        aux_u = np.concatenate(aux_u)
    else:
        aux_A = sp.csr_matrix((0, n))
        aux_l = aux_u = np.zeros(0)
    return CostAssembly(P, q, const, spec.n_aux, aux_A, aux_l, aux_u)


def smoothness(kappas, weight: float = 1.0) -> float:
    k = np.asarray(kappas, dtype=float)
    return float(weight * np.sum(np.diff(k) ** 2))


def lateral_objective(spec: ObjectiveSpec, ey, ey_tra=None, side_offsets=None, left=None) -> float:
    """J_e for stations 1..N given exact (nonlinear) quantities."""
    kind = spec.kind
    ey = np.asarray(ey)[1:]
    if kind == ObjectiveKind.TRACTOR_CENTERING:
        return float(np.sum(ey**2))
    if kind == ObjectiveKind.SWEPT_SIDES:
        off = np.asarray(side_offsets)[1:]
        return float(np.max(np.abs(off)))
    et = np.asarray(ey_tra)[1:]
    if kind == ObjectiveKind.TRAILER_CENTERING:
        return float(np.sum(et**2))
    if kind == ObjectiveKind.BLEND:
        return float(np.sum(((1 - spec.K) * ey + spec.K * et) ** 2))
    return float(max(np.max(np.abs(ey)), np.max(np.abs(et))))


def evaluate_objective(spec: ObjectiveSpec, path, params, pts, s, Z, kappas) -> float:
    """True objective of a trajectory, using the nonlinear trailer and body maps."""
    from .corridor import body_offsets_batch
    from .vehicle import trailer_states

    s = np.asarray(s, dtype=float)
    Z = np.asarray(Z, dtype=float)
    et = offs = None
    if spec.needs_trailer:
        _, et, _ = trailer_states(params, path, s, Z)
    if spec.needs_sides:
        _, offs = body_offsets_batch(params, path, pts, s, Z)
    return lateral_objective(spec, Z[:, 0], et, offs) + smoothness(kappas, spec.smooth_weight)
