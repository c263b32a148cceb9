"""Road-aligned kinematics of a tractor with one off-axle hitched trailer.

State z = (e_y, e_psi, beta1) of the tractor rear axle relative to the
reference path; input is the tractor curvature kappa. Arc length along the
path is the independent variable.

Scalar helpers return the small dataclasses below; the batched versions
take ``(N, 3)`` state arrays and serve the planner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DomainError, ModelDomainError
from .geometry import CartesianPose, ReferencePath, wrap_angle


@dataclass(frozen=True)
class VehicleParams:
    """Tractor-trailer geometry and actuation limits.

    ``kappa_rate_max`` is the curvature change allowed per metre travelled;
    the per-step bound used by the planner is ``kappa_rate_max * ds``.
    """

    L1: float = 3.78
    L1f: float = 1.46
    L1r: float = 1.64
    M1: float = -0.30
    L2: float = 13.97
    L2r: float = 4.50
    W: float = 2.54
    kappa_max: float = 0.1
    kappa_rate_max: float = 0.1

    def __post_init__(self):
        for name in ("L1", "L2", "W", "kappa_max", "kappa_rate_max"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be > 0, got {v}")
        for name in ("L1f", "L1r", "L2r"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be >= 0, got {v}")
        if not abs(self.M1) < self.L2:
            raise DomainError("|M1| must be smaller than L2")

    def rate_per_step(self, ds: float) -> float:
        return self.kappa_rate_max * ds


# Smaller combination used for the roundabout fixture.
SMALL_VEHICLE = VehicleParams(L1=3.47, L1f=1.16, L1r=1.34, M1=-0.30, L2=9.40, L2r=3.03, W=2.54)


@dataclass(frozen=True)
class RoadState:
    e_y: float = 0.0
    e_psi: float = 0.0
    beta1: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.e_y, self.e_psi, self.beta1])


@dataclass(frozen=True)
class TrailerRoadState:
    s_tra: float
    e_y_tra: float
    e_psi_tra: float


@dataclass(frozen=True)
class LinearStepModel:
    A: np.ndarray
    B: np.ndarray
    G: np.ndarray

    def predict(self, z, kappa) -> np.ndarray:
        return self.A @ np.asarray(z, dtype=float) + self.B * kappa + self.G


@dataclass(frozen=True)
class TrailerLinearModel:
    """Affine model of the trailer-axle lateral/heading error at a fixed station."""

    base: TrailerRoadState
    z_ref: np.ndarray
    d_ey: np.ndarray  # d e_y,tra / d(e_y, e_psi, beta1)
    d_epsi: np.ndarray  # d e_psi,tra / d(e_y, e_psi, beta1)

    def evaluate(self, z) -> Tuple[float, float]:
        dz = np.asarray(z, dtype=float) - self.z_ref
        return (self.base.e_y_tra + float(self.d_ey @ dz),
                self.base.e_psi_tra + float(self.d_epsi @ dz))


def _as_z(z) -> np.ndarray:
    return z.as_array() if isinstance(z, RoadState) else np.asarray(z, dtype=float)


# ---------------------------------------------------------------------------
# continuous dynamics
# ---------------------------------------------------------------------------

def check_domain(z, kappa_gamma):
    """Raise ModelDomainError unless every state is inside the model domain."""
    z = np.atleast_2d(z)
    a = 1.0 - z[:, 0] * kappa_gamma
    if np.any(~np.isfinite(z)):
        raise ModelDomainError("non-finite state")
    if np.any(a <= 0.0):
        raise ModelDomainError("1 - e_y*kappa_gamma <= 0 (state beyond the path's curvature centre)")
    if np.any(np.abs(z[:, 1]) >= math.pi / 2):
        raise ModelDomainError("|e_psi| >= pi/2")
    if np.any(np.abs(z[:, 2]) >= math.pi / 2):
        raise ModelDomainError("|beta1| >= pi/2 (jackknife)")


def _rhs(p: VehicleParams, kg, z, kappa):
    """Array form of the spatial model; z has shape (..., 3)."""
    ey, epsi, beta = z[..., 0], z[..., 1], z[..., 2]
    a = 1.0 - ey * kg
    c = np.cos(epsi)
    g = kappa - np.sin(beta) / p.L2 + (p.M1 / p.L2) * np.cos(beta) * kappa
    return np.stack([a * np.tan(epsi), a / c * kappa - kg, a / c * g], axis=-1)


def _rhs_jac(p: VehicleParams, kg, z, kappa):
    """Partials of _rhs: returns (Fz with shape (..., 3, 3), Fk with shape (..., 3))."""
    ey, epsi, beta = z[..., 0], z[..., 1], z[..., 2]
    kappa = np.broadcast_to(kappa, ey.shape)
    kg = np.broadcast_to(kg, ey.shape)
    a = 1.0 - ey * kg
    c = np.cos(epsi)
    sn = np.sin(epsi)
    t = np.tan(epsi)
    sb, cb = np.sin(beta), np.cos(beta)
    g = kappa - sb / p.L2 + (p.M1 / p.L2) * cb * kappa
    Fz = np.zeros(ey.shape + (3, 3))
    Fz[..., 0, 0] = -kg * t
    Fz[..., 0, 1] = a / c**2
    Fz[..., 1, 0] = -kg * kappa / c
    Fz[..., 1, 1] = a * kappa * sn / c**2
    Fz[..., 2, 0] = -kg * g / c
    Fz[..., 2, 1] = a * g * sn / c**2
    Fz[..., 2, 2] = a / c * (-cb / p.L2 - (p.M1 / p.L2) * sb * kappa)
    Fk = np.zeros(ey.shape + (3,))
    Fk[..., 1] = a / c
    Fk[..., 2] = a / c * (1.0 + (p.M1 / p.L2) * cb)
    return Fz, Fk


def spatial_rhs(params: VehicleParams, kappa_gamma: float, z, kappa: float) -> np.ndarray:
    """d/ds of (e_y, e_psi, beta1)."""
    zz = _as_z(z)
    check_domain(zz, kappa_gamma)
    return _rhs(params, kappa_gamma, zz, kappa)


def equilibrium_joint_angle(params: VehicleParams, kappa: float) -> float:
    """Joint angle with zero rate while turning at constant curvature kappa.

    Solves sin(b) - M1*kappa*cos(b) = L2*kappa in closed form.
    """
    a = -params.M1 * kappa
    r = math.hypot(1.0, a)
    rhs = params.L2 * kappa / r
    if abs(rhs) > 1.0:
        raise ModelDomainError(f"no steady-state joint angle for kappa={kappa}")
    return math.asin(rhs) - math.atan2(a, 1.0)


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def _stage_curvatures(path: ReferencePath, s_i, ds):
    s_i = np.asarray(s_i, dtype=float)
    return (path.curvatures(s_i), path.curvatures(s_i + 0.5 * ds), path.curvatures(s_i + ds))


def _rk4(p, kgs, z, kappa, ds):
    k0, km, k1 = kgs
    f1 = _rhs(p, k0, z, kappa)
    f2 = _rhs(p, km, z + 0.5 * ds * f1, kappa)
    f3 = _rhs(p, km, z + 0.5 * ds * f2, kappa)
    f4 = _rhs(p, k1, z + ds * f3, kappa)
    return z + ds / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)


def _rk4_with_jac(p, kgs, z, kappa, ds):
    """RK4 step and its exact derivatives w.r.t. z and kappa (batched)."""
    k0, km, k1 = kgs
    n = z.shape[0]
    eye = np.broadcast_to(np.eye(3), (n, 3, 3))

    f1 = _rhs(p, k0, z, kappa)
    J1, b1 = _rhs_jac(p, k0, z, kappa)
    D1, E1 = J1, b1

    z2 = z + 0.5 * ds * f1
    f2 = _rhs(p, km, z2, kappa)
    J2, b2 = _rhs_jac(p, km, z2, kappa)
    D2 = J2 @ (eye + 0.5 * ds * D1)
    E2 = np.einsum("nij,nj->ni", J2, 0.5 * ds * E1) + b2

    z3 = z + 0.5 * ds * f2
    f3 = _rhs(p, km, z3, kappa)
    J3, b3 = _rhs_jac(p, km, z3, kappa)
    D3 = J3 @ (eye + 0.5 * ds * D2)
    E3 = np.einsum("nij,nj->ni", J3, 0.5 * ds * E2) + b3

    z4 = z + ds * f3
    f4 = _rhs(p, k1, z4, kappa)
    J4, b4 = _rhs_jac(p, k1, z4, kappa)
    D4 = J4 @ (eye + ds * D3)
    E4 = np.einsum("nij,nj->ni", J4, ds * E3) + b4

    znext = z + ds / 6.0 * (f1 + 2 * f2 + 2 * f3 + f4)
    A = eye + ds / 6.0 * (D1 + 2 * D2 + 2 * D3 + D4)
    B = ds / 6.0 * (E1 + 2 * E2 + 2 * E3 + E4)
    return znext, A, B


def integrate_step(params: VehicleParams, path: ReferencePath, s_i: float, z_i, kappa_i: float,
                   ds: float) -> RoadState:
    """One RK4 step of length ds with the curvature held constant."""
    z = _as_z(z_i)
    kgs = _stage_curvatures(path, s_i, ds)
    check_domain(z, kgs[0])
    out = _rk4(params, kgs, z, kappa_i, ds)
    check_domain(out, kgs[2])
    return RoadState(*map(float, out))


def linearize_step(params: VehicleParams, path: ReferencePath, s_i: float, z_ref, kappa_ref: float,
                   ds: float) -> LinearStepModel:
    z = _as_z(z_ref)
    check_domain(z, path.curvatures(s_i))
    A, B, G = linearize_steps(params, path, np.array([s_i]), z[None, :], np.array([kappa_ref]), ds)
    return LinearStepModel(A[0], B[0], G[0])


def linearize_steps(params, path, s, Z, K, ds):
    """Batched linearization around (Z[i], K[i]) at stations s[i].

    Returns A (n,3,3), B (n,3), G (n,3) with z_next ~ A z + B kappa + G.
    """
    s = np.asarray(s, dtype=float)
    Z = np.asarray(Z, dtype=float)
    K = np.asarray(K, dtype=float)
    kgs = _stage_curvatures(path, s, ds)
    znext, A, B = _rk4_with_jac(params, kgs, Z, K, ds)
    G = znext - np.einsum("nij,nj->ni", A, Z) - B * K[:, None]
    return A, B, G


def rollout(params: VehicleParams, path: ReferencePath, s0: float, z0, kappas, ds: float) -> np.ndarray:
    """Integrate the nonlinear model along a curvature sequence.

    Returns states with shape (len(kappas)+1, 3). Raises ModelDomainError as
    soon as a state leaves the model domain.
    """
    kappas = np.asarray(kappas, dtype=float)
    n = len(kappas)
    s = s0 + ds * np.arange(n + 1)
    # same stage abscissae as the batched Jacobians, so both agree at curvature jumps
    kg0, kgm, kg1 = _stage_curvatures(path, s[:-1], ds)
    Z = np.empty((n + 1, 3))
    Z[0] = _as_z(z0)
    check_domain(Z[0], kg0[0] if n else path.curvatures(s0))
    L2, M1 = params.L2, params.M1
    h = ds
    for i in range(n):
        ey, ep, b = Z[i]
        kap = kappas[i]
        ka, kb, kc = kg0[i], kgm[i], kg1[i]
        stages = []
        cur = (ey, ep, b)
        for j, (kgj, w) in enumerate(((ka, 0.5), (kb, 0.5), (kb, 1.0), (kc, 0.0))):
            y_, p_, b_ = cur
            aa = 1.0 - y_ * kgj
            cc = math.cos(p_)
            if aa <= 0.0 or cc <= 0.0:
                raise ModelDomainError(f"model domain left during step {i}")
            r = aa / cc
            f = (aa * math.tan(p_), r * kap - kgj,
                 r * (kap - math.sin(b_) / L2 + (M1 / L2) * math.cos(b_) * kap))
            stages.append(f)
            if j < 3:
                cur = (ey + w * h * f[0], ep + w * h * f[1], b + w * h * f[2])
        f1, f2, f3, f4 = stages
        Z[i + 1, 0] = ey + h / 6.0 * (f1[0] + 2 * f2[0] + 2 * f3[0] + f4[0])
        Z[i + 1, 1] = ep + h / 6.0 * (f1[1] + 2 * f2[1] + 2 * f3[1] + f4[1])
        Z[i + 1, 2] = b + h / 6.0 * (f1[2] + 2 * f2[2] + 2 * f3[2] + f4[2])
        if abs(Z[i + 1, 2]) >= math.pi / 2 or abs(Z[i + 1, 1]) >= math.pi / 2:
            raise ModelDomainError(f"model domain left at step {i + 1}")
        if 1.0 - Z[i + 1, 0] * kc <= 0.0:
            raise ModelDomainError(f"model domain left at step {i + 1}")
    return Z


# ---------------------------------------------------------------------------
# Cartesian chain and trailer projection
# ---------------------------------------------------------------------------

def chain_poses(params: VehicleParams, path: ReferencePath, s, Z):
    """Tractor rear-axle and trailer-axle Cartesian poses (batched).

    Returns (xv, yv, thv, xt, yt, tht).
    """
    Z = np.asarray(Z, dtype=float)
    px, py, pth = path.poses(s)
    ey, epsi, beta = Z[..., 0], Z[..., 1], Z[..., 2]
    xv = px - ey * np.sin(pth)
    yv = py + ey * np.cos(pth)
    thv = pth + epsi
    hx = xv + params.M1 * np.cos(thv)
    hy = yv + params.M1 * np.sin(thv)
    tht = thv - beta
    xt = hx - params.L2 * np.cos(tht)
    yt = hy - params.L2 * np.sin(tht)
    return xv, yv, thv, xt, yt, tht


def tractor_to_cartesian(path: ReferencePath, s: float, z, params: VehicleParams = VehicleParams()):
    xv, yv, thv, xt, yt, tht = chain_poses(params, path, float(s), _as_z(z))
    return CartesianPose(float(xv), float(yv), float(thv)), CartesianPose(float(xt), float(yt), float(tht))


def trailer_states(params: VehicleParams, path: ReferencePath, s, Z):
    """Trailer-axle road-aligned states (s_tra, e_y_tra, e_psi_tra), batched."""
    s = np.asarray(s, dtype=float)
    _, _, _, xt, yt, tht = chain_poses(params, path, s, Z)
    hint = s + params.M1 - params.L2
    s_t, e_t, th_path = path.project_points(xt, yt, s_hint=hint)
    return s_t, e_t, wrap_angle(tht - th_path)


def trailer_road_state(path: ReferencePath, s: float, z, params: VehicleParams = VehicleParams()) -> TrailerRoadState:
    s_t, e_t, p_t = trailer_states(params, path, float(s), _as_z(z))
    return TrailerRoadState(float(s_t), float(e_t), float(p_t))


DEFAULT_DELTA = (1e-4, 1e-4, 1e-4)


def trailer_partials(params, path, s, Z, delta=DEFAULT_DELTA):
    """Central-difference partials of (e_y_tra, e_psi_tra) w.r.t. z, station held fixed.

    Returns base (s_t, e_t, p_t) arrays and gradients d_ey, d_epsi with shape (n, 3).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = len(s)
    base = trailer_states(params, path, s, Z)
    d_ey = np.empty((n, 3))
    d_ep = np.empty((n, 3))
    for j in range(3):
        h = delta[j]
        Zp = Z.copy()
        Zm = Z.copy()
        Zp[:, j] += h
        Zm[:, j] -= h
        _, ep_, pp_ = trailer_states(params, path, s, Zp)
        _, em_, pm_ = trailer_states(params, path, s, Zm)
        d_ey[:, j] = (ep_ - em_) / (2 * h)
        d_ep[:, j] = wrap_angle(pp_ - pm_) / (2 * h)
    return base, d_ey, d_ep


def trailer_linearize(path: ReferencePath, s_ref: float, z_ref, params: VehicleParams = VehicleParams(),
                      delta=DEFAULT_DELTA) -> TrailerLinearModel:
    if any(d <= 0 for d in delta):
        raise DomainError("perturbation sizes must be > 0")
    z = _as_z(z_ref)
    (s_t, e_t, p_t), d_ey, d_ep = trailer_partials(params, path, [s_ref], z[None, :], delta)
    return TrailerLinearModel(TrailerRoadState(float(s_t[0]), float(e_t[0]), float(p_t[0])),
                              z.copy(), d_ey[0], d_ep[0])


def curvature_to_steering(params: VehicleParams, kappa: float) -> float:
    return math.atan(kappa * params.L1)


def steering_to_curvature(params: VehicleParams, phi: float) -> float:
    return math.tan(phi) / params.L1
