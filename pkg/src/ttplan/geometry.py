"""Piecewise line/arc reference paths.

A path is an ordered list of constant-curvature segments starting from a
Cartesian pose. Everything is closed form: curvature lookup, pose
reconstruction, and projection of Cartesian points back onto the path.
Lateral offsets are positive to the left of the path tangent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, ProjectionError

_S_TOL = 1e-9
# along-track residual above which a clamped foot point counts as "beyond the path"
_FOOT_TOL = 1e-6


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class CartesianPose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))


@dataclass(frozen=True)
class PathProjection:
    s: float
    e_y: float
    e_psi: float


@dataclass(frozen=True)
class Segment:
    length: float
    curvature: float


@dataclass(frozen=True)
class ReferencePath:
    """Arc-length parametrized centerline made of lines and circular arcs."""

    segments: tuple
    start_pose: CartesianPose = CartesianPose(0.0, 0.0, 0.0)
    sample_step: float = 0.1
    total_length: float = field(init=False)
    _s0: np.ndarray = field(init=False, repr=False, compare=False)
    _x0: np.ndarray = field(init=False, repr=False, compare=False)
    _y0: np.ndarray = field(init=False, repr=False, compare=False)
    _th0: np.ndarray = field(init=False, repr=False, compare=False)
    _len: np.ndarray = field(init=False, repr=False, compare=False)
    _kap: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        if not segs:
            raise DomainError("path needs at least one segment")
        for k, seg in enumerate(segs):
            if not seg.length > 0 or not math.isfinite(seg.length):
                raise DomainError(f"segment {k}: length must be > 0, got {seg.length}")
            if not math.isfinite(seg.curvature):
                raise DomainError(f"segment {k}: curvature must be finite")
        if not self.sample_step > 0:
            raise DomainError("sample_step must be > 0")
        object.__setattr__(self, "segments", segs)

        n = len(segs)
        s0 = np.zeros(n)
        x0 = np.zeros(n)
        y0 = np.zeros(n)
        th0 = np.zeros(n)
        x, y, th, s = self.start_pose.x, self.start_pose.y, self.start_pose.heading, 0.0
        for k, seg in enumerate(segs):
            s0[k], x0[k], y0[k], th0[k] = s, x, y, th
            x, y, th = _advance(x, y, th, seg.curvature, seg.length)
            s += seg.length
        object.__setattr__(self, "total_length", float(s))
        object.__setattr__(self, "_s0", s0)
        object.__setattr__(self, "_x0", x0)
        object.__setattr__(self, "_y0", y0)
        object.__setattr__(self, "_th0", th0)
        object.__setattr__(self, "_len", np.array([g.length for g in segs]))
        object.__setattr__(self, "_kap", np.array([g.curvature for g in segs]))

    # -- lookups -----------------------------------------------------------
    @property
    def max_abs_curvature(self) -> float:
        return float(np.max(np.abs(self._kap)))

    @property
    def segment_starts(self) -> np.ndarray:
        return self._s0.copy()

    def _check_range(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -_S_TOL) or np.any(s > self.total_length + _S_TOL) or np.any(~np.isfinite(s)):
            raise DomainError(
                f"station outside [0, {self.total_length:.6g}]: "
                f"min={np.min(s):.6g}, max={np.max(s):.6g}"
            )
        return s

    def segment_index(self, s):
        """Index of the segment containing s; joints belong to the left segment."""
        s = self._check_range(s)
        idx = np.searchsorted(self._s0, s, side="left") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def curvatures(self, s) -> np.ndarray:
        return self._kap[self.segment_index(s)]

    def poses(self, s):
        """Vectorized pose lookup. Returns (x, y, heading) arrays; heading unwrapped."""
        s = np.asarray(s, dtype=float)
        idx = self.segment_index(s)
        u = s - self._s0[idx]
        return _advance(self._x0[idx], self._y0[idx], self._th0[idx], self._kap[idx], u)

    # -- projection --------------------------------------------------------
    def project_points(self, px, py, s_hint=None, window: float = 30.0):
        """Vectorized projection of Cartesian points.

        Returns (s, e_y, path_heading). With ``s_hint`` only foot points within
        ``window`` of the hint are considered, which disambiguates paths that
        overlap themselves (e.g. turns beyond 360 degrees).
        """
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        shape = np.broadcast(px, py).shape
        px = np.broadcast_to(px, shape).ravel()
        py = np.broadcast_to(py, shape).ravel()
        hint = None
        if s_hint is not None:
            hint = np.broadcast_to(np.asarray(s_hint, dtype=float), shape).ravel()

        best_d = np.full(px.shape, np.inf)
        best_s = np.full(px.shape, np.nan)
        for k in range(len(self.segments)):
            for u in self._candidates(k, px, py):
                s_c = self._s0[k] + u
                fx, fy, _ = _advance(self._x0[k], self._y0[k], self._th0[k], self._kap[k], u)
                d = np.hypot(px - fx, py - fy)
                if hint is not None:
                    d = np.where(np.abs(s_c - hint) <= window, d, np.inf)
                # strict "<" keeps the earlier (smaller s) candidate on exact ties
                better = d < best_d
                best_d = np.where(better, d, best_d)
                best_s = np.where(better, s_c, best_s)

        if np.any(~np.isfinite(best_d)):
            raise ProjectionError("no foot point within the hint window")
        fx, fy, fth = self.poses(best_s)
        dx, dy = px - fx, py - fy
        along = dx * np.cos(fth) + dy * np.sin(fth)
        e_y = -dx * np.sin(fth) + dy * np.cos(fth)
        kap = self.curvatures(best_s)
        scale = np.maximum(1.0, np.abs(e_y))
        if np.any(np.abs(along) > _FOOT_TOL * scale):
            raise ProjectionError("point projects beyond the path ends")
        if np.any(e_y * kap >= 1.0):
            raise ProjectionError("point outside the unique-projection tube")
        return best_s.reshape(shape), e_y.reshape(shape), fth.reshape(shape)

    def _candidates(self, k, px, py):
        L = self._len[k]
        kap = self._kap[k]
        x0, y0, th0 = self._x0[k], self._y0[k], self._th0[k]
        if kap == 0.0:
            u = (px - x0) * math.cos(th0) + (py - y0) * math.sin(th0)
            return [np.clip(u, 0.0, L)]
        cx = x0 - math.sin(th0) / kap
        cy = y0 + math.cos(th0) / kap
        sg = math.copysign(1.0, kap)
        th = np.arctan2(sg * (px - cx), -sg * (py - cy))
        period = 2.0 * math.pi / abs(kap)
        u_base = np.mod(sg * (th - th0), 2.0 * math.pi) / abs(kap)
        out = [np.zeros_like(px)]
        for m in range(int(math.ceil(L / period)) + 1):
            out.append(np.clip(u_base + m * period, 0.0, L))
        out.append(np.full_like(px, L))
        return out


def _advance(x, y, th, kap, u):
    """Exact pose after travelling u along a constant-curvature segment."""
    kap = np.asarray(kap, dtype=float)
    u = np.asarray(u, dtype=float)
    straight = kap == 0.0
    safe = np.where(straight, 1.0, kap)
    th1 = th + kap * u
    xa = x + (np.sin(th1) - np.sin(th)) / safe
    ya = y - (np.cos(th1) - np.cos(th)) / safe
    xl = x + u * np.cos(th)
    yl = y + u * np.sin(th)
    xo = np.where(straight, xl, xa)
    yo = np.where(straight, yl, ya)
    if np.ndim(xo) == 0:
        return float(xo), float(yo), float(th1)
    return xo, yo, th1


def curvature_at(path: ReferencePath, s: float) -> float:
    """Curvature of the segment containing s (left segment at a joint)."""
    return float(path.curvatures(float(s)))


def pose_at(path: ReferencePath, s: float) -> CartesianPose:
    x, y, th = path.poses(float(s))
    return CartesianPose(float(x), float(y), float(th))


def normal_at(path: ReferencePath, s: float):
    _, _, th = path.poses(float(s))
    return -math.sin(th), math.cos(th)


def project(path: ReferencePath, p: CartesianPose, s_hint: Optional[float] = None) -> PathProjection:
    """Closest-point projection of a pose onto the path."""
    s, e_y, th = path.project_points(p.x, p.y, s_hint=s_hint)
    return PathProjection(float(s), float(e_y), wrap_angle(p.heading - float(th)))


def offset_point(path: ReferencePath, s, e_y):
    """Cartesian point at station s and lateral offset e_y (vectorized)."""
    x, y, th = path.poses(s)
    return x - np.asarray(e_y) * np.sin(th), y + np.asarray(e_y) * np.cos(th)


def make_path(segments: Sequence, start=(0.0, 0.0, 0.0), sample_step: float = 0.1) -> ReferencePath:
    return ReferencePath(tuple(Segment(float(a), float(b)) for a, b in segments),
                         CartesianPose(*map(float, start)), sample_step)


def mirrored(path: ReferencePath) -> ReferencePath:
    """Reflection of the path about its start tangent (curvatures negated)."""
    p0 = path.start_pose
    segs = tuple(Segment(g.length, -g.curvature) for g in path.segments)
    return ReferencePath(segs, p0, path.sample_step)
