"""Free lateral space along the road and sampled points on both vehicle bodies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, InfeasibleCorridorError
from .geometry import ReferencePath
from .vehicle import DEFAULT_DELTA, VehicleParams, chain_poses

LEFT = "left"
RIGHT = "right"


@dataclass(frozen=True)
class Obstacle:
    """Static obstacle as a blocked box in road coordinates.

    ``pass_side`` says on which side of the obstacle the vehicle passes.
    """

    s_start: float
    s_end: float
    ey_min: float
    ey_max: float
    pass_side: str

    def __post_init__(self):
        if not self.s_start < self.s_end:
            raise DomainError("obstacle needs s_start < s_end")
        if not self.ey_min < self.ey_max:
            raise DomainError("obstacle needs ey_min < ey_max")
        if self.pass_side not in (LEFT, RIGHT):
            raise DomainError(f"pass_side must be 'left' or 'right', got {self.pass_side!r}")

    def mirrored(self) -> "Obstacle":
        return Obstacle(self.s_start, self.s_end, -self.ey_max, -self.ey_min,
                        RIGHT if self.pass_side == LEFT else LEFT)


@dataclass(frozen=True)
class Corridor:
    """Road half-widths per path segment plus static obstacles."""

    path: ReferencePath
    left_widths: tuple
    right_widths: tuple
    obstacles: tuple = ()
    margin: float = 0.0

    def __post_init__(self):
        n = len(self.path.segments)
        lw = tuple(float(v) for v in self.left_widths)
        rw = tuple(float(v) for v in self.right_widths)
        if len(lw) == 1:
            lw = lw * n
        if len(rw) == 1:
            rw = rw * n
        if len(lw) != n or len(rw) != n:
            raise DomainError("need one road width per path segment")
        for a, b in zip(lw, rw):
            if not (math.isfinite(a) and math.isfinite(b)) or not -b < a:
                raise DomainError("road widths must be finite and leave a nonempty road")
        object.__setattr__(self, "left_widths", lw)
        object.__setattr__(self, "right_widths", rw)
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def road_bounds(self, s):
        idx = self.path.segment_index(s)
        return -np.asarray(self.right_widths)[idx], np.asarray(self.left_widths)[idx]

    def left_bound(self, s):
        return self.road_bounds(s)[1]

    def right_bound(self, s):
        return self.road_bounds(s)[0]


def free_intervals(corridor: Corridor, s, obstacles: Optional[Sequence[Obstacle]] = None, check: bool = True,
                   s_pad: float = 0.0):
    """Vectorized free lateral interval (lo, hi) at stations s.

    ``s_pad`` lengthens every obstacle by that much at both ends.
    """
    if obstacles is None:
        obstacles = corridor.obstacles
    s = np.asarray(s, dtype=float)
    lo, hi = corridor.road_bounds(s)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for ob in obstacles:
        inside = (s >= ob.s_start - s_pad) & (s <= ob.s_end + s_pad)
        if ob.pass_side == LEFT:
            lo = np.where(inside, np.maximum(lo, ob.ey_max), lo)
        else:
            hi = np.where(inside, np.minimum(hi, ob.ey_min), hi)
    if check and np.any(lo >= hi):
        bad = np.atleast_1d(s)[np.atleast_1d(lo >= hi)]
        raise InfeasibleCorridorError(f"empty free interval at s={bad[0]:.3f}")
    return lo, hi


def free_interval(corridor: Corridor, obstacles, s: float):
    lo, hi = free_intervals(corridor, float(s), obstacles)
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# body points
# ---------------------------------------------------------------------------

TRACTOR = 0
TRAILER = 1


@dataclass(frozen=True)
class BodyPointSet:
    """Points sampled along both long sides of the tractor and trailer.

    Arrays are flat and aligned: ``body`` (0 tractor / 1 trailer), ``x``
    (longitudinal offset in that body's axle frame) and ``side`` (+1 left,
    -1 right).
    """

    body: np.ndarray
    x: np.ndarray
    side: np.ndarray
    half_width: float
    spacing: float = field(default=0.5)

    @classmethod
    def from_params(cls, params: VehicleParams, spacing: float = 0.5) -> "BodyPointSet":
        if not spacing > 0:
            raise DomainError("spacing must be > 0")
        body, xs, side = [], [], []
        for b, lo, hi in ((TRACTOR, -params.L1r, params.L1 + params.L1f),
                          (TRAILER, -params.L2r, params.L2)):
            n = max(1, int(math.ceil((hi - lo) / spacing - 1e-12)))
            x = np.linspace(lo, hi, n + 1)
            for sd in (1.0, -1.0):
                body.append(np.full(x.shape, b))
                xs.append(x)
                side.append(np.full(x.shape, sd))
        return cls(np.concatenate(body).astype(int), np.concatenate(xs),
                   np.concatenate(side), params.W / 2.0, spacing)

    def __len__(self):
        return len(self.x)

    @property
    def left(self) -> np.ndarray:
        return self.side > 0

    def mirrored(self) -> "BodyPointSet":
        return self


def body_points_cartesian(params: VehicleParams, path: ReferencePath, pts: BodyPointSet, s, Z):
    """Cartesian coordinates of every body point; shapes (n, P)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    xv, yv, thv, xt, yt, tht = chain_poses(params, path, s, Z)
    is_tr = pts.body == TRAILER
    bx = np.where(is_tr, xt[:, None], xv[:, None])
    by = np.where(is_tr, yt[:, None], yv[:, None])
    bth = np.where(is_tr, tht[:, None], thv[:, None])
    lat = pts.side * pts.half_width
    px = bx + pts.x * np.cos(bth) - lat * np.sin(bth)
    py = by + pts.x * np.sin(bth) + lat * np.cos(bth)
    return px, py


def _hints(params, pts, s):
    off = np.where(pts.body == TRAILER, params.M1 - params.L2 + pts.x, pts.x)
    return s[:, None] + off


def body_offsets_batch(params: VehicleParams, path: ReferencePath, pts: BodyPointSet, s, Z):
    """Road-frame (station, lateral offset) of all body points; shapes (n, P)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    px, py = body_points_cartesian(params, path, pts, s, Z)
    st, ey, _ = path.project_points(px, py, s_hint=_hints(params, pts, s))
    return st, ey


def body_offsets(path: ReferencePath, params: VehicleParams, pts: BodyPointSet, s: float, z):
    """List of (station, lateral offset) for each body point at one state."""
    z = np.asarray(z.as_array() if hasattr(z, "as_array") else z, dtype=float)
    st, ey = body_offsets_batch(params, path, pts, [s], z[None, :])
    return list(zip(st[0].tolist(), ey[0].tolist()))


@dataclass(frozen=True)
class LinearBodyOffset:
    station: float
    base: float
    grad: np.ndarray
    z_ref: np.ndarray

    def evaluate(self, z) -> float:
        return self.base + float(self.grad @ (np.asarray(z, dtype=float) - self.z_ref))


def linearize_body_offsets_batch(params, path, pts, s, Z, delta=DEFAULT_DELTA):
    """Stations, base offsets (n, P) and central-difference gradients (n, P, 3)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    st, base = body_offsets_batch(params, path, pts, s, Z)
    grad = np.empty(base.shape + (3,))
    for j in range(3):
        Zp = Z.copy()
        Zm = Z.copy()
        Zp[:, j] += delta[j]
        Zm[:, j] -= delta[j]
        _, ep = body_offsets_batch(params, path, pts, s, Zp)
        _, em = body_offsets_batch(params, path, pts, s, Zm)
        grad[..., j] = (ep - em) / (2 * delta[j])
    return st, base, grad


def linearize_body_offsets(path, params, pts, s_ref, z_ref, delta=DEFAULT_DELTA):
    z = np.asarray(z_ref.as_array() if hasattr(z_ref, "as_array") else z_ref, dtype=float)
    st, base, grad = linearize_body_offsets_batch(params, path, pts, [s_ref], z[None, :], delta)
    return [LinearBodyOffset(float(st[0, j]), float(base[0, j]), grad[0, j].copy(), z.copy())
            for j in range(len(pts))]


@dataclass(frozen=True)
class CollisionRows:
    """One-sided linear rows ``coef . z_i (+/-) slack  <op>  bound`` per body point.

    Left-side points get an upper bound (road edge / obstacle on the left),
    right-side points a lower bound.
    """

    coef: np.ndarray  # (n, P, 3)
    upper: np.ndarray  # (n, P): bound for left points, +inf elsewhere
    lower: np.ndarray  # (n, P): bound for right points, -inf elsewhere


def collision_rows(corridor: Corridor, pts: BodyPointSet, stations, base, grad, Zref,
                   obstacles=None, s_pad: float = 0.0) -> CollisionRows:
    """Linearized corridor constraints for every station and body point.

    ``stations``/``base``/``grad`` come from linearize_body_offsets_batch at
    reference states Zref. Bounds are looked up at the reference stations;
    a positive ``s_pad`` makes rows near an obstacle's ends conservative, so
    a point sliding along s cannot step into an obstacle the rows ignored.
    """
    lo, hi = free_intervals(corridor, stations, obstacles, s_pad=s_pad)
    lo = lo + corridor.margin
    hi = hi - corridor.margin
    if np.any(lo >= hi):
        raise InfeasibleCorridorError("safety margin leaves no free space")
    const = base - np.einsum("npk,nk->np", grad, np.atleast_2d(Zref))
    left = pts.left[None, :]
    upper = np.where(left, hi - const, np.inf)
    lower = np.where(~left, lo - const, -np.inf)
    return CollisionRows(grad, upper, lower)


def corridor_violation(corridor: Corridor, pts: BodyPointSet, stations, offsets, obstacles=None):
    """Per-point violation (>= 0) of the nonlinear offsets against the free interval."""
    lo, hi = free_intervals(corridor, stations, obstacles, check=False)
    left = pts.left[None, :]
    v = np.where(left, offsets - (hi - corridor.margin), (lo + corridor.margin) - offsets)
    return np.maximum(v, 0.0)


def mirrored_corridor(corridor: Corridor, path: ReferencePath) -> Corridor:
    return Corridor(path, corridor.right_widths, corridor.left_widths,
                    tuple(o.mirrored() for o in corridor.obstacles), corridor.margin)
