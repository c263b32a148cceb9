"""Offset and swept-area metrics of a planned trajectory."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .corridor import BodyPointSet, body_offsets_batch
from .geometry import ReferencePath
from .vehicle import VehicleParams


@dataclass(frozen=True)
class Metrics:
    max_left: float
    max_right: float
    area_diff: float
    cpu_time: float
    area_left: float = 0.0
    area_right: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_right_magnitude"] = abs(self.max_right)
        return d


@dataclass(frozen=True)
class Envelope:
    """Lowest and highest body offset swept over each grid station."""

    s: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def swept_envelope(path: ReferencePath, params: VehicleParams, trajectory, pts: BodyPointSet,
                   step: float = None) -> Envelope:
    """Interpolate every body point's (station, offset) track onto a common grid."""
    st, off = body_offsets_batch(params, path, pts, trajectory.s, trajectory.Z)
    if step is None:
        step = float(np.min(np.diff(trajectory.s))) if len(trajectory.s) > 1 else 0.1
    s0, s1 = float(st.min()), float(st.max())
    n = max(2, int(np.ceil((s1 - s0) / step)) + 1)
    g = np.linspace(s0, s1, n)
    lo = np.full(n, np.inf)
    hi = np.full(n, -np.inf)
    for j in range(st.shape[1]):
        sj, oj = st[:, j], off[:, j]
        order = np.argsort(sj, kind="stable")
        sj, oj = sj[order], oj[order]
        inside = (g >= sj[0]) & (g <= sj[-1])
        v = np.interp(g[inside], sj, oj)
        lo[inside] = np.minimum(lo[inside], v)
        hi[inside] = np.maximum(hi[inside], v)
        # keep the raw samples so extremes are never lost between grid points
        k = np.clip(np.searchsorted(g, sj), 0, n - 1)
        np.minimum.at(lo, k, oj)
        np.maximum.at(hi, k, oj)
    covered = np.isfinite(lo)
    return Envelope(g[covered], lo[covered], hi[covered])


def _area(path: ReferencePath, s, e, frame: str):
    """Area between the centerline and offset e(s) >= 0 (left) or <= 0 (right).

    ``frame="road"`` integrates |e| ds; ``frame="plane"`` applies the
    curvilinear area element (1 - kappa e_y).
    """
    if frame == "road":
        f = np.abs(e)
    elif frame == "plane":
        kap = path.curvatures(np.clip(s, 0.0, path.total_length))
        f = np.abs(e - 0.5 * kap * e * e)
    else:
        raise ValueError(f"unknown frame {frame!r}")
    return float(np.trapezoid(f, s))


def compute_metrics(path: ReferencePath, params: VehicleParams, trajectory, pts: BodyPointSet = None,
                    wall_time: float = 0.0, step: float = None, frame: str = "road") -> Metrics:
    """Maximum signed offsets and the left-minus-right area beyond the centerline.

    The left area integrates the positive part of the upper envelope, the right
    area the negative part of the lower envelope, so a centered drive scores zero.
    """
    if pts is None:
        pts = BodyPointSet.from_params(params)
    env = swept_envelope(path, params, trajectory, pts, step)
    a_left = _area(path, env.s, np.maximum(env.hi, 0.0), frame)
    a_right = _area(path, env.s, np.minimum(env.lo, 0.0), frame)
    return Metrics(float(env.hi.max()), float(env.lo.min()), a_left - a_right, float(wall_time),
                   a_left, a_right)
