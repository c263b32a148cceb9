"""Static SVG figures of a planned path."""
from __future__ import annotations

import io
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .corridor import TRAILER, BodyPointSet  # noqa: E402
from .metrics import swept_envelope  # noqa: E402
from .vehicle import chain_poses  # noqa: E402

_RC = {"svg.hashsalt": "ttplan", "svg.fonttype": "path", "path.simplify": False}
_META = {"Date": None, "Creator": None}


def _offset_curve(path, s, e):
    x, y, th = path.poses(s)
    return x - e * np.sin(th), y + e * np.cos(th)


def _rect(cx, cy, th, x0, x1, hw):
    c, s_ = np.cos(th), np.sin(th)
    xs = np.array([x0, x1, x1, x0, x0])
    ys = np.array([-hw, -hw, hw, hw, -hw])
    return cx + xs * c - ys * s_, cy + xs * s_ + ys * c


def atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _save(fig, path):
    buf = io.BytesIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata=_META)
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def path_figure(scenario, trajectory, n_outlines: int = 12):
    """Road edges, centerline, swept envelope, body outlines and obstacles."""
    path, params, cor = scenario.path, scenario.vehicle, scenario.corridor
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 6))
        s = np.linspace(0.0, path.total_length, max(50, int(path.total_length / 0.5)))
        lo, hi = cor.road_bounds(s)
        ax.plot(*path.poses(s)[:2], color="0.5", lw=0.8, ls="--", label="centerline")
        ax.plot(*_offset_curve(path, s, hi), color="k", lw=1.0)
        ax.plot(*_offset_curve(path, s, lo), color="k", lw=1.0, label="road edge")
        env = swept_envelope(path, params, trajectory, BodyPointSet.from_params(params))
        xl, yl = _offset_curve(path, env.s, env.hi)
        xr, yr = _offset_curve(path, env.s, env.lo)
        ax.fill(np.r_[xl, xr[::-1]], np.r_[yl, yr[::-1]], color="tab:blue", alpha=0.25, lw=0,
                label="swept envelope")
        for ob in cor.obstacles:
            ss = np.linspace(ob.s_start, ob.s_end, 20)
            x1, y1 = _offset_curve(path, ss, np.full_like(ss, ob.ey_min))
            x2, y2 = _offset_curve(path, ss, np.full_like(ss, ob.ey_max))
            ax.fill(np.r_[x1, x2[::-1]], np.r_[y1, y2[::-1]], color="tab:red", alpha=0.6, lw=0)
        idx = np.unique(np.linspace(0, len(trajectory.s) - 1, n_outlines).round().astype(int))
        xv, yv, thv, xt, yt, tht = chain_poses(params, path, trajectory.s[idx], trajectory.Z[idx])
        hw = params.W / 2
        for k in range(len(idx)):
            ax.plot(*_rect(xv[k], yv[k], thv[k], -params.L1r, params.L1 + params.L1f, hw),
                    color="tab:green", lw=0.7)
            ax.plot(*_rect(xt[k], yt[k], tht[k], -params.L2r, params.L2, hw),
                    color="tab:orange", lw=0.7)
        x, y, _ = path.poses(trajectory.s)
        ax.plot(*_offset_curve(path, trajectory.s, trajectory.Z[:, 0]), color="tab:green", lw=1.2,
                label="tractor axle")
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(loc="best", fontsize=7)
    return fig


def curvature_figure(scenario, trajectory):
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3))
        s = trajectory.s[:-1]
        ax.step(s, trajectory.kappa, where="post", label="planned")
        ax.plot(s, scenario.path.curvatures(s), color="0.5", ls="--", label="road")
        ax.set_xlabel("s [m]")
        ax.set_ylabel("curvature [1/m]")
        ax.legend(fontsize=7)
        fig.tight_layout()
    return fig


def emit_plots(scenario, result, out_dir) -> list:
    """Write plot.svg and curvature.svg into ``out_dir``; returns the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "plot.svg", out / "curvature.svg"]
    _save(path_figure(scenario, result.trajectory), files[0])
    _save(curvature_figure(scenario, result.trajectory), files[1])
    return files
