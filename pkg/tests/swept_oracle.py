"""Swept-area reference built from exact rectangle unions.

Rectangle footprints are merged with shapely, in road coordinates (s, e_y),
and the merged region is clipped at the centerline to get the area on either
side.
"""
import numpy as np
import shapely
from shapely.geometry import Polygon, box

from ttplan.vehicle import chain_poses, rollout


def _outline(x0, x1, hw, h):
    """Rectangle boundary in body coordinates, sampled every ``h`` or finer."""
    nx = max(2, int(np.ceil((x1 - x0) / h)) + 1)
    ny = max(2, int(np.ceil(2 * hw / h)) + 1)
    xs, ys = np.linspace(x0, x1, nx), np.linspace(-hw, hw, ny)
    return np.vstack([np.c_[xs[:-1], np.full(nx - 1, -hw)], np.c_[np.full(ny - 1, x1), ys[:-1]],
                      np.c_[xs[:0:-1], np.full(nx - 1, hw)], np.c_[np.full(ny - 1, x0), ys[:0:-1]]])


def swept_region(path, params, trajectory, substeps=10, h=0.25):
    """Union of tractor and trailer footprints, in road coordinates.

    Each step is re-integrated from its station with ``substeps`` finer steps
    so neighbouring footprints leave negligible gaps; every footprint outline
    is mapped to (s, e_y) before merging.
    """
    ds = float(trajectory.s[1] - trajectory.s[0])
    h_s = ds / substeps
    # restart from every station so the fine integration cannot drift away
    parts = [rollout(params, path, s0, z0, np.full(substeps, k0), h_s)[:-1]
             for s0, z0, k0 in zip(trajectory.s[:-1], trajectory.Z[:-1], trajectory.kappa)]
    Z = np.vstack(parts + [trajectory.Z[-1:]])
    s = np.r_[(trajectory.s[:-1, None] + h_s * np.arange(substeps)).ravel(), trajectory.s[-1]]
    xv, yv, thv, xt, yt, tht = chain_poses(params, path, s, Z)
    hw = params.W / 2
    polys = []
    for x0, x1, X, Y, T in ((-params.L1r, params.L1 + params.L1f, xv, yv, thv),
                            (-params.L2r, params.L2, xt, yt, tht)):
        loc = _outline(x0, x1, hw, h)
        c, sn = np.cos(T)[:, None], np.sin(T)[:, None]
        px = X[:, None] + c * loc[:, 0] - sn * loc[:, 1]
        py = Y[:, None] + sn * loc[:, 0] + c * loc[:, 1]
        ps, pe, _ = path.project_points(px, py, s_hint=s[:, None])
        polys += [Polygon(np.c_[ps[i], pe[i]]) for i in range(len(s))]
    return shapely.union_all(polys)


def area_split(region):
    """(left area above e_y = 0, right area below it) of a road-frame region."""
    x0, y0, x1, y1 = region.bounds
    left = region.intersection(box(x0 - 1, 0.0, x1 + 1, max(y1, 0.0) + 1)).area
    right = region.intersection(box(x0 - 1, min(y0, 0.0) - 1, x1 + 1, 0.0)).area
    return left, right
