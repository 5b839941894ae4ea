"""Hot numeric kernels.

Two implementations are kept for every kernel: a loop-style one that numba
compiles with @njit, and a vectorized pure-numpy fallback. Set
``SHAIL_DISABLE_NUMBA=1`` to force the numpy path (useful on machines where
numba is unavailable or compilation overhead is unwanted).

Both paths use the same arithmetic (no fastmath) so results are identical.
"""

import math
import os

import numpy as np


def _rect_overlap(x1, y1, c1, s1, l1, w1, x2, y2, c2, s2, l2, w2):
    """Separating-axis test for two oriented rectangles.

    (x, y) center, (c, s) = (cos, sin) of the heading, l along heading,
    w across. Shared boundaries count as overlap.
    """
    dx = x2 - x1
    dy = y2 - y1
    # the four candidate axes: both rectangles' local x and y directions
    for ax, ay in ((c1, s1), (-s1, c1), (c2, s2), (-s2, c2)):
        e1 = 0.5 * l1 * abs(ax * c1 + ay * s1) + 0.5 * w1 * abs(-ax * s1 + ay * c1)
        e2 = 0.5 * l2 * abs(ax * c2 + ay * s2) + 0.5 * w2 * abs(-ax * s2 + ay * c2)
        if abs(ax * dx + ay * dy) > e1 + e2:
            return False
    return True


def _collision_scan_loop(ex, ey, ec, es, el, ew, ox, oy, oc, osn, ol, ow, present):
    """Any ego-vs-obstacle overlap over a rollout.

    ego arrays are per-frame; obstacle arrays are (frames, k); present masks
    obstacles in or out per frame. Returns the first colliding frame or -1.
    """
    n_frames = ex.shape[0]
    n_obs = ox.shape[1]
    for t in range(n_frames):
        for k in range(n_obs):
            if not present[t, k]:
                continue
            if _rect_overlap(
                ex[t], ey[t], ec[t], es[t], el, ew,
                ox[t, k], oy[t, k], oc[t, k], osn[t, k], ol[k], ow[k],
            ):
                return t
    return -1


def _collision_scan_np(ex, ey, ec, es, el, ew, ox, oy, oc, osn, ol, ow, present):
    n_frames, n_obs = ox.shape
    if n_frames == 0 or n_obs == 0:
        return -1
    dx = ox - ex[:, None]
    dy = oy - ey[:, None]
    ec2 = np.broadcast_to(ec[:, None], ox.shape)
    es2 = np.broadcast_to(es[:, None], ox.shape)
    ol2 = np.broadcast_to(ol[None, :], ox.shape)
    ow2 = np.broadcast_to(ow[None, :], ox.shape)
    overlap = np.ones(ox.shape, dtype=bool)
    for ax, ay, bx, by in (
        (ec2, es2, oc, osn),
        (-es2, ec2, oc, osn),
        (oc, osn, ec2, es2),
        (-osn, oc, ec2, es2),
    ):
        e1 = 0.5 * el * np.abs(ax * ec2 + ay * es2) + 0.5 * ew * np.abs(-ax * es2 + ay * ec2)
        e2 = 0.5 * ol2 * np.abs(ax * oc + ay * osn) + 0.5 * ow2 * np.abs(-ax * osn + ay * oc)
        overlap &= np.abs(ax * dx + ay * dy) <= e1 + e2
    overlap &= present
    hits = np.nonzero(overlap.any(axis=1))[0]
    return int(hits[0]) if hits.size else -1


def _project_polyline_loop(xs, ys, cum, px, py):
    """Closest point on a polyline: returns (arclength s, distance)."""
    best_d2 = math.inf
    best_s = 0.0
    for i in range(xs.shape[0] - 1):
        ax = xs[i]
        ay = ys[i]
        bx = xs[i + 1]
        by = ys[i + 1]
        ux = bx - ax
        uy = by - ay
        seg2 = ux * ux + uy * uy
        t = ((px - ax) * ux + (py - ay) * uy) / seg2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        qx = ax + t * ux
        qy = ay + t * uy
        d2 = (px - qx) ** 2 + (py - qy) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best_s = cum[i] + t * math.sqrt(seg2)
    return best_s, math.sqrt(best_d2)


def _project_polyline_np(xs, ys, cum, px, py):
    ax, ay = xs[:-1], ys[:-1]
    ux, uy = np.diff(xs), np.diff(ys)
    seg2 = ux * ux + uy * uy
    t = np.clip(((px - ax) * ux + (py - ay) * uy) / seg2, 0.0, 1.0)
    qx = ax + t * ux
    qy = ay + t * uy
    d2 = (px - qx) ** 2 + (py - qy) ** 2
    s_cand = cum[:-1] + t * np.sqrt(seg2)
    d2min = d2.min()
    # break exact ties toward smaller s
    best_s = s_cand[d2 <= d2min].min()
    return float(best_s), float(math.sqrt(d2min))


NUMBA_ENABLED = os.environ.get("SHAIL_DISABLE_NUMBA", "0") != "1"

if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    rect_overlap = njit(cache=True)(_rect_overlap)
    _rect_overlap = rect_overlap  # so the jitted scan resolves to the jitted test
    collision_scan = njit(cache=True)(_collision_scan_loop)
    project_polyline = njit(cache=True)(_project_polyline_loop)
else:
    rect_overlap = _rect_overlap
    collision_scan = _collision_scan_np
    project_polyline = _project_polyline_np
