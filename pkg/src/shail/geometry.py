"""Paths, poses, oriented boxes, and the collision / projection primitives."""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

EPS_DUP = 1e-6  # consecutive waypoints closer than this are merged


class DegeneratePath(ValueError):
    """Fewer than 2 distinct waypoints."""


def wrap_angle(a):
    """Normalize an angle to (-pi, pi]."""
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w == -math.pi:
        w = math.pi
    return w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self):
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class OrientedBox:
    center: Pose
    length: float
    width: float

    def __post_init__(self):
        if not (self.length >= self.width > 0.0):
            raise ValueError("need length >= width > 0")

    def corners(self):
        c = math.cos(self.center.heading)
        s = math.sin(self.center.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.center.x, self.center.y])


class Path:
    """Arc-length parameterized polyline. Immutable after construction."""

    __slots__ = ("waypoints", "cumulative_arclength", "_headings")

    def __init__(self, waypoints, cumulative_arclength, headings):
        self.waypoints = waypoints
        self.cumulative_arclength = cumulative_arclength
        self._headings = headings  # per-segment direction

    @property
    def total_length(self):
        return float(self.cumulative_arclength[-1])

    def __len__(self):
        return self.waypoints.shape[0]


def build_path(points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] > 0:
        keep = [0]
        for i in range(1, pts.shape[0]):
            if np.hypot(*(pts[i] - pts[keep[-1]])) >= EPS_DUP:
                keep.append(i)
        pts = pts[keep]
    if pts.shape[0] < 2:
        raise DegeneratePath("need at least 2 distinct points")
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    headings = np.arctan2(seg[:, 1], seg[:, 0])
    pts.setflags(write=False)
    cum.setflags(write=False)
    headings.setflags(write=False)
    return Path(pts, cum, headings)


def _segment_index(path, s):
    i = int(np.searchsorted(path.cumulative_arclength, s, side="right")) - 1
    return min(max(i, 0), len(path) - 2)


def pose_at(path, s):
    """Pose at arclength s, clamped to [0, total]. Heading = segment tangent.

    At a waypoint the following segment's direction is used.
    """
    s = min(max(float(s), 0.0), path.total_length)
    i = _segment_index(path, s)
    cum = path.cumulative_arclength
    seg_len = cum[i + 1] - cum[i]
    t = (s - cum[i]) / seg_len
    p = path.waypoints[i] + t * (path.waypoints[i + 1] - path.waypoints[i])
    return Pose(float(p[0]), float(p[1]), float(path._headings[i]))


def heading_at(path, s):
    s = min(max(float(s), 0.0), path.total_length)
    return float(path._headings[_segment_index(path, s)])


def project_to_path(path, p):
    """(s, unsigned lateral distance) of the closest polyline point to p."""
    p = np.asarray(p, dtype=float)
    s, d = kernels.project_polyline(
        path.waypoints[:, 0], path.waypoints[:, 1],
        path.cumulative_arclength, float(p[0]), float(p[1]),
    )
    return float(s), float(d)


def boxes_intersect(a, b):
    """True iff the two rectangles overlap; touching boundaries count."""
    return bool(kernels.rect_overlap(
        a.center.x, a.center.y, math.cos(a.center.heading), math.sin(a.center.heading),
        a.length, a.width,
        b.center.x, b.center.y, math.cos(b.center.heading), math.sin(b.center.heading),
        b.length, b.width,
    ))
