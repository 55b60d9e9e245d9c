"""Upright 3D boxes, their corners and BEV edges, and the sensor-nearest edge."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TIE_TOL = 1e-9


def wrap_angle(theta: float) -> float:
    """Map an angle into [-pi, pi)."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t < 0:
        t += 2.0 * math.pi
    t -= math.pi
    return -math.pi if t >= math.pi else t


@dataclass(frozen=True)
class Box3D:
    """Center (x, y, z), dims (l along heading, w, h) in meters, yaw about +z."""

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"box dimensions must be positive, got {(self.l, self.w, self.h)}")
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def bev(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.l, self.w, self.yaw)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.l, self.w, self.h, self.yaw])

    @classmethod
    def from_array(cls, a) -> "Box3D":
        return cls(*(float(v) for v in a))


def corner_points(box: Box3D) -> np.ndarray:
    """(8, 3) corners: bottom face counter-clockwise from front-left, then the top face."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw, hh = 0.5 * box.l, 0.5 * box.w, 0.5 * box.h
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    xy = local @ rot.T + np.array([box.x, box.y])
    bottom = np.column_stack([xy, np.full(4, box.z - hh)])
    top = np.column_stack([xy, np.full(4, box.z + hh)])
    return np.vstack([bottom, top])


def bev_edges(box: Box3D) -> np.ndarray:
    """(4, 2, 2) base edges (p1,p2), (p2,p3), (p3,p4), (p4,p1) in BEV."""
    p = corner_points(box)[:4, :2]
    return np.stack([np.stack([p[i], p[(i + 1) % 4]]) for i in range(4)])


def point_segment_distance(p, a, b) -> float:
    p, a, b = (np.asarray(v, dtype=np.float64) for v in (p, a, b))
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else min(max(float((p - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def point_in_footprint(box: Box3D, p) -> bool:
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx, dy = p[0] - box.x, p[1] - box.y
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return abs(u) <= 0.5 * box.l and abs(v) <= 0.5 * box.w


@dataclass(frozen=True)
class NearestEdge:
    index: int
    edge: np.ndarray  # (2, 2)
    anchor: np.ndarray  # (2,)
    distance: float
    sensor_inside: bool


def nearest_edge(box: Box3D, sensor=(0.0, 0.0)) -> NearestEdge:
    """Base edge closest to the sensor and the anchor point on it.

    The anchor is the edge endpoint nearer the sensor, or the edge midpoint
    when both endpoints are equidistant within ``TIE_TOL``.
    """
    edges = bev_edges(box)
    d = [point_segment_distance(sensor, e[0], e[1]) for e in edges]
    k = int(np.argmin(d))
    e = edges[k]
    d0 = float(np.hypot(*(e[0] - sensor)))
    d1 = float(np.hypot(*(e[1] - sensor)))
    if abs(d0 - d1) <= TIE_TOL:
        anchor = 0.5 * (e[0] + e[1])
    else:
        anchor = e[0].copy() if d0 < d1 else e[1].copy()
    return NearestEdge(k, e, anchor, d[k], point_in_footprint(box, sensor))


def anchor_point(box: Box3D, mode: str = "edge", sensor=(0.0, 0.0)) -> np.ndarray:
    if mode == "edge":
        return nearest_edge(box, sensor).anchor
    if mode == "center":
        return np.array([box.x, box.y])
    raise ValueError(f"unknown anchor mode {mode!r}")
