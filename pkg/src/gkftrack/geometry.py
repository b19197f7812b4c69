"""Rotated 3D box geometry: footprints, GIoU (3D and BEV) and greedy NMS.

Boxes use the (w, l, h) size convention with the length axis aligned with the
heading: at yaw 0 the box spans ``+-l/2`` along x and ``+-w/2`` along y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to [-pi, pi)."""
    wrapped = np.mod(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    # fmod rounding can land exactly on +pi
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class Box3D:
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # (w, l, h)
    yaw: float

    def __post_init__(self):
        center = tuple(float(c) for c in self.center)
        size = tuple(float(s) for s in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("center and size must be 3-vectors")
        if not all(s > 0 for s in size):
            raise ValueError(f"box size must be positive, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", float(wrap_angle(float(self.yaw))))

    @property
    def volume(self) -> float:
        w, l, h = self.size
        return w * l * h

    @property
    def z_range(self) -> tuple[float, float]:
        half = 0.5 * self.size[2]
        return self.center[2] - half, self.center[2] + half

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "Box3D":
        """Build from an observation-layout vector (x, y, z, w, l, h, yaw)."""
        return cls((v[0], v[1], v[2]), (v[3], v[4], v[5]), v[6])

    def to_vector(self) -> np.ndarray:
        return np.array([*self.center, *self.size, self.yaw])


def bev_footprint(box: Box3D) -> np.ndarray:
    """Ground-plane rectangle of ``box`` as a (4, 2) array in CCW order."""
    w, l, _ = box.size
    hl, hw = 0.5 * l, 0.5 * w
    local = np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]])
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array(box.center[:2])


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for CCW vertex order."""
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def clip_convex(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman clipping of a polygon against a convex CCW polygon."""
    output = [tuple(p) for p in subject]
    clip = [tuple(p) for p in clip]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a, b = clip[i], clip[(i + 1) % n]
        inputs, output = output, []
        prev = inputs[-1]
        prev_c = _cross(a, b, prev)
        for cur in inputs:
            cur_c = _cross(a, b, cur)
            if (cur_c >= 0.0) != (prev_c >= 0.0):
                # edge crosses the clip line; interpolate on the signed distances
                t = prev_c / (prev_c - cur_c)
                output.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            cur_in = cur_c >= 0.0
            if cur_in:
                output.append(cur)
            prev, prev_c = cur, cur_c
    return output


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _bev_terms(a: Box3D, b: Box3D):
    fa, fb = bev_footprint(a), bev_footprint(b)
    inter_poly = clip_convex(fa, fb)
    inter = max(polygon_area(inter_poly), 0.0) if len(inter_poly) >= 3 else 0.0
    hull = polygon_area(convex_hull(np.vstack([fa, fb])))
    area_a = a.size[0] * a.size[1]
    area_b = b.size[0] * b.size[1]
    return inter, area_a, area_b, hull


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    inter_poly = clip_convex(bev_footprint(a), bev_footprint(b))
    return max(polygon_area(inter_poly), 0.0) if len(inter_poly) >= 3 else 0.0


def intersection_volume(a: Box3D, b: Box3D) -> float:
    za, zb = a.z_range, b.z_range
    dz = min(za[1], zb[1]) - max(za[0], zb[0])
    if dz <= 0.0:
        return 0.0
    return bev_intersection_area(a, b) * dz


def iou3d(a: Box3D, b: Box3D) -> float:
    inter = intersection_volume(a, b)
    return inter / (a.volume + b.volume - inter)


def bev_iou(a: Box3D, b: Box3D) -> float:
    inter = bev_intersection_area(a, b)
    area_a = a.size[0] * a.size[1]
    area_b = b.size[0] * b.size[1]
    return inter / (area_a + area_b - inter)


def giou3d(a: Box3D, b: Box3D) -> float:
    """Generalized IoU of two rotated 3D boxes.

    The enclosing volume is the convex hull of both footprints extruded over
    the combined vertical span, so the value is exactly 1 only for identical
    boxes and tends to -1 for distant ones.
    """
    inter_bev, area_a, area_b, hull_bev = _bev_terms(a, b)
    za, zb = a.z_range, b.z_range
    dz = max(0.0, min(za[1], zb[1]) - max(za[0], zb[0]))
    inter = inter_bev * dz
    union = a.volume + b.volume - inter
    hull = hull_bev * (max(za[1], zb[1]) - min(za[0], zb[0]))
    return inter / union + union / hull - 1.0


def giou_bev(a: Box3D, b: Box3D) -> float:
    inter, area_a, area_b, hull = _bev_terms(a, b)
    union = area_a + area_b - inter
    return inter / union + union / hull - 1.0


def nms(boxes: Sequence[tuple[Box3D, float]], overlap_threshold: float = 0.08) -> list[int]:
    """Greedy BEV-IoU non-maximum suppression.

    Returns the retained indices in descending score order. Equal scores keep
    input order, so the lower index survives.
    """
    if not 0.0 < overlap_threshold <= 1.0:
        raise ValueError("overlap_threshold must lie in (0, 1]")
    order = sorted(range(len(boxes)), key=lambda i: -boxes[i][1])
    keep: list[int] = []
    for i in order:
        if all(bev_iou(boxes[i][0], boxes[k][0]) <= overlap_threshold for k in keep):
            keep.append(i)
    return keep
