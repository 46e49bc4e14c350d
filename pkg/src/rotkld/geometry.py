"""Rotated boxes, their polygon form, and exact rotated IoU by convex clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SIZE_EPS = 1e-12
CLIP_EPS = 1e-12


class SizeDegenerate(ValueError):
    """Raised when a box or covariance is too thin to carry a Gaussian."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi/2, pi/2] (period pi)."""
    t = math.fmod(theta, math.pi)
    if t <= -math.pi / 2:
        t += math.pi
    elif t > math.pi / 2:
        t -= math.pi
    return t


@dataclass(frozen=True)
class RotatedBox:
    """A rectangle (x, y, w, h, theta); theta in radians, counter-clockwise.

    The width axis points along (cos theta, sin theta). Theta is normalized to
    (-pi/2, pi/2] on construction.
    """

    x: float
    y: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box parameters: {vals}")
        if self.w <= SIZE_EPS or self.h <= SIZE_EPS:
            raise SizeDegenerate(f"box size must exceed {SIZE_EPS}: w={self.w}, h={self.h}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @classmethod
    def from_degrees(cls, x, y, w, h, theta_deg):
        return cls(x, y, w, h, math.radians(theta_deg))

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h, self.theta)

    def scaled(self, k: float) -> "RotatedBox":
        """Scale center and size by k about the origin."""
        return RotatedBox(k * self.x, k * self.y, k * self.w, k * self.h, self.theta)

    def swapped(self) -> "RotatedBox":
        """The same region written as (x, y, h, w, theta + pi/2)."""
        return RotatedBox(self.x, self.y, self.h, self.w, self.theta + math.pi / 2)


@dataclass(frozen=True)
class ConvexQuad:
    """Four CCW vertices, shape (4, 2)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (4, 2):
            raise ValueError(f"expected (4, 2) vertices, got {v.shape}")
        if _signed_area(v) <= 0:
            raise ValueError("quad vertices must be counter-clockwise with positive area")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)


def _corners(box: RotatedBox) -> list:
    c, s = math.cos(box.theta), math.sin(box.theta)
    hw, hh = box.w / 2, box.h / 2
    out = []
    for lx, ly in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        out.append((box.x + c * lx - s * ly, box.y + s * lx + c * ly))
    return out


def box_to_quad(box: RotatedBox) -> ConvexQuad:
    return ConvexQuad(np.array(_corners(box)))


def _signed_area(pts) -> float:
    n = len(pts)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * float(acc)


def polygon_area(pts) -> float:
    """Shoelace area of a simple polygon, any orientation."""
    return abs(_signed_area(pts))


def quad_area(q: ConvexQuad) -> float:
    return polygon_area(q.vertices)


def _clip(subject: list, a, b) -> list:
    # keep the part of `subject` left of the directed edge a -> b
    ex, ey = b[0] - a[0], b[1] - a[1]
    elen = math.hypot(ex, ey)

    def side(p):
        # signed distance, positive on the inner (left) side
        return (ex * (p[1] - a[1]) - ey * (p[0] - a[0])) / elen

    out = []
    n = len(subject)
    for i in range(n):
        cur, nxt = subject[i], subject[(i + 1) % n]
        dc, dn = side(cur), side(nxt)
        cur_in, nxt_in = dc >= -CLIP_EPS, dn >= -CLIP_EPS
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            t = dc / (dc - dn)
            out.append((cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])))
    return out


def clip_convex(subject, clip) -> list:
    """Sutherland-Hodgman: intersection of polygon `subject` with convex CCW `clip`."""
    poly = [(float(p[0]), float(p[1])) for p in subject]
    cv = [(float(p[0]), float(p[1])) for p in clip]
    for i in range(len(cv)):
        if not poly:
            break
        poly = _clip(poly, cv[i], cv[(i + 1) % len(cv)])
    return poly


def _intersection_area(pa: list, pb: list) -> float:
    # average both clipping orders so the result is exactly symmetric
    area = 0.5 * (polygon_area(clip_convex(pa, pb)) + polygon_area(clip_convex(pb, pa)))
    return min(area, polygon_area(pa), polygon_area(pb))


def quad_intersection_area(a: ConvexQuad, b: ConvexQuad) -> float:
    return _intersection_area(a.vertices, b.vertices)


def rotated_iou(a: RotatedBox, b: RotatedBox) -> float:
    """Exact IoU of two rotated boxes, in [0, 1]."""
    ca, cb = _corners(a), _corners(b)
    inter = _intersection_area(ca, cb)
    union = polygon_area(ca) + polygon_area(cb) - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def points_in_box(box: RotatedBox, pts: np.ndarray) -> np.ndarray:
    """Boolean mask of points (N, 2) lying inside `box`."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx = pts[:, 0] - box.x
    dy = pts[:, 1] - box.y
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= box.w / 2) & (np.abs(v) <= box.h / 2)


def monte_carlo_iou(a: RotatedBox, b: RotatedBox, n: int, rng: np.random.Generator):
    """Point-sampling IoU estimate and its standard error.

    Samples uniformly over the joint bounding rectangle. Conditioned on the
    number of samples landing in the union, the intersection count is binomial
    with success probability IoU, which gives the standard error.
    """
    verts = np.vstack([box_to_quad(a).vertices, box_to_quad(b).vertices])
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    pts = rng.uniform(lo, hi, size=(n, 2))
    in_a = points_in_box(a, pts)
    in_b = points_in_box(b, pts)
    n_union = int(np.count_nonzero(in_a | in_b))
    if n_union == 0:
        return 0.0, 0.0
    p = np.count_nonzero(in_a & in_b) / n_union
    se = math.sqrt(max(p * (1 - p), 0.0) / n_union)
    return p, se
