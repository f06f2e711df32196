"""Planar geometry for spatial entities.

Shapes are immutable points, polylines (open vertex chains) and polygons
(a single non-self-intersecting ring, no holes). Coordinates are metres in a
planar frame. distance() is the minimum Euclidean feature-to-feature
distance; a point in a polygon's interior is at distance zero from it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Union

from .errors import GeometryError

__all__ = [
    "BoundingBox",
    "Point",
    "Polygon",
    "Polyline",
    "Shape",
    "bounding_box",
    "box_distance",
    "distance",
]


class BoundingBox(NamedTuple):
    min_x: float
    min_y: float
    max_x: float
    max_y: float


def _require_finite(pairs) -> None:
    for x, y in pairs:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise GeometryError(f"non-finite coordinate ({x}, {y})")


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        _require_finite(((self.x, self.y),))


@dataclass(frozen=True)
class Polyline:
    """Open chain of at least two vertices. Zero-length segments are allowed
    and degrade gracefully to points in the distance computations."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        vs = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", vs)
        if len(vs) < 2:
            raise GeometryError("polyline needs at least 2 vertices")
        _require_finite(vs)


@dataclass(frozen=True)
class Polygon:
    """Single implicitly-closed ring without holes.

    The ring must have at least three vertices, no consecutive duplicates
    (including last == first: pass the ring open), and no two non-adjacent
    edges may intersect or touch. Validated here because the containment and
    distance logic relies on a clean boundary.
    """

    ring: tuple[tuple[float, float], ...]

    def __post_init__(self):
        ring = tuple((float(x), float(y)) for x, y in self.ring)
        object.__setattr__(self, "ring", ring)
        if len(ring) < 3:
            raise GeometryError("polygon ring needs at least 3 vertices")
        _require_finite(ring)
        n = len(ring)
        for i in range(n):
            if ring[i] == ring[(i + 1) % n]:
                raise GeometryError(
                    "polygon ring has a repeated consecutive vertex "
                    f"at position {i}"
                )
        edges = list(_ring_edges(ring))
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue  # first and closing edge are adjacent
                a, b = edges[i]
                c, d = edges[j]
                if _segment_segment_distance(a, b, c, d) == 0.0:
                    raise GeometryError(
                        f"polygon ring self-intersects (edges {i} and {j})"
                    )


Shape = Union[Point, Polyline, Polygon]


def _ring_edges(ring) -> Iterator[tuple[tuple[float, float], tuple[float, float]]]:
    n = len(ring)
    for i in range(n):
        yield ring[i], ring[(i + 1) % n]


def _line_segments(vertices):
    for i in range(len(vertices) - 1):
        yield vertices[i], vertices[i + 1]


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx = bx - ax
    dy = by - ay
    dd = dx * dx + dy * dy
    if dd == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / dd
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments p1-q1 and p2-q2.

    Standard clamped closest-point parametrization; intersecting segments
    yield 0, degenerate (zero-length) segments collapse to points.
    """
    p1x, p1y = p1
    q1x, q1y = q1
    p2x, p2y = p2
    q2x, q2y = q2
    d1x = q1x - p1x
    d1y = q1y - p1y
    d2x = q2x - p2x
    d2y = q2y - p2y
    rx = p1x - p2x
    ry = p1y - p2y
    a = d1x * d1x + d1y * d1y
    e = d2x * d2x + d2y * d2y
    f = d2x * rx + d2y * ry

    if a == 0.0 and e == 0.0:
        return math.hypot(rx, ry)
    if a == 0.0:
        return _point_segment_distance(p1x, p1y, p2x, p2y, q2x, q2y)
    c = d1x * rx + d1y * ry
    if e == 0.0:
        return _point_segment_distance(p2x, p2y, p1x, p1y, q1x, q1y)

    b = d1x * d2x + d1y * d2y
    denom = a * e - b * b
    if denom != 0.0:
        s = (b * f - c * e) / denom
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0
    else:
        s = 0.0
    t = (b * s + f) / e
    # Clamping t can move the optimum; recompute s for the clamped t.
    if t < 0.0:
        t = 0.0
        s = -c / a
    elif t > 1.0:
        t = 1.0
        s = (b - c) / a
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0

    c1x = p1x + d1x * s
    c1y = p1y + d1y * s
    c2x = p2x + d2x * t
    c2y = p2y + d2y * t
    return math.hypot(c1x - c2x, c1y - c2y)


def _point_in_ring(px, py, ring) -> bool:
    # Crossing-number test with the half-open edge rule; callers handle
    # on-boundary points separately (their edge distance is zero anyway).
    inside = False
    n = len(ring)
    x1, y1 = ring[-1]
    for i in range(n):
        x2, y2 = ring[i]
        if (y1 > py) != (y2 > py):
            xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if xc > px:
                inside = not inside
        x1, y1 = x2, y2
    return inside


def _point_polyline(px, py, vertices) -> float:
    best = math.inf
    for (ax, ay), (bx, by) in _line_segments(vertices):
        d = _point_segment_distance(px, py, ax, ay, bx, by)
        if d < best:
            best = d
            if best == 0.0:
                return 0.0
    return best


def _point_polygon(px, py, ring) -> float:
    best = math.inf
    for (ax, ay), (bx, by) in _ring_edges(ring):
        d = _point_segment_distance(px, py, ax, ay, bx, by)
        if d < best:
            best = d
            if best == 0.0:
                return 0.0
    if _point_in_ring(px, py, ring):
        return 0.0
    return best


def _segments_min(segs1, segs2) -> float:
    segs2 = list(segs2)
    best = math.inf
    for a, b in segs1:
        for c, d in segs2:
            dist = _segment_segment_distance(a, b, c, d)
            if dist < best:
                best = dist
                if best == 0.0:
                    return 0.0
    return best


def distance(a: Shape, b: Shape) -> float:
    """Minimum feature-to-feature Euclidean distance between two shapes."""
    if isinstance(a, Point):
        if isinstance(b, Point):
            return math.hypot(a.x - b.x, a.y - b.y)
        if isinstance(b, Polyline):
            return _point_polyline(a.x, a.y, b.vertices)
        if isinstance(b, Polygon):
            return _point_polygon(a.x, a.y, b.ring)
    elif isinstance(a, Polyline):
        if isinstance(b, Point):
            return _point_polyline(b.x, b.y, a.vertices)
        if isinstance(b, Polyline):
            return _segments_min(
                _line_segments(a.vertices), _line_segments(b.vertices)
            )
        if isinstance(b, Polygon):
            return _polyline_polygon(a, b)
    elif isinstance(a, Polygon):
        if isinstance(b, Point):
            return _point_polygon(b.x, b.y, a.ring)
        if isinstance(b, Polyline):
            return _polyline_polygon(b, a)
        if isinstance(b, Polygon):
            return _polygon_polygon(a, b)
    raise GeometryError(f"unsupported shape pair ({type(a).__name__}, {type(b).__name__})")


def _polyline_polygon(line: Polyline, poly: Polygon) -> float:
    # A chain fully inside the ring has a vertex inside; a chain crossing the
    # boundary has a zero segment-segment distance. Otherwise the minimum is
    # attained between a chain segment and a ring edge.
    x0, y0 = line.vertices[0]
    if _point_in_ring(x0, y0, poly.ring):
        return 0.0
    return _segments_min(_line_segments(line.vertices), _ring_edges(poly.ring))


def _polygon_polygon(a: Polygon, b: Polygon) -> float:
    ax, ay = a.ring[0]
    if _point_in_ring(ax, ay, b.ring):
        return 0.0
    bx, by = b.ring[0]
    if _point_in_ring(bx, by, a.ring):
        return 0.0
    return _segments_min(_ring_edges(a.ring), _ring_edges(b.ring))


def bounding_box(shape: Shape) -> BoundingBox:
    """Axis-aligned bounding box over the shape's vertices."""
    if isinstance(shape, Point):
        return BoundingBox(shape.x, shape.y, shape.x, shape.y)
    if isinstance(shape, Polyline):
        pts = shape.vertices
    elif isinstance(shape, Polygon):
        pts = shape.ring
    else:
        raise GeometryError(f"unsupported shape {type(shape).__name__}")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return BoundingBox(min(xs), min(ys), max(xs), max(ys))


def box_distance(b1: BoundingBox, b2: BoundingBox) -> float:
    """Minimum distance between two boxes; 0 when they overlap or touch.

    Lower-bounds distance() for any shapes contained in the boxes, which is
    what makes it a safe pruning predicate for the spatial index.
    """
    dx = b1.min_x - b2.max_x
    if b2.min_x - b1.max_x > dx:
        dx = b2.min_x - b1.max_x
    if dx < 0.0:
        dx = 0.0
    dy = b1.min_y - b2.max_y
    if b2.min_y - b1.max_y > dy:
        dy = b2.min_y - b1.max_y
    if dy < 0.0:
        dy = 0.0
    if dx == 0.0:
        return dy
    if dy == 0.0:
        return dx
    return math.hypot(dx, dy)
