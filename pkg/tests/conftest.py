"""Shared fixtures: hand-placed mini catalogs and generated datasets."""

import math

import pytest

from geolq.bench import DatasetSpec, generate
from geolq.geometry import Point, Polygon, Polyline
from geolq.store import Catalog, Entity, EntityKey, EntityRelation


def entity(category, entity_id, shape, code=None):
    return Entity(EntityKey(category, entity_id), shape, code)


def point_layer(catalog, category, placed):
    """Register a point layer from (id, x, y) or (id, x, y, code) rows."""
    members = []
    for row in placed:
        entity_id, x, y = row[:3]
        code = row[3] if len(row) > 3 else None
        members.append(entity(category, entity_id, Point(x, y), code))
    return catalog.register_entities(EntityRelation(category, members))


@pytest.fixture
def walkthrough():
    """One accident, two traffic points near it, one street close to each.

    Distances: a1-t1 = 50, a1-t2 = 80 (both near), t1-s1 = 2, t2-s2 = 8
    (both closeby); every cross pairing is out of range.
    """
    catalog = Catalog()
    point_layer(catalog, "accidents", [(1, 0.0, 0.0)])
    point_layer(catalog, "traffic", [(1, 50.0, 0.0), (2, 0.0, 80.0)])
    point_layer(catalog, "streets", [(1, 52.0, 0.0), (2, 0.0, 88.0)])
    return catalog


# A scaled-down dataset for module-level bench/cli tests. Densities roughly
# track the defaults so every scenario still has non-empty results.
SMALL_SPEC = DatasetSpec(
    seed=7,
    accidents=400,
    crossings=40,
    signals=6,
    other_traffic=6,
    roads=700,
    pois=120,
    schools=18,
)


@pytest.fixture(scope="session")
def small_catalog():
    return generate(SMALL_SPEC)


@pytest.fixture(scope="session")
def default_catalog():
    """The full default dataset; treat as read-only (bench always forks)."""
    return generate(DatasetSpec())


# ---------------------------------------------------------------------------
# Random shape generation for the property suites. Polygons are built
# star-shaped around a center with bounded angular gaps, which guarantees a
# simple ring (each edge stays inside its own convex angular wedge).

def random_point(rng, extent=1000.0):
    return Point(rng.uniform(0.0, extent), rng.uniform(0.0, extent))


def random_polyline(rng, extent=1000.0):
    x, y = rng.uniform(0.0, extent), rng.uniform(0.0, extent)
    vertices = [(x, y)]
    for _ in range(rng.randint(1, 4)):
        x += rng.uniform(-80.0, 80.0)
        y += rng.uniform(-80.0, 80.0)
        vertices.append((x, y))
    return Polyline(tuple(vertices))


def random_polygon(rng, extent=1000.0):
    cx, cy = rng.uniform(0.0, extent), rng.uniform(0.0, extent)
    k = rng.randint(5, 9)
    gaps = [rng.uniform(0.5, 1.5) for _ in range(k)]
    scale = 2.0 * math.pi / sum(gaps)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    ring = []
    for gap in gaps:
        radius = rng.uniform(5.0, 120.0)
        ring.append((cx + radius * math.cos(angle), cy + radius * math.sin(angle)))
        angle += gap * scale
    return Polygon(tuple(ring))


def random_shape(rng, extent=1000.0):
    roll = rng.random()
    if roll < 0.5:
        return random_point(rng, extent)
    if roll < 0.8:
        return random_polyline(rng, extent)
    return random_polygon(rng, extent)
