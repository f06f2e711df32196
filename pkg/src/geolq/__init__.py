"""Spatio-logical querying over two evaluation paradigms.

Entity evaluation resolves queries tuple-at-a-time with backtracking;
relation evaluation materializes whole relations goal by goal. Both share
one query language, one catalog, and one spatial index, which makes their
cost profiles directly comparable.
"""

__version__ = "0.1.0"

from .engine_entity import solve
from .engine_relation import RunResult, run, run_with_iteration
from .errors import GlqError
from .geometry import Point, Polygon, Polyline, distance
from .instrument import Counters
from .qlang import CLOSEBY_METRES, NEAR_METRES, expand_rules, parse, to_text, validate
from .spatial_index import build_index, distance_join, ensure_index, within_distance
from .store import (
    Catalog,
    Entity,
    EntityKey,
    EntityRelation,
    RelationshipRelation,
    load_entities_csv,
    load_entities_geojson,
)

__all__ = [
    "CLOSEBY_METRES",
    "Catalog",
    "Counters",
    "Entity",
    "EntityKey",
    "EntityRelation",
    "GlqError",
    "NEAR_METRES",
    "Point",
    "Polygon",
    "Polyline",
    "RelationshipRelation",
    "RunResult",
    "build_index",
    "distance",
    "distance_join",
    "ensure_index",
    "expand_rules",
    "load_entities_csv",
    "load_entities_geojson",
    "parse",
    "run",
    "run_with_iteration",
    "solve",
    "to_text",
    "validate",
    "within_distance",
]
