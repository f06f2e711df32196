"""Entity storage: relations, catalog, type specs and file ingestion.

Entities are uniquely identified by (category, id) pairs. An EntityRelation
is an immutable ordered collection of entities; a RelationshipRelation holds
rows of integer foreign keys under a named schema. The Catalog owns both
kinds under one namespace and hands out fresh names for derived relations.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Iterator, NamedTuple

from .errors import CatalogError, GeometryError, LoadError
from .geometry import Point, Polygon, Polyline, Shape

EARTH_RADIUS_METRES = 6371000.0

OSM_CODE_MIN = 1000
OSM_CODE_MAX = 9999


class EntityKey(NamedTuple):
    category: str
    id: int


@dataclass(frozen=True)
class Entity:
    key: EntityKey
    shape: Shape
    osm_code: int | None = None
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.key, EntityKey):
            object.__setattr__(self, "key", EntityKey(*self.key))
        if self.key.id < 0:
            raise CatalogError(f"entity id must be non-negative, got {self.key.id}")
        code = self.osm_code
        if code is not None and not (OSM_CODE_MIN <= code <= OSM_CODE_MAX):
            raise CatalogError(
                f"osm_code {code} outside [{OSM_CODE_MIN}, {OSM_CODE_MAX}]"
            )


class EntityRelation:
    """Ordered, immutable collection of entities. Lookup by id is O(1)."""

    __slots__ = ("name", "members", "id_index", "_spatial_index")

    def __init__(self, name: str, members: Iterable[Entity]):
        self.name = name
        self.members = tuple(members)
        index: dict[int, int] = {}
        for pos, e in enumerate(self.members):
            if e.key.id in index:
                raise CatalogError(
                    f"relation '{name}': duplicate entity id {e.key.id}"
                )
            index[e.key.id] = pos
        self.id_index = index
        self._spatial_index = None  # filled lazily by spatial_index.ensure_index

    def get(self, entity_id: int) -> Entity:
        try:
            return self.members[self.id_index[entity_id]]
        except KeyError:
            raise CatalogError(
                f"relation '{self.name}': no entity with id {entity_id}"
            ) from None

    def __iter__(self) -> Iterator[Entity]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, entity_id: int) -> bool:
        return entity_id in self.id_index

    def __repr__(self):
        return f"EntityRelation({self.name!r}, {len(self.members)} members)"


class RelationshipRelation:
    """Named schema plus rows of integer foreign keys (bag semantics)."""

    __slots__ = ("name", "schema", "tuples")

    def __init__(self, name: str, schema: Iterable[str], tuples: Iterable[tuple]):
        self.name = name
        self.schema = tuple(schema)
        if len(set(self.schema)) != len(self.schema):
            raise CatalogError(
                f"relation '{name}': duplicate attribute names in {self.schema}"
            )
        if not self.schema:
            raise CatalogError(f"relation '{name}': empty schema")
        width = len(self.schema)
        rows = []
        for row in tuples:
            t = tuple(row)
            if len(t) != width:
                raise CatalogError(
                    f"relation '{name}': row {t} does not match schema {self.schema}"
                )
            rows.append(t)
        self.tuples = rows

    def column(self, attr: str) -> int:
        try:
            return self.schema.index(attr)
        except ValueError:
            raise CatalogError(
                f"relation '{self.name}': no attribute '{attr}' in schema {self.schema}"
            ) from None

    def __len__(self) -> int:
        return len(self.tuples)

    def __repr__(self):
        return f"RelationshipRelation({self.name!r}, {self.schema}, {len(self.tuples)} rows)"


# ---------------------------------------------------------------------------
# Type specs


@dataclass(frozen=True)
class TypeSpec:
    """A named union of inclusive OSM code ranges, e.g. school = 2082."""

    name: str
    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.ranges:
            raise CatalogError(f"type spec '{self.name}' has no code ranges")
        for lo, hi in self.ranges:
            if lo > hi:
                raise CatalogError(
                    f"type spec '{self.name}': empty range {lo}-{hi}"
                )
            if hi < OSM_CODE_MIN or lo > OSM_CODE_MAX:
                raise CatalogError(
                    f"type spec '{self.name}': range {lo}-{hi} matches no code "
                    f"in [{OSM_CODE_MIN}, {OSM_CODE_MAX}]"
                )

    def matches(self, code: int | None) -> bool:
        if code is None:
            return False
        for lo, hi in self.ranges:
            if lo <= code <= hi:
                return True
        return False


def parse_type_config(text: str, source=None) -> dict[str, TypeSpec]:
    """Parse the type-spec config format.

    One spec per line: ``name = 2082`` or ``name = 2080-2089``; commas build
    unions. ``#`` starts a comment.
    """
    specs: dict[str, TypeSpec] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LoadError("expected 'name = codes'", source=source, line=lineno)
        name, _, rhs = line.partition("=")
        name = name.strip()
        if not name or " " in name:
            raise LoadError(f"bad type name {name!r}", source=source, line=lineno)
        if name in specs:
            raise LoadError(f"duplicate type name '{name}'", source=source, line=lineno)
        ranges = []
        for item in rhs.split(","):
            item = item.strip()
            try:
                if "-" in item[1:]:  # allow nothing fancier than lo-hi
                    lo_s, _, hi_s = item.partition("-")
                    ranges.append((int(lo_s), int(hi_s)))
                else:
                    code = int(item)
                    ranges.append((code, code))
            except ValueError:
                raise LoadError(
                    f"bad code item {item!r}", source=source, line=lineno
                ) from None
        try:
            specs[name] = TypeSpec(name, tuple(ranges))
        except CatalogError as exc:
            raise LoadError(str(exc), source=source, line=lineno) from None
    return specs


def default_type_config_text() -> str:
    return (
        resources.files("geolq").joinpath("data/osm_types.cfg").read_text("utf-8")
    )


def default_type_specs() -> dict[str, TypeSpec]:
    return parse_type_config(default_type_config_text(), source="osm_types.cfg")


def entity_is_type(spec: TypeSpec, entity: Entity) -> bool:
    return spec.matches(entity.osm_code)


# ---------------------------------------------------------------------------
# Catalog


class Catalog:
    """Registry of relations and type specs.

    Relation names are unique across both kinds so lookups are unambiguous.
    Registration is write-locked; relations are immutable once registered.
    Generated names come from a catalog-scoped counter so independent runs
    over one catalog never collide.
    """

    def __init__(self, type_specs: dict[str, TypeSpec] | None = None):
        self._entities: dict[str, EntityRelation] = {}
        self._relationships: dict[str, RelationshipRelation] = {}
        self._type_specs = dict(type_specs) if type_specs is not None else default_type_specs()
        self._lock = threading.Lock()
        self._fresh = 0

    # -- registration

    def _check_name(self, name: str) -> None:
        if not name:
            raise CatalogError("relation name must be non-empty")
        if name in self._entities or name in self._relationships:
            raise CatalogError(f"relation '{name}' already registered")

    def register_entities(self, relation: EntityRelation) -> EntityRelation:
        with self._lock:
            self._check_name(relation.name)
            self._entities[relation.name] = relation
        return relation

    def register_relationship(self, relation: RelationshipRelation) -> RelationshipRelation:
        with self._lock:
            self._check_name(relation.name)
            self._relationships[relation.name] = relation
        return relation

    def drop(self, name: str) -> None:
        with self._lock:
            if self._entities.pop(name, None) is not None:
                return
            if self._relationships.pop(name, None) is not None:
                return
        raise CatalogError(f"unknown relation '{name}'")

    def fresh_name(self, prefix: str = "_tmp") -> str:
        with self._lock:
            while True:
                self._fresh += 1
                name = f"{prefix}{self._fresh}"
                if name not in self._entities and name not in self._relationships:
                    return name

    # -- lookup

    def entity_relation(self, name: str) -> EntityRelation:
        try:
            return self._entities[name]
        except KeyError:
            if name in self._relationships:
                raise CatalogError(
                    f"'{name}' is a relationship-relation, expected an entity-relation"
                ) from None
            raise CatalogError(f"unknown entity-relation '{name}'") from None

    def relationship(self, name: str) -> RelationshipRelation:
        try:
            return self._relationships[name]
        except KeyError:
            if name in self._entities:
                raise CatalogError(
                    f"'{name}' is an entity-relation, expected a relationship-relation"
                ) from None
            raise CatalogError(f"unknown relationship-relation '{name}'") from None

    def relation(self, name: str):
        if name in self._entities:
            return self._entities[name]
        if name in self._relationships:
            return self._relationships[name]
        raise CatalogError(f"unknown relation '{name}'")

    def has_relation(self, name: str) -> bool:
        return name in self._entities or name in self._relationships

    def get_entity(self, key) -> Entity:
        category, entity_id = key
        return self.entity_relation(category).get(entity_id)

    def entity_relations(self) -> dict[str, EntityRelation]:
        return dict(self._entities)

    def relationship_relations(self) -> dict[str, RelationshipRelation]:
        return dict(self._relationships)

    # -- type specs

    def type_spec(self, name: str) -> TypeSpec:
        try:
            return self._type_specs[name]
        except KeyError:
            raise CatalogError(f"unknown type spec '{name}'") from None

    def has_type_spec(self, name: str) -> bool:
        return name in self._type_specs

    def type_specs(self) -> dict[str, TypeSpec]:
        return dict(self._type_specs)

    def register_type_spec(self, spec: TypeSpec, replace: bool = False) -> None:
        with self._lock:
            if not replace and spec.name in self._type_specs:
                raise CatalogError(f"type spec '{spec.name}' already defined")
            self._type_specs[spec.name] = spec

    # -- derivation

    def fork(self, overrides: dict[str, EntityRelation] | None = None) -> "Catalog":
        """Shallow copy sharing relation objects; overrides replace by name."""
        clone = Catalog(type_specs=self._type_specs)
        clone._entities = dict(self._entities)
        clone._relationships = dict(self._relationships)
        clone._fresh = self._fresh
        if overrides:
            clone._entities.update(overrides)
        return clone


def filter_by_type(
    catalog: Catalog,
    spec: TypeSpec | str,
    relation: EntityRelation,
    name: str | None = None,
) -> EntityRelation:
    """Members of `relation` whose osm_code matches `spec`, order preserved.

    The result is registered under `name` (fresh name when omitted).
    """
    if isinstance(spec, str):
        spec = catalog.type_spec(spec)
    members = [e for e in relation if spec.matches(e.osm_code)]
    out = EntityRelation(name or catalog.fresh_name(), members)
    return catalog.register_entities(out)


# ---------------------------------------------------------------------------
# WKT

_WKT_TYPES = ("POINT", "LINESTRING", "POLYGON")


def _split_top_level(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise LoadError("unbalanced parentheses in WKT")
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise LoadError("unbalanced parentheses in WKT")
    parts.append(text[start:])
    return parts


def _parse_coord_list(text: str) -> list[tuple[float, float]]:
    coords = []
    for chunk in text.split(","):
        fields = chunk.split()
        if len(fields) != 2:
            raise LoadError(f"bad WKT coordinate {chunk.strip()!r}")
        try:
            coords.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise LoadError(f"bad WKT coordinate {chunk.strip()!r}") from None
    return coords


def _strip_outer_parens(text: str) -> str:
    text = text.strip()
    if not (text.startswith("(") and text.endswith(")")):
        raise LoadError(f"expected parenthesized WKT body, got {text!r}")
    return text[1:-1]


def _close_open_ring(coords: list[tuple[float, float]]) -> list[tuple[float, float]]:
    if len(coords) > 1 and coords[0] == coords[-1]:
        return coords[:-1]
    return coords


def shape_from_wkt(text: str) -> Shape:
    """Parse the POINT / LINESTRING / POLYGON subset of WKT."""
    s = text.strip()
    paren = s.find("(")
    if paren < 0:
        raise LoadError(f"not a WKT geometry: {text!r}")
    keyword = s[:paren].strip().upper()
    body = s[paren:]
    if keyword not in _WKT_TYPES:
        raise LoadError(f"unsupported WKT type '{keyword or text.strip()}'")
    inner = _strip_outer_parens(body)
    if keyword == "POINT":
        coords = _parse_coord_list(inner)
        if len(coords) != 1:
            raise LoadError(f"POINT needs exactly one coordinate, got {len(coords)}")
        return Point(*coords[0])
    if keyword == "LINESTRING":
        return Polyline(tuple(_parse_coord_list(inner)))
    rings = _split_top_level(inner)
    if len(rings) > 1:
        raise LoadError("holes unsupported")
    ring = _close_open_ring(_parse_coord_list(_strip_outer_parens(rings[0])))
    return Polygon(tuple(ring))


def shape_to_wkt(shape: Shape) -> str:
    if isinstance(shape, Point):
        return f"POINT ({shape.x!r} {shape.y!r})"
    if isinstance(shape, Polyline):
        body = ", ".join(f"{x!r} {y!r}" for x, y in shape.vertices)
        return f"LINESTRING ({body})"
    if isinstance(shape, Polygon):
        closed = shape.ring + (shape.ring[0],)
        body = ", ".join(f"{x!r} {y!r}" for x, y in closed)
        return f"POLYGON (({body}))"
    raise GeometryError(f"unsupported shape {type(shape).__name__}")


# ---------------------------------------------------------------------------
# GeoJSON geometry

def shape_from_geojson(geom: dict) -> Shape:
    """Parse the Point / LineString / Polygon subset of GeoJSON geometry."""
    if not isinstance(geom, dict) or "type" not in geom:
        raise LoadError("feature has no geometry object")
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    if gtype == "Point":
        if not isinstance(coords, (list, tuple)) or len(coords) < 2:
            raise LoadError("bad Point coordinates")
        return Point(float(coords[0]), float(coords[1]))
    if gtype == "LineString":
        return Polyline(tuple((float(x), float(y)) for x, y in coords))
    if gtype == "Polygon":
        if not coords:
            raise LoadError("empty Polygon coordinates")
        if len(coords) > 1:
            raise LoadError("holes unsupported")
        ring = _close_open_ring([(float(x), float(y)) for x, y in coords[0]])
        return Polygon(tuple(ring))
    raise LoadError(f"unsupported GeoJSON geometry type '{gtype}'")


def shape_to_geojson(shape: Shape) -> dict:
    if isinstance(shape, Point):
        return {"type": "Point", "coordinates": [shape.x, shape.y]}
    if isinstance(shape, Polyline):
        return {
            "type": "LineString",
            "coordinates": [[x, y] for x, y in shape.vertices],
        }
    if isinstance(shape, Polygon):
        ring = [[x, y] for x, y in shape.ring]
        ring.append(ring[0])
        return {"type": "Polygon", "coordinates": [ring]}
    raise GeometryError(f"unsupported shape {type(shape).__name__}")


# ---------------------------------------------------------------------------
# Projection

def _project_shapes(shapes: list[Shape]) -> list[Shape]:
    """Equirectangular projection about the dataset centroid.

    Input coordinates are degrees (lon, lat); output is planar metres. Good
    enough at city scale, which is all the loaders promise.
    """
    pts: list[tuple[float, float]] = []
    for s in shapes:
        if isinstance(s, Point):
            pts.append((s.x, s.y))
        elif isinstance(s, Polyline):
            pts.extend(s.vertices)
        else:
            pts.extend(s.ring)
    if not pts:
        return shapes
    lon0 = sum(p[0] for p in pts) / len(pts)
    lat0 = sum(p[1] for p in pts) / len(pts)
    k = EARTH_RADIUS_METRES * math.pi / 180.0
    kx = k * math.cos(math.radians(lat0))

    def proj(lon: float, lat: float) -> tuple[float, float]:
        return ((lon - lon0) * kx, (lat - lat0) * k)

    out: list[Shape] = []
    for s in shapes:
        if isinstance(s, Point):
            out.append(Point(*proj(s.x, s.y)))
        elif isinstance(s, Polyline):
            out.append(Polyline(tuple(proj(x, y) for x, y in s.vertices)))
        else:
            out.append(Polygon(tuple(proj(x, y) for x, y in s.ring)))
    return out


# ---------------------------------------------------------------------------
# Loaders

def _parse_code(raw, source, line) -> int | None:
    if raw is None:
        return None
    raw = str(raw).strip()
    if raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise LoadError(f"bad code {raw!r}", source=source, line=line) from None


def _assemble_relation(category, raw_rows, lonlat, source) -> EntityRelation:
    """raw_rows: list of (entity_id or None, shape, code, attrs, line)."""
    shapes = [r[1] for r in raw_rows]
    if lonlat:
        shapes = _project_shapes(shapes)
    seen: dict[int, int] = {}
    entities = []
    next_id = 0
    for (entity_id, _, code, attrs, line), shape in zip(raw_rows, shapes):
        if entity_id is None:
            entity_id = next_id
            next_id += 1
        if entity_id in seen:
            raise LoadError(
                f"duplicate id {entity_id} (first seen at line {seen[entity_id]})",
                source=source,
                line=line,
            )
        seen[entity_id] = line
        try:
            entities.append(
                Entity(EntityKey(category, entity_id), shape, code, attrs)
            )
        except CatalogError as exc:
            raise LoadError(str(exc), source=source, line=line) from None
    return EntityRelation(category, entities)


def load_entities_csv(
    catalog: Catalog,
    path,
    category: str,
    *,
    lonlat: bool = False,
) -> EntityRelation:
    """Load one entity layer from CSV and register it under `category`.

    Column conventions: geometry from a `wkt` column, or from `x`,`y`
    columns; optional `id` (non-negative ints, sequential from 0 when
    absent); optional `code`; any other columns become string attributes.
    With lonlat=True, coordinates are degrees and get projected to planar
    metres about the dataset centroid.
    """
    path = str(path)
    raw_rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames
        if header is None:
            raise LoadError("empty file, expected a header row", source=path)
        if len(set(header)) != len(header):
            raise LoadError(f"duplicate columns in header {header}", source=path)
        use_wkt = "wkt" in header
        if not use_wkt and not ("x" in header and "y" in header):
            raise LoadError(
                "no geometry columns: need 'wkt' or both 'x' and 'y'", source=path
            )
        geom_cols = {"wkt"} if use_wkt else {"x", "y"}
        attr_cols = [c for c in header if c not in geom_cols | {"id", "code"}]
        for row in reader:
            line = reader.line_num
            if any(row.get(c) is None for c in header) or row.get(None) is not None:
                raise LoadError(
                    f"row has {sum(v is not None for v in row.values())} fields, "
                    f"expected {len(header)}",
                    source=path,
                    line=line,
                )
            try:
                if use_wkt:
                    shape = shape_from_wkt(row["wkt"])
                else:
                    shape = Point(float(row["x"]), float(row["y"]))
            except (LoadError, GeometryError, ValueError) as exc:
                raise LoadError(f"bad geometry: {exc}", source=path, line=line) from None
            entity_id = None
            if "id" in header:
                try:
                    entity_id = int(row["id"])
                except ValueError:
                    raise LoadError(
                        f"bad id {row['id']!r}", source=path, line=line
                    ) from None
            code = _parse_code(row.get("code"), path, line)
            attrs = {c: row[c] for c in attr_cols}
            raw_rows.append((entity_id, shape, code, attrs, line))
    relation = _assemble_relation(category, raw_rows, lonlat, path)
    return catalog.register_entities(relation)


_SCALARS = (str, int, float, bool)


def load_entities_geojson(
    catalog: Catalog,
    path,
    category: str,
    *,
    lonlat: bool = False,
) -> EntityRelation:
    """Load a GeoJSON FeatureCollection (Point/LineString/Polygon subset)."""
    path = str(path)
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise LoadError(f"bad JSON: {exc}", source=path) from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise LoadError("expected a FeatureCollection", source=path)
    features = doc.get("features")
    if not isinstance(features, list):
        raise LoadError("FeatureCollection without a features list", source=path)
    raw_rows = []
    for i, feature in enumerate(features):
        where = f"feature {i}"
        if not isinstance(feature, dict) or feature.get("type") != "Feature":
            raise LoadError(f"{where}: not a Feature", source=path)
        props = feature.get("properties") or {}
        if not isinstance(props, dict):
            raise LoadError(f"{where}: properties must be an object", source=path)
        try:
            shape = shape_from_geojson(feature.get("geometry"))
        except (LoadError, GeometryError, ValueError, TypeError) as exc:
            raise LoadError(f"{where}: {exc}", source=path) from None
        raw_id = props.get("id", feature.get("id"))
        entity_id = None
        if raw_id is not None:
            try:
                entity_id = int(raw_id)
            except (TypeError, ValueError):
                raise LoadError(f"{where}: bad id {raw_id!r}", source=path) from None
        try:
            code = _parse_code(props.get("code"), path, None)
        except LoadError as exc:
            raise LoadError(f"{where}: {exc}", source=path) from None
        attrs = {
            k: v
            for k, v in props.items()
            if k not in ("id", "code") and isinstance(v, _SCALARS)
        }
        raw_rows.append((entity_id, shape, code, attrs, i))
    try:
        relation = _assemble_relation(category, raw_rows, lonlat, path)
    except LoadError as exc:
        raise exc
    return catalog.register_entities(relation)
