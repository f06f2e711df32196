"""Static R-tree over one entity-relation, bulk loaded with STR packing.

Sort-tile-recursive packing with fan-out 16: leaves are filled by sorting
entries on x-center into vertical slices and on y-center within each slice;
upper levels pack the same way over child boxes. Probes prune subtrees whose
box distance to the probe box exceeds the query distance, then confirm
candidates with an exact distance evaluation.
"""

from __future__ import annotations

import math
from typing import Iterable

from .geometry import BoundingBox, Shape, bounding_box, box_distance, distance
from .instrument import Counters
from .store import EntityKey, EntityRelation

FANOUT = 16


class _Node:
    __slots__ = ("box", "children", "entries")

    def __init__(self, box, children=None, entries=None):
        self.box = box
        self.children = children
        self.entries = entries


def _enclosing_box(boxes: Iterable[BoundingBox]) -> BoundingBox:
    boxes = list(boxes)
    return BoundingBox(
        min(b.min_x for b in boxes),
        min(b.min_y for b in boxes),
        max(b.max_x for b in boxes),
        max(b.max_y for b in boxes),
    )


def _str_tiles(items: list) -> list[list]:
    """Group (box, payload) items into chunks of at most FANOUT.

    Items are sorted by x-center, cut into ceil(sqrt(P)) vertical slices,
    then sorted by y-center inside each slice and chunked. Sorts are stable,
    so equal centers keep input order and packing stays deterministic.
    """
    n = len(items)
    n_chunks = math.ceil(n / FANOUT)
    n_slices = math.ceil(math.sqrt(n_chunks))
    per_slice = n_slices * FANOUT
    by_x = sorted(items, key=lambda it: (it[0].min_x + it[0].max_x))
    chunks = []
    for s in range(0, n, per_slice):
        vertical = sorted(
            by_x[s : s + per_slice], key=lambda it: (it[0].min_y + it[0].max_y)
        )
        for c in range(0, len(vertical), FANOUT):
            chunks.append(vertical[c : c + FANOUT])
    return chunks


class SpatialIndex:
    """Immutable spatial index over the members of one entity-relation."""

    __slots__ = ("relation_name", "root", "size")

    def __init__(self, relation: EntityRelation):
        self.relation_name = relation.name
        self.size = len(relation)
        entries = [
            (bounding_box(e.shape), (e.key, e.shape)) for e in relation
        ]
        if not entries:
            self.root = None
            return
        level = [
            _Node(
                _enclosing_box(b for b, _ in chunk),
                entries=[(key, shape, b) for b, (key, shape) in chunk],
            )
            for chunk in _str_tiles(entries)
        ]
        while len(level) > 1:
            chunks = _str_tiles([(n.box, n) for n in level])
            level = [
                _Node(
                    _enclosing_box(b for b, _ in chunk),
                    children=[n for _, n in chunk],
                )
                for chunk in chunks
            ]
        self.root = level[0]


def build_index(relation: EntityRelation) -> SpatialIndex:
    """Bulk load an index over the relation's current members."""
    return SpatialIndex(relation)


def ensure_index(relation: EntityRelation) -> SpatialIndex:
    """Return the relation's cached index, building it on first use."""
    idx = relation._spatial_index
    if idx is None:
        idx = build_index(relation)
        relation._spatial_index = idx
    return idx


def within_distance(
    index: SpatialIndex,
    probe: Shape,
    d: float,
    counters: Counters | None = None,
) -> list[EntityKey]:
    """Keys of all indexed entities within distance d of the probe shape.

    Inclusive (<= d). One call is one index probe; every exact distance
    confirmation is counted as a distance evaluation. Results are sorted by
    ascending entity id.
    """
    if counters is not None:
        counters.index_probes += 1
    if index.root is None:
        return []
    pbox = bounding_box(probe)
    hits: list[EntityKey] = []
    stack = [index.root]
    while stack:
        node = stack.pop()
        if node.entries is not None:
            for key, shape, box in node.entries:
                if box_distance(pbox, box) <= d:
                    if counters is not None:
                        counters.distance_evals += 1
                    if distance(probe, shape) <= d:
                        hits.append(key)
        else:
            for child in node.children:
                if box_distance(pbox, child.box) <= d:
                    stack.append(child)
    hits.sort(key=lambda k: k.id)
    return hits


def distance_join(
    left: EntityRelation,
    right_index: SpatialIndex,
    d: float,
    counters: Counters | None = None,
    *,
    skip_same_entity: bool = True,
) -> list[tuple[int, int]]:
    """Index nested-loop join: pairs (left id, right id) within distance d.

    Each left member issues exactly one within_distance probe, so the probe
    count of a join equals the left relation's cardinality. Output order is
    left members in relation order, matches in ascending id. Pairs whose two
    sides are the same entity (equal keys) are skipped so that set-at-a-time
    results line up with the tuple-at-a-time engine's self-pair rule.
    """
    pairs: list[tuple[int, int]] = []
    for member in left:
        key = member.key
        for hit in within_distance(right_index, member.shape, d, counters):
            if skip_same_entity and hit == key:
                continue
            pairs.append((key.id, hit.id))
    return pairs
