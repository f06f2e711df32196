"""Relational operators over relationship- and entity-relations.

These are the set-at-a-time building blocks: hash join on a single shared
attribute, projection with bag semantics, set difference over identical
schemas, a semi-join that filters an entity-relation by the ids appearing in
a relationship column, and row iteration for consumers that want to mix the
paradigms. All operators are deterministic in their input order.
"""

from __future__ import annotations

import csv
from typing import Iterable, Iterator

from .errors import CatalogError
from .store import Catalog, EntityRelation, RelationshipRelation

_REL1 = "rel1."
_REL2 = "rel2."


def _resolve_out_column(name, r1, r2, on):
    """Map an output column spec to (source, index, stripped name)."""
    if name.startswith(_REL1):
        bare = name[len(_REL1):]
        return 0, r1.column(bare), bare
    if name.startswith(_REL2):
        bare = name[len(_REL2):]
        return 1, r2.column(bare), bare
    in1 = name in r1.schema
    in2 = name in r2.schema
    if in1 and in2:
        raise CatalogError(
            f"ambiguous column '{name}': present in both {r1.schema} and "
            f"{r2.schema}; qualify with 'rel1.' or 'rel2.'"
        )
    if in1:
        return 0, r1.column(name), name
    if in2:
        return 1, r2.column(name), name
    raise CatalogError(
        f"unknown column '{name}' (schemas {r1.schema} and {r2.schema})"
    )


def join(
    r1: RelationshipRelation,
    r2: RelationshipRelation,
    on: str,
    out_columns: Iterable[str] | None = None,
    *,
    name: str = "",
) -> RelationshipRelation:
    """Hash join on the single attribute `on` (must exist on both sides).

    Without out_columns the schema is r1's columns followed by r2's columns
    minus the join attribute. out_columns may qualify names with 'rel1.' or
    'rel2.'; unqualified names must be unambiguous. Output keeps r1's row
    order, with matches in r2 order within each r1 row (bag semantics).
    """
    i1 = r1.column(on)
    i2 = r2.column(on)
    if out_columns is None:
        selectors = [(0, i, c) for i, c in enumerate(r1.schema)]
        selectors += [
            (1, i, c) for i, c in enumerate(r2.schema) if c != on
        ]
    else:
        selectors = [_resolve_out_column(c, r1, r2, on) for c in out_columns]
    schema = [s[2] for s in selectors]

    buckets: dict[int, list[tuple]] = {}
    for row in r2.tuples:
        buckets.setdefault(row[i2], []).append(row)
    rows = []
    for row1 in r1.tuples:
        for row2 in buckets.get(row1[i1], ()):
            both = (row1, row2)
            rows.append(tuple(both[src][idx] for src, idx, _ in selectors))
    return RelationshipRelation(name, schema, rows)


def project(
    r: RelationshipRelation,
    columns: Iterable[str],
    *,
    name: str = "",
) -> RelationshipRelation:
    """Projection onto `columns`, keeping duplicates (bag semantics)."""
    idx = [r.column(c) for c in columns]
    rows = [tuple(row[i] for i in idx) for row in r.tuples]
    return RelationshipRelation(name, [r.schema[i] for i in idx], rows)


def minus(
    r1: RelationshipRelation,
    r2: RelationshipRelation,
    *,
    name: str = "",
) -> RelationshipRelation:
    """Rows of r1 that do not occur in r2. Schemas must match exactly."""
    if r1.schema != r2.schema:
        raise CatalogError(
            f"minus needs identical schemas, got {r1.schema} vs {r2.schema}"
        )
    drop = set(r2.tuples)
    rows = [row for row in r1.tuples if row not in drop]
    return RelationshipRelation(name, r1.schema, rows)


def filter_entities(
    catalog: Catalog,
    in_relation: EntityRelation,
    r: RelationshipRelation,
    attr: str,
    name: str | None = None,
) -> EntityRelation:
    """Semi-join: members of in_relation whose id occurs in column `attr`.

    Member order is preserved; the result is registered as a fresh
    entity-relation (or under `name`).
    """
    i = r.column(attr)
    keep = {row[i] for row in r.tuples}
    members = [e for e in in_relation if e.key.id in keep]
    out = EntityRelation(name or catalog.fresh_name(), members)
    return catalog.register_entities(out)


def iterate(r: RelationshipRelation) -> Iterator[tuple]:
    """Yield every row exactly once, in stored order."""
    yield from r.tuples


def write_csv(r: RelationshipRelation, path) -> None:
    """Write schema header plus rows."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(r.schema)
        writer.writerows(r.tuples)
