"""Set-at-a-time query evaluation over materialized relations.

Goals run deterministically left to right; there is no backtracking and no
search. Every goal consumes whole relations and registers exactly one fresh
materialized relation in the catalog (named _tmp<N> from the catalog-scoped
counter), which later goals reference through the variable it was bound to.

The spatial joins probe the index of the right operand once per member of
the left operand, so a join's probe count equals the left cardinality, in
contrast to the tuple-at-a-time engine which probes once per goal
invocation along every derivation path.

run() materializes everything and hands back the final relation.
run_with_iteration() additionally yields the final relation's rows one dict
at a time, for callers that want to stream results without touching the
stored tuples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from . import relalg
from .errors import EvalError
from .instrument import Counters
from .qlang import (
    CLOSEBY_METRES,
    NEAR_METRES,
    Call,
    Program,
    Query,
    Str,
    StrList,
    Var,
    expand_rules,
)
from .spatial_index import distance_join, ensure_index
from .store import Catalog, EntityRelation, RelationshipRelation, filter_by_type

DEFAULT_PAIR_SCHEMA = ("id1", "id2")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one set-at-a-time run."""

    final: object  # RelationshipRelation or EntityRelation
    final_name: str
    intermediates: tuple  # registered relation names, creation order
    counters: Counters
    goal_probes: tuple  # (predicate name, index probes issued) per goal

    @property
    def result_rows(self) -> int:
        return len(self.final)


class _Pipeline:
    def __init__(self, catalog: Catalog, counters: Counters):
        self.catalog = catalog
        self.counters = counters
        self.env: dict[str, str] = {}  # variable -> relation name
        self.created: list[str] = []
        self.goal_probes: list[tuple[str, int]] = []

    def relation_name(self, term, what: str) -> str:
        if isinstance(term, Str):
            return term.value
        if isinstance(term, Var):
            try:
                return self.env[term.name]
            except KeyError:
                raise EvalError(f"unbound input variable '{term.name}'") from None
        raise EvalError(f"{what} must be a relation name or variable, got {term!r}")

    def bind_out(self, term, name: str):
        if not isinstance(term, Var):
            raise EvalError(f"output argument must be a variable, got {term!r}")
        if term.name in self.env:
            raise EvalError(f"output variable '{term.name}' is already bound")
        self.env[term.name] = name
        self.created.append(name)

    def pair_schema(self, args, pos: int):
        if len(args) <= pos:
            return DEFAULT_PAIR_SCHEMA
        cols = args[pos]
        if not isinstance(cols, StrList) or len(cols.values) != 2:
            raise EvalError("column list must hold exactly two names")
        return cols.values

    def run_goal(self, goal):
        if not isinstance(goal, Call):
            raise EvalError(
                f"goal {goal!r} is not available in relation evaluation"
            )
        before = self.counters.index_probes
        name = goal.name
        if name in ("near_relational", "closeby_relational"):
            threshold = NEAR_METRES if name == "near_relational" else CLOSEBY_METRES
            left = self.catalog.entity_relation(
                self.relation_name(goal.args[0], "left operand")
            )
            right = self.catalog.entity_relation(
                self.relation_name(goal.args[1], "right operand")
            )
            pairs = distance_join(
                left, ensure_index(right), threshold, self.counters
            )
            out = RelationshipRelation(
                self.catalog.fresh_name(), self.pair_schema(goal.args, 3), pairs
            )
            self.catalog.register_relationship(out)
            self.bind_out(goal.args[2], out.name)
        elif name == "entity_type_relational":
            source = self.catalog.entity_relation(
                self.relation_name(goal.args[1], "input relation")
            )
            out = filter_by_type(self.catalog, goal.args[0].name, source)
            self.bind_out(goal.args[2], out.name)
        elif name == "filter_by_relationship":
            source = self.catalog.entity_relation(
                self.relation_name(goal.args[0], "input relation")
            )
            pairs = self.catalog.relationship(
                self.relation_name(goal.args[1], "relationship operand")
            )
            if not isinstance(goal.args[2], Str):
                raise EvalError("filter_by_relationship needs an attribute name")
            out = relalg.filter_entities(
                self.catalog, source, pairs, goal.args[2].value
            )
            self.bind_out(goal.args[3], out.name)
        elif name == "join_relational":
            r1 = self.catalog.relationship(
                self.relation_name(goal.args[0], "left operand")
            )
            r2 = self.catalog.relationship(
                self.relation_name(goal.args[1], "right operand")
            )
            if not isinstance(goal.args[3], Str):
                raise EvalError("join_relational needs a join attribute name")
            cols = None
            if len(goal.args) == 5:
                if not isinstance(goal.args[4], StrList):
                    raise EvalError("join_relational output columns must be a list")
                cols = goal.args[4].values
            out = relalg.join(
                r1, r2, goal.args[3].value, cols, name=self.catalog.fresh_name()
            )
            self.catalog.register_relationship(out)
            self.bind_out(goal.args[2], out.name)
        elif name == "project_id_relational":
            r = self.catalog.relationship(
                self.relation_name(goal.args[0], "input relation")
            )
            if not isinstance(goal.args[1], StrList) or not goal.args[1].values:
                raise EvalError("project_id_relational needs a column list")
            out = relalg.project(
                r, goal.args[1].values, name=self.catalog.fresh_name()
            )
            self.catalog.register_relationship(out)
            self.bind_out(goal.args[2], out.name)
        elif name == "minus_relational":
            r1 = self.catalog.relationship(
                self.relation_name(goal.args[0], "left operand")
            )
            r2 = self.catalog.relationship(
                self.relation_name(goal.args[1], "right operand")
            )
            out = relalg.minus(r1, r2, name=self.catalog.fresh_name())
            self.catalog.register_relationship(out)
            self.bind_out(goal.args[2], out.name)
        else:
            raise EvalError(f"unknown predicate {name}/{len(goal.args)}")
        self.goal_probes.append((name, self.counters.index_probes - before))


def run(
    catalog: Catalog,
    query: Query | Program,
    counters: Counters | None = None,
) -> RunResult:
    """Evaluate a relational query, materializing one relation per goal.

    The intermediates stay registered in the catalog so they can be
    inspected; callers that reuse a catalog across runs should drop them
    (see drop_intermediates) or run against a fork.
    """
    if isinstance(query, Program):
        query = expand_rules(query)
    if not query.goals:
        raise EvalError("empty query")
    counters = counters if counters is not None else Counters()
    pipe = _Pipeline(catalog, counters)
    for goal in query.goals:
        pipe.run_goal(goal)
    final_name = pipe.created[-1]
    final = catalog.relation(final_name)
    counters.solutions += len(final)
    return RunResult(
        final=final,
        final_name=final_name,
        intermediates=tuple(pipe.created),
        counters=counters,
        goal_probes=tuple(pipe.goal_probes),
    )


def _bind_row(env: dict, schema, row, i: int):
    """Bind one row's values to logic variables, one frame per column.

    This is the same trail-style binding discipline the tuple-at-a-time
    engine uses to emit a solution, so iterating a relation prices a row
    exactly like that engine prices a solution: bind each column, project,
    unbind on the way back out.
    """
    if i == len(schema):
        yield
        return
    env[schema[i]] = row[i]
    try:
        yield from _bind_row(env, schema, row, i + 1)
    finally:
        del env[schema[i]]


def run_with_iteration(
    catalog: Catalog,
    query: Query | Program,
    counters: Counters | None = None,
) -> Iterator[dict]:
    """Like run(), then stream the final relation's rows tuple-at-a-time.

    Each row is passed through the logic layer: its values are bound to
    variables named after the schema and projected out as a solution dict.
    The generator's return value is the RunResult; grab it from
    StopIteration.value or via a driver like bench's drain helper.
    """
    result = run(catalog, query, counters)
    final = result.final
    if isinstance(final, EntityRelation):
        schema: tuple = ("id",)
        rows: Iterator[tuple] = ((entity.key.id,) for entity in final)
    else:
        schema = final.schema
        rows = relalg.iterate(final)
    env: dict = {}
    for row in rows:
        for _ in _bind_row(env, schema, row, 0):
            yield {name: env[name] for name in schema}
    return result


def drop_intermediates(catalog: Catalog, result: RunResult) -> None:
    """Unregister every relation the run created, the final one included."""
    for name in result.intermediates:
        catalog.drop(name)
