"""Tuple-at-a-time query evaluation with chronological backtracking.

Goals are tried depth-first, left to right. A choice point enumerates
candidate entities one at a time; on failure the engine backtracks to the
most recent choice point. Nothing is batched or memoized: a spatial goal
issues one index probe per invocation, so re-proving the same goal under a
different binding probes the index again. That is the point of this engine;
the set-at-a-time engine in engine_relation exists for the comparison.

Spatial goals resolve like this:

* both entity ids bound: one exact distance evaluation, no index probe;
* one id bound: one probe of the other relation's index, candidates bind
  the unbound id in ascending-id order;
* both ids unbound: the left category is enumerated and each member issues
  one probe of the right relation's index.

An entity is never reported near itself: candidates with the same
(category, id) as the bound side are skipped, matching the set-at-a-time
join's self-pair rule.

Negation is negation as failure. Variables appearing only inside \\+ are
existentially quantified locals; the negation succeeds exactly when its
conjunction has no solution under the current outer bindings.
"""

from __future__ import annotations

from typing import Iterator

from . import geometry
from .errors import EvalError
from .instrument import Counters
from .qlang import (
    CLOSEBY_METRES,
    NEAR_METRES,
    Call,
    Int,
    Negation,
    Program,
    Query,
    Str,
    TupleGoal,
    TupleTerm,
    Var,
    expand_rules,
    query_variables,
)
from .store import Catalog, EntityRelation

_FAIL = object()


def _bind(env: dict, name: str, value):
    env[name] = value
    try:
        yield
    finally:
        del env[name]


class _Eval:
    def __init__(self, catalog: Catalog, counters: Counters):
        self.catalog = catalog
        self.counters = counters

    # -- term helpers

    def entity_arg(self, term) -> tuple[str, object]:
        """Split a ("category", Id) tuple term into (category, id term)."""
        if (
            not isinstance(term, TupleTerm)
            or len(term.items) != 2
            or not isinstance(term.items[0], Str)
            or not isinstance(term.items[1], (Var, Int))
        ):
            raise EvalError(f"expected a (\"category\", id) tuple, got {term!r}")
        return term.items[0].value, term.items[1]

    def id_value(self, id_term, env: dict):
        """Bound integer id, or None when the term is an unbound variable."""
        if isinstance(id_term, Int):
            return id_term.value
        return env.get(id_term.name)

    # -- goal dispatch

    def conj(self, goals, i: int, env: dict) -> Iterator[None]:
        if i == len(goals):
            yield
            return
        for _ in self.satisfy(goals[i], env):
            yield from self.conj(goals, i + 1, env)

    def satisfy(self, goal, env: dict) -> Iterator[None]:
        if isinstance(goal, TupleGoal):
            return self.membership(goal, env)
        if isinstance(goal, Negation):
            return self.negation(goal, env)
        if isinstance(goal, Call):
            if goal.name == "near":
                return self.spatial(goal, NEAR_METRES, env)
            if goal.name == "closeby":
                return self.spatial(goal, CLOSEBY_METRES, env)
            if goal.name == "distance":
                return self.distance3(goal, env)
            if goal.name == "entity_type":
                return self.entity_type(goal, env)
            raise EvalError(f"unknown predicate {goal.name}/{len(goal.args)}")
        raise EvalError(f"cannot evaluate goal {goal!r}")

    # -- satisfiers

    def membership(self, goal: TupleGoal, env: dict) -> Iterator[None]:
        category, id_term = self.entity_arg(TupleTerm(goal.items))
        relation = self.catalog.entity_relation(category)
        value = self.id_value(id_term, env)
        if value is not None:
            if value in relation:
                yield
            return
        for entity in relation:
            yield from _bind(env, id_term.name, entity.key.id)

    def spatial(self, goal: Call, threshold: float, env: dict) -> Iterator[None]:
        from .spatial_index import ensure_index, within_distance

        cat1, id1 = self.entity_arg(goal.args[0])
        cat2, id2 = self.entity_arg(goal.args[1])
        rel1 = self.catalog.entity_relation(cat1)
        rel2 = self.catalog.entity_relation(cat2)
        v1 = self.id_value(id1, env)
        v2 = self.id_value(id2, env)

        if v1 is not None and v2 is not None:
            if cat1 == cat2 and v1 == v2:
                return
            if v1 not in rel1 or v2 not in rel2:
                return
            self.counters.distance_evals += 1
            d = geometry.distance(rel1.get(v1).shape, rel2.get(v2).shape)
            if d <= threshold:
                yield
            return

        if v1 is not None or v2 is not None:
            # one side bound: probe the unbound side's index once
            if v1 is not None:
                bound_rel, bound_id, free_rel, free_term, same = (
                    rel1, v1, rel2, id2, cat1 == cat2,
                )
            else:
                bound_rel, bound_id, free_rel, free_term, same = (
                    rel2, v2, rel1, id1, cat1 == cat2,
                )
            if bound_id not in bound_rel:
                return
            probe = bound_rel.get(bound_id).shape
            index = ensure_index(free_rel)
            for key in within_distance(index, probe, threshold, self.counters):
                if same and key.id == bound_id:
                    continue
                yield from _bind(env, free_term.name, key.id)
            return

        # both unbound: enumerate the left category, one probe per member
        index = ensure_index(rel2)
        same = cat1 == cat2
        for entity in rel1:
            env[id1.name] = entity.key.id
            try:
                hits = within_distance(index, entity.shape, threshold, self.counters)
                for key in hits:
                    if same and key.id == entity.key.id:
                        continue
                    yield from _bind(env, id2.name, key.id)
            finally:
                del env[id1.name]

    def distance3(self, goal: Call, env: dict) -> Iterator[None]:
        cat1, id1 = self.entity_arg(goal.args[0])
        cat2, id2 = self.entity_arg(goal.args[1])
        v1 = self.id_value(id1, env)
        v2 = self.id_value(id2, env)
        if v1 is None or v2 is None:
            raise EvalError("distance/3 requires both entity arguments bound")
        rel1 = self.catalog.entity_relation(cat1)
        rel2 = self.catalog.entity_relation(cat2)
        if v1 not in rel1 or v2 not in rel2:
            return
        self.counters.distance_evals += 1
        d = geometry.distance(rel1.get(v1).shape, rel2.get(v2).shape)
        out = goal.args[2]
        if not isinstance(out, Var):
            raise EvalError("distance/3 requires a distance variable")
        existing = env.get(out.name)
        if existing is not None:
            if abs(existing - d) <= 1e-9:
                yield
            return
        yield from _bind(env, out.name, d)

    def entity_type(self, goal: Call, env: dict) -> Iterator[None]:
        spec = self.catalog.type_spec(goal.args[0].name)
        category, id_term = self.entity_arg(goal.args[1])
        relation = self.catalog.entity_relation(category)
        value = self.id_value(id_term, env)
        if value is not None:
            if value in relation and spec.matches(relation.get(value).osm_code):
                yield
            return
        for entity in relation:
            if spec.matches(entity.osm_code):
                yield from _bind(env, id_term.name, entity.key.id)

    def negation(self, goal: Negation, env: dict) -> Iterator[None]:
        inner = self.conj(goal.goals, 0, env)
        try:
            found = next(inner, _FAIL) is not _FAIL
        finally:
            inner.close()
        if not found:
            yield


def solve_iter(
    catalog: Catalog,
    query: Query | Program,
    counters: Counters | None = None,
) -> Iterator[dict]:
    """Yield solutions as {variable: value} dicts, in derivation order.

    A Program argument has its rules expanded first; solutions then report
    the variables of the query directive itself, so rule-body locals stay
    hidden the way negation locals do. Values are entity ids (int) or
    distances (float).
    """
    if isinstance(query, Program):
        expanded = expand_rules(query)
        variables = query_variables(query.queries[0])
        query = expanded
    else:
        variables = query_variables(query)
    counters = counters if counters is not None else Counters()
    ev = _Eval(catalog, counters)
    env: dict = {}
    for _ in ev.conj(query.goals, 0, env):
        counters.solutions += 1
        yield {name: env[name] for name in variables if name in env}


def solve(
    catalog: Catalog,
    query: Query | Program,
    counters: Counters | None = None,
    limit: int | None = None,
) -> list[dict]:
    """All solutions of the query (or the first `limit` of them)."""
    out = []
    for row in solve_iter(catalog, query, counters):
        out.append(row)
        if limit is not None and len(out) >= limit:
            break
    return out
