import pytest

from conftest import point_layer
from geolq import engine_entity, engine_relation
from geolq.engine_relation import (
    DEFAULT_PAIR_SCHEMA,
    RunResult,
    drop_intermediates,
    run,
    run_with_iteration,
)
from geolq.errors import EvalError
from geolq.instrument import Counters
from geolq.qlang import Query, parse
from geolq.store import Catalog, EntityRelation, RelationshipRelation


def q(text):
    program = parse(text)
    return program.queries[0] if len(program.clauses) == 1 else program


CHAIN = (
    ':- near_relational("accidents", "traffic", R1, ["A", "T"]),\n'
    '   closeby_relational("traffic", "streets", R2, ["T", "S"]),\n'
    '   join_relational(R1, R2, R3, "T").'
)


def test_walkthrough_pipeline(walkthrough):
    counters = Counters()
    result = run(walkthrough, q(CHAIN), counters)
    assert result.final.schema == ("A", "T", "S")
    assert result.final.tuples == [(1, 1, 1), (1, 2, 2)]
    assert result.result_rows == 2
    assert counters.solutions == 2


def test_one_fresh_relation_per_goal(walkthrough):
    result = run(walkthrough, q(CHAIN))
    assert result.intermediates == ("_tmp1", "_tmp2", "_tmp3")
    assert result.final_name == "_tmp3"
    for name in result.intermediates:
        assert walkthrough.has_relation(name)
    assert walkthrough.relation("_tmp3") is result.final


def test_goal_probes_equal_left_cardinalities(walkthrough):
    result = run(walkthrough, q(CHAIN))
    assert result.goal_probes == (
        ("near_relational", 1),   # |accidents| = 1
        ("closeby_relational", 2),  # |traffic| = 2
        ("join_relational", 0),
    )


def test_agrees_with_entity_engine(walkthrough):
    entity_query = q(
        ':- ("accidents", A), near(("accidents", A), ("traffic", T)), '
        'closeby(("traffic", T), ("streets", S)).'
    )
    expected = {
        (sol["A"], sol["T"], sol["S"])
        for sol in engine_entity.solve(walkthrough, entity_query)
    }
    result = run(walkthrough, q(CHAIN))
    assert set(result.final.tuples) == expected


def test_default_pair_schema(walkthrough):
    result = run(walkthrough, q(':- near_relational("accidents", "traffic", R).'))
    assert result.final.schema == DEFAULT_PAIR_SCHEMA == ("id1", "id2")
    assert result.final.tuples == [(1, 1), (1, 2)]


def test_self_pairs_dropped_on_same_relation():
    cat = Catalog()
    point_layer(cat, "p", [(0, 0.0, 0.0), (1, 4.0, 0.0)])
    result = run(cat, q(':- closeby_relational("p", "p", R).'))
    assert result.final.tuples == [(0, 1), (1, 0)]


def test_entity_type_relational_returns_entity_relation():
    cat = Catalog()
    point_layer(cat, "pois", [(0, 0, 0, 2082), (1, 1, 1, 2001), (2, 2, 2, 2082)])
    counters = Counters()
    result = run(cat, q(':- entity_type_relational(school, "pois", Schools).'), counters)
    assert isinstance(result.final, EntityRelation)
    assert [e.key.id for e in result.final] == [0, 2]
    assert counters.solutions == 2
    assert result.goal_probes == (("entity_type_relational", 0),)


def test_filter_by_relationship():
    cat = Catalog()
    point_layer(cat, "pois", [(0, 0, 0), (1, 1, 1), (2, 2, 2)])
    cat.register_relationship(
        RelationshipRelation("hits", ("Poi", "Acc"), [(2, 7), (0, 8)])
    )
    result = run(cat, q(':- filter_by_relationship("pois", "hits", "Poi", Out).'))
    assert isinstance(result.final, EntityRelation)
    assert [e.key.id for e in result.final] == [0, 2]  # source order


def test_variables_thread_relations_between_goals():
    cat = Catalog()
    point_layer(cat, "pois", [(0, 0.0, 0.0, 2082), (1, 3.0, 0.0, 2001)])
    result = run(cat, q(
        ':- entity_type_relational(school, "pois", S),\n'
        '   closeby_relational(S, "pois", R, ["School", "Other"]).'
    ))
    assert result.final.schema == ("School", "Other")
    assert result.final.tuples == [(0, 1)]


def test_project_and_minus_through_engine(walkthrough):
    result = run(walkthrough, q(
        ':- near_relational("accidents", "traffic", R1, ["A", "T"]),\n'
        '   project_id_relational(R1, ["A"], R2),\n'
        '   minus_relational(R1, R1, R3),\n'
        '   project_id_relational(R1, ["T"], R4).'
    ))
    assert walkthrough.relationship(result.intermediates[1]).tuples == [(1,), (1,)]
    assert walkthrough.relationship(result.intermediates[2]).tuples == []
    assert result.final.tuples == [(1,), (2,)]


def test_string_names_resolve_via_catalog_not_env(walkthrough):
    # a pipeline can name a materialized _tmp relation explicitly
    first = run(walkthrough, q(':- near_relational("accidents", "traffic", R).'))
    follow = run(walkthrough, q(
        f':- project_id_relational("{first.final_name}", ["id1"], Out).'
    ))
    assert follow.final.tuples == [(1,), (1,)]


def test_fresh_names_skip_taken_ones(walkthrough):
    walkthrough.register_relationship(
        RelationshipRelation("_tmp1", ("X",), [])
    )
    result = run(walkthrough, q(':- near_relational("accidents", "traffic", R).'))
    assert result.final_name == "_tmp2"


def test_drop_intermediates(walkthrough):
    before = set(walkthrough.entity_relations()) | set(
        walkthrough.relationship_relations()
    )
    result = run(walkthrough, q(CHAIN))
    drop_intermediates(walkthrough, result)
    after = set(walkthrough.entity_relations()) | set(
        walkthrough.relationship_relations()
    )
    assert after == before


def test_counters_accumulate_distance_evals(walkthrough):
    counters = Counters()
    run(walkthrough, q(':- near_relational("accidents", "traffic", R).'), counters)
    assert counters.index_probes == 1
    assert counters.distance_evals >= 2  # both traffic candidates confirmed


def test_run_with_iteration_streams_dicts(walkthrough):
    counters = Counters()
    stream = run_with_iteration(walkthrough, q(CHAIN), counters)
    rows = []
    while True:
        try:
            rows.append(next(stream))
        except StopIteration as stop:
            result = stop.value
            break
    assert rows == [{"A": 1, "T": 1, "S": 1}, {"A": 1, "T": 2, "S": 2}]
    assert isinstance(result, RunResult)
    assert result.final.tuples == [(1, 1, 1), (1, 2, 2)]
    assert counters.solutions == 2


def test_run_with_iteration_entity_final():
    cat = Catalog()
    point_layer(cat, "pois", [(0, 0, 0, 2082), (1, 1, 1, 2001), (2, 2, 2, 2082)])
    rows = list(run_with_iteration(cat, q(
        ':- entity_type_relational(school, "pois", S).'
    )))
    assert rows == [{"id": 0}, {"id": 2}]


def test_rule_programs_are_expanded(walkthrough):
    program = q(
        'pairs(Out) :- near_relational("accidents", "traffic", Out).\n'
        ':- pairs(R).'
    )
    result = run(walkthrough, program)
    assert result.final.tuples == [(1, 1), (1, 2)]


@pytest.mark.parametrize(
    "text,needle",
    [
        (':- join_relational(R1, R1, Out, "T").', "unbound input variable 'R1'"),
        (':- near_relational("accidents", "traffic", R),'
         '   closeby_relational("traffic", "streets", R).',
         "output variable 'R' is already bound"),
        (':- near_relational("accidents", "traffic", "out").',
         "output argument must be a variable"),
        (':- near_relational("accidents", "traffic", R, ["A", "B", "C"]).',
         "column list must hold exactly two names"),
        (':- ("accidents", A).', "not available in relation evaluation"),
        (':- nope("accidents", R).', "unknown predicate nope/2"),
        (':- near(("accidents", A), ("traffic", T)).', "unknown predicate near/2"),
    ],
)
def test_pipeline_errors(walkthrough, text, needle):
    with pytest.raises(EvalError, match=needle):
        run(walkthrough, q(text))


def test_error_argument_shapes(walkthrough):
    first = ':- near_relational("accidents", "traffic", R1),\n   '
    with pytest.raises(EvalError, match="needs an attribute name"):
        run(walkthrough, q(first + 'filter_by_relationship("accidents", R1, Attr, O).'))
    with pytest.raises(EvalError, match="needs a join attribute name"):
        run(walkthrough, q(first + "join_relational(R1, R1, O, K)."))
    with pytest.raises(EvalError, match="needs a column list"):
        run(walkthrough, q(first + "project_id_relational(R1, [], O)."))


def test_empty_query_rejected(walkthrough):
    with pytest.raises(EvalError, match="empty query"):
        run(walkthrough, Query(()))


def test_failed_goal_leaves_earlier_intermediates(walkthrough):
    # goals before the failing one stay registered (caller can inspect,
    # then drop by hand or discard the fork)
    with pytest.raises(EvalError):
        run(walkthrough, q(
            ':- near_relational("accidents", "traffic", R1),\n'
            '   join_relational(R1, Missing, Out, "id1").'
        ))
    assert walkthrough.has_relation("_tmp1")
