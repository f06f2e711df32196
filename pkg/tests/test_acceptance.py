"""Release acceptance gate.

Each test checks one shipping criterion end to end and prints a
`[acceptance] <label>: PASS|FAIL` line that survives pytest's output
capture, so a plain run shows the gate verdict at a glance. The
performance criteria drive the real benchmark harness over the full
default dataset, which makes this module take several minutes on its
own; everything is deterministic, so a red line here is a real
regression and not noise.

The property checks at the bottom carry their own compact oracles
(nested-loop joins, linear index scans) instead of reusing assertions
from the unit suites.
"""

import math
import random
import time
from contextlib import contextmanager

import pytest

from geolq import bench, engine_entity, engine_relation, qlang, relalg
from geolq.geometry import Point, bounding_box, box_distance, distance
from geolq.qlang import CLOSEBY_METRES, NEAR_METRES
from geolq.spatial_index import build_index, within_distance
from geolq.store import Catalog, EntityRelation, RelationshipRelation

from conftest import entity, point_layer, random_shape


@contextmanager
def verdict(capsys, label):
    """Print one gate line per criterion, even under captured output."""
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\n[acceptance] {label}: FAIL")
        raise
    with capsys.disabled():
        print(f"\n[acceptance] {label}: PASS")


@pytest.fixture(scope="module")
def full_sweep(default_catalog):
    """One complete benchmark sweep plus its wall-clock seconds.

    Shared by the performance and probe-accounting criteria so the
    expensive measurement happens exactly once.
    """
    start = time.perf_counter()
    results = bench.scaling_sweep(default_catalog)
    wall = time.perf_counter() - start
    return {(r.scenario, r.mode, r.n): r for r in results}, wall


# ---------------------------------------------------------------------------
# Walkthrough example: both paradigms reproduce the worked two-solution
# configuration (one accident, two traffic features, two streets).

WALKTHROUGH_RULE = """\
% Accidents near a traffic feature that in turn sits closeby a street.
near_traffic_street(A, T, S) :-
    ("accidents", A),
    near(("accidents", A), ("traffic", T)),
    closeby(("traffic", T), ("streets", S)).

:- near_traffic_street(A, T, S).
"""

WALKTHROUGH_PIPELINE = """\
:- near_relational("accidents", "traffic", R1, ["A", "T"]),
   closeby_relational("traffic", "streets", R2, ["T", "S"]),
   join_relational(R1, R2, R3, "T").
"""


def test_walkthrough_example(walkthrough, capsys):
    with verdict(capsys, "walkthrough example agrees across paradigms"):
        start = time.perf_counter()

        program = qlang.parse(WALKTHROUGH_RULE)
        assert qlang.validate(program, "entity", walkthrough) == []
        solutions = engine_entity.solve(walkthrough, program)
        assert solutions == [
            {"A": 1, "T": 1, "S": 1},
            {"A": 1, "T": 2, "S": 2},
        ]

        pipeline = qlang.parse(WALKTHROUGH_PIPELINE)
        assert qlang.validate(pipeline, "relation", walkthrough) == []
        outcome = engine_relation.run(walkthrough, pipeline)
        try:
            assert tuple(outcome.final.schema) == ("A", "T", "S")
            assert list(outcome.final.tuples) == [(1, 1, 1), (1, 2, 2)]
        finally:
            engine_relation.drop_intermediates(walkthrough, outcome)

        assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------------------
# Cross-mode and oracle agreement on sampled datasets.

VERIFY_SIZES = (64, 128, 256, 512)
VERIFY_SEEDS = (42, 7, 19)


def test_cross_mode_and_oracle_agreement(default_catalog, capsys):
    """All three modes and the brute-force oracle return the same sets.

    Four scenarios, four sample sizes, three sampling seeds; every size
    here is within the oracle bound, so each verification also replays
    the scenario with plain nested scans.
    """
    with verdict(capsys, "modes and oracle agree across scenarios and seeds"):
        start = time.perf_counter()
        for scenario in (1, 2, 3, 4):
            for n in VERIFY_SIZES:
                for seed in VERIFY_SEEDS:
                    bench.verify_scenario(default_catalog, scenario, n, seed=seed)
        assert time.perf_counter() - start < 300.0


# ---------------------------------------------------------------------------
# Relative performance at scale.

def test_relative_performance(full_sweep, capsys):
    with verdict(capsys, "relation evaluation outpaces entity evaluation"):
        stats, wall = full_sweep
        assert wall < 1800.0

        top = max(bench.DEFAULT_SIZES)
        s1 = {mode: stats[(1, mode, top)].median for mode in bench.MODES}
        assert s1["relation"] < s1["relation-iter"] < s1["entity"]

        ratio = stats[(3, "entity", top)].median / stats[(3, "relation", top)].median
        assert ratio >= 5.0


# ---------------------------------------------------------------------------
# Probe accounting.

# Position of each relational predicate's output variable.
_OUT_POSITION = {
    "near_relational": 2,
    "closeby_relational": 2,
    "entity_type_relational": 2,
    "filter_by_relationship": 3,
    "join_relational": 2,
    "project_id_relational": 2,
    "minus_relational": 2,
}


def _check_goal_probes(catalog, scenario, n):
    """Spatial joins probe once per left member; other goals never probe.

    Replays the pipeline's name resolution against the registered
    intermediates so each goal's left input cardinality can be read off
    the catalog the run actually used.
    """
    work = bench.prepare_run_catalog(catalog, n, seed=bench.DEFAULT_SEED)
    query = qlang.expand_rules(bench.load_scenario_program(scenario, "relation"))
    outcome = engine_relation.run(work, query)
    try:
        env = {}
        for goal, (name, probes), created in zip(
            query.goals, outcome.goal_probes, outcome.intermediates
        ):
            if name in ("near_relational", "closeby_relational"):
                left = goal.args[0]
                left_name = (
                    left.value if isinstance(left, qlang.Str) else env[left.name]
                )
                assert probes == len(work.entity_relation(left_name))
            else:
                assert probes == 0
            env[goal.args[_OUT_POSITION[name]].name] = created
    finally:
        engine_relation.drop_intermediates(work, outcome)


def test_probe_accounting(full_sweep, default_catalog, capsys):
    with verdict(capsys, "index probe counts match the cost model"):
        stats, _ = full_sweep

        # Entity evaluation never probes less than relation evaluation.
        for scenario in (1, 2, 3, 4):
            for n in bench.DEFAULT_SIZES:
                assert (
                    stats[(scenario, "entity", n)].index_probes
                    >= stats[(scenario, "relation", n)].index_probes
                )

        # Entity probes grow at least linearly with the sample in the
        # multi-goal scenarios (small slack for per-run constants).
        low, high = min(bench.DEFAULT_SIZES), max(bench.DEFAULT_SIZES)
        for scenario in (2, 3, 4):
            growth = (
                stats[(scenario, "entity", high)].index_probes
                / stats[(scenario, "entity", low)].index_probes
            )
            assert growth >= 0.9 * (high / low)

        for scenario in (1, 2, 3, 4):
            _check_goal_probes(default_catalog, scenario, n=512)


# ---------------------------------------------------------------------------
# Shipped scenario listings.

def test_scenario_listings(default_catalog, capsys):
    with verdict(capsys, "scenario listings parse, validate, and round-trip"):
        for scenario in (1, 2, 3, 4):
            for mode in ("entity", "relation"):
                program = bench.load_scenario_program(scenario, mode)
                assert len(program.queries) == 1
                assert qlang.validate(program, mode, default_catalog) == []
                assert qlang.parse(qlang.to_text(program)) == program


# ---------------------------------------------------------------------------
# Property suites with local oracles.

def _geometry_properties():
    rng = random.Random(1405)
    for _ in range(10_000):
        a = random_shape(rng)
        b = random_shape(rng)
        d = distance(a, b)
        assert d >= 0.0
        assert abs(d - distance(b, a)) <= 1e-9
        assert box_distance(bounding_box(a), bounding_box(b)) <= d + 1e-9
    for _ in range(500):
        shape = random_shape(rng)
        assert distance(shape, shape) == 0.0


def _index_matches_scan():
    for dataset in range(10):
        rng = random.Random(f"gate:{dataset}")
        members = [
            entity("layer", i, random_shape(rng))
            for i in range(150 + 35 * dataset)
        ]
        relation = EntityRelation("layer", members)
        index = build_index(relation)
        for _ in range(100):
            probe = random_shape(rng)
            d = rng.choice((10.0, 50.0, 120.0, 400.0))
            hits = [key.id for key in within_distance(index, probe, d)]
            scan = sorted(
                member.key.id
                for member in members
                if distance(probe, member.shape) <= d
            )
            assert hits == scan


def _algebra_matches_oracles():
    rng = random.Random(77)

    def rows(count):
        return [(rng.randint(0, 6), rng.randint(0, 6)) for _ in range(count)]

    for _ in range(500):
        r1 = RelationshipRelation("r1", ("a", "b"), rows(rng.randint(0, 12)))
        r2 = RelationshipRelation("r2", ("b", "c"), rows(rng.randint(0, 12)))

        joined = relalg.join(r1, r2, "b")
        assert tuple(joined.schema) == ("a", "b", "c")
        assert list(joined.tuples) == [
            row1 + (row2[1],)
            for row1 in r1.tuples
            for row2 in r2.tuples
            if row1[1] == row2[0]
        ]

        projected = relalg.project(joined, ("c", "a"))
        assert list(projected.tuples) == [
            (row[2], row[0]) for row in joined.tuples
        ]

        r3 = RelationshipRelation("r3", ("a", "b"), rows(rng.randint(0, 12)))
        removed = relalg.minus(r1, r3)
        drop = set(r3.tuples)
        assert list(removed.tuples) == [
            row for row in r1.tuples if row not in drop
        ]

        catalog = Catalog()
        source = catalog.register_entities(
            EntityRelation(
                "pts", [entity("pts", i, Point(float(i), 0.0)) for i in range(7)]
            )
        )
        kept = relalg.filter_entities(catalog, source, r1, "a")
        ids = {row[0] for row in r1.tuples}
        assert [member.key.id for member in kept] == [
            i for i in range(7) if i in ids
        ]


def _threshold_boundaries():
    # Inclusive thresholds: a pair at exactly the limit qualifies, the
    # next representable float above it does not.
    cases = (
        ("near", NEAR_METRES),
        ("closeby", CLOSEBY_METRES),
    )
    for predicate, threshold in cases:
        for gap, expect in ((threshold, True), (math.nextafter(threshold, math.inf), False)):
            catalog = Catalog()
            point_layer(catalog, "a", [(0, 0.0, 0.0)])
            point_layer(catalog, "b", [(1, gap, 0.0)])

            program = qlang.parse(f':- {predicate}(("a", 0), ("b", 1)).')
            assert (engine_entity.solve(catalog, program) == [{}]) is expect

            pipeline = qlang.parse(f':- {predicate}_relational("a", "b", R).')
            outcome = engine_relation.run(catalog, pipeline)
            try:
                pairs = set(outcome.final.tuples)
            finally:
                engine_relation.drop_intermediates(catalog, outcome)
            assert ((0, 1) in pairs) is expect


def test_property_suites(capsys):
    with verdict(capsys, "geometry, index, and algebra properties hold"):
        _geometry_properties()
        _index_matches_scan()
        _algebra_matches_oracles()
        _threshold_boundaries()
