import csv
import io

import pytest

from conftest import SMALL_SPEC
from geolq import bench, qlang
from geolq.bench import (
    CROSSING_CODE,
    DEFAULT_SIZES,
    MODES,
    OTHER_TRAFFIC_CODE,
    POI_CODES,
    SCENARIOS,
    SCHOOL_CODE,
    SIGNAL_CODE,
    BenchResult,
    DatasetSpec,
    format_dataset_spec,
    generate,
    load_scenario_program,
    parse_dataset_spec,
    prepare_run_catalog,
    run_scenario,
    sample_accidents,
    scaling_sweep,
    verify_scenario,
    write_sweep_csv,
)
from geolq.errors import CatalogError, LoadError, VerificationError
from geolq.oracles import ORACLES
from geolq.store import Catalog


# -- dataset spec


def test_spec_validation():
    with pytest.raises(CatalogError, match="non-negative"):
        DatasetSpec(accidents=-1)
    with pytest.raises(CatalogError, match="extent must be positive"):
        DatasetSpec(width=0.0)
    with pytest.raises(CatalogError, match="road vertex range"):
        DatasetSpec(road_vertices_min=5, road_vertices_max=3)
    with pytest.raises(CatalogError, match="road vertex range"):
        DatasetSpec(road_vertices_min=1)


def test_spec_round_trip():
    spec = DatasetSpec(seed=9, width=512.5, accidents=77, schools=3)
    assert parse_dataset_spec(format_dataset_spec(spec)) == spec
    assert parse_dataset_spec(format_dataset_spec(DatasetSpec())) == DatasetSpec()


def test_parse_spec_accepts_comments_and_blanks():
    spec = parse_dataset_spec("# sizes\naccidents = 5\n\nroads = 2  # few\n")
    assert spec.accidents == 5 and spec.roads == 2
    assert spec.pois == DatasetSpec().pois  # everything else defaulted


@pytest.mark.parametrize(
    "text,needle",
    [
        ("accidents 5", "expected 'key = value'"),
        ("rivers = 5", "unknown key 'rivers'"),
        ("accidents = many", "bad value 'many'"),
        ("accidents = -2", "non-negative"),
    ],
)
def test_parse_spec_errors(text, needle):
    with pytest.raises(LoadError, match=needle):
        parse_dataset_spec(text, source="d.cfg")


def test_parse_spec_error_line_numbers():
    with pytest.raises(LoadError) as info:
        parse_dataset_spec("accidents = 5\nbogus line\n", source="d.cfg")
    assert info.value.line == 2


# -- generation


def test_generate_is_deterministic():
    a = generate(SMALL_SPEC)
    b = generate(SMALL_SPEC)
    for layer in ("accidents", "traffic", "roads", "pois"):
        sa, sb = a.entity_relation(layer), b.entity_relation(layer)
        assert len(sa) == len(sb)
        assert all(
            x.shape == y.shape and x.osm_code == y.osm_code
            for x, y in zip(sa, sb)
        )


def test_generate_layers_are_independent():
    base = generate(SMALL_SPEC)
    import dataclasses

    fewer_roads = dataclasses.replace(SMALL_SPEC, roads=SMALL_SPEC.roads // 2)
    other = generate(fewer_roads)
    assert len(other.entity_relation("roads")) == SMALL_SPEC.roads // 2
    # untouched layers are bit-identical
    for layer in ("accidents", "traffic", "pois"):
        assert all(
            x.shape == y.shape
            for x, y in zip(base.entity_relation(layer), other.entity_relation(layer))
        )


def test_generate_layout(small_catalog):
    acc = small_catalog.entity_relation("accidents")
    assert [e.key.id for e in acc] == list(range(SMALL_SPEC.accidents))
    assert all(
        0.0 <= e.shape.x <= SMALL_SPEC.width and 0.0 <= e.shape.y <= SMALL_SPEC.height
        for e in acc
    )

    traffic = small_catalog.entity_relation("traffic")
    codes = [e.osm_code for e in traffic]
    c, s, o = SMALL_SPEC.crossings, SMALL_SPEC.signals, SMALL_SPEC.other_traffic
    assert codes[:c] == [CROSSING_CODE] * c
    assert codes[c : c + s] == [SIGNAL_CODE] * s
    assert codes[c + s :] == [OTHER_TRAFFIC_CODE] * o

    pois = small_catalog.entity_relation("pois")
    codes = [e.osm_code for e in pois]
    assert codes[-SMALL_SPEC.schools :] == [SCHOOL_CODE] * SMALL_SPEC.schools
    assert codes[: SMALL_SPEC.pois] == [
        POI_CODES[i % len(POI_CODES)] for i in range(SMALL_SPEC.pois)
    ]

    roads = small_catalog.entity_relation("roads")
    for e in roads:
        assert (
            SMALL_SPEC.road_vertices_min
            <= len(e.shape.vertices)
            <= SMALL_SPEC.road_vertices_max
        )


def test_sample_accidents(small_catalog):
    sample = sample_accidents(small_catalog, 50, seed=3)
    again = sample_accidents(small_catalog, 50, seed=3)
    ids = [e.key.id for e in sample]
    assert ids == [e.key.id for e in again]  # deterministic
    assert ids == sorted(ids)
    assert len(set(ids)) == 50
    assert sample.name == "accidents"
    other = sample_accidents(small_catalog, 50, seed=4)
    assert ids != [e.key.id for e in other]
    with pytest.raises(CatalogError, match="exceeds the accidents layer"):
        sample_accidents(small_catalog, SMALL_SPEC.accidents + 1, seed=3)
    with pytest.raises(CatalogError, match="negative"):
        sample_accidents(small_catalog, -1, seed=3)


def test_sample_differs_by_size_not_prefix(small_catalog):
    # each n draws independently; n=20 is not a prefix of n=40 in general
    ids20 = [e.key.id for e in sample_accidents(small_catalog, 20, seed=3)]
    ids40 = [e.key.id for e in sample_accidents(small_catalog, 40, seed=3)]
    assert len(ids20) == 20 and len(ids40) == 40


def test_prepare_run_catalog(small_catalog):
    work = prepare_run_catalog(small_catalog, 32, seed=5)
    assert len(work.entity_relation("accidents")) == 32
    assert len(small_catalog.entity_relation("accidents")) == SMALL_SPEC.accidents
    for relation in work.entity_relations().values():
        assert relation._spatial_index is not None
    # shared layers reuse the base catalog's relation objects
    assert work.entity_relation("roads") is small_catalog.entity_relation("roads")


# -- scenario programs


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
@pytest.mark.parametrize("mode", ["entity", "relation"])
def test_scenario_programs_validate(small_catalog, scenario, mode):
    program = load_scenario_program(scenario, mode)
    assert qlang.validate(program, mode, small_catalog) == []


def test_scenario_table():
    assert sorted(SCENARIOS) == [1, 2, 3, 4]
    for k, spec in SCENARIOS.items():
        assert spec.number == k
        assert len(spec.entity_vars) == len(spec.relation_cols)
        assert spec.oracle is ORACLES[k]


def test_relation_iter_uses_relation_program():
    a = load_scenario_program(2, "relation")
    b = load_scenario_program(2, "relation-iter")
    assert a == b


# -- run_scenario


def test_run_scenario_fields(small_catalog):
    result = run_scenario(small_catalog, 1, "relation", n=32, runs=3, seed=1)
    assert result.scenario == 1 and result.mode == "relation" and result.n == 32
    assert len(result.times) == 3
    assert all(t > 0 for t in result.times)
    assert result.result_rows == len(result.result_set)
    assert result.index_probes > 0
    assert "near_relational" in [name for name, _ in result.goal_probes]
    assert result.mean == pytest.approx(sum(result.times) / 3)
    assert result.median == sorted(result.times)[1]


def test_run_scenario_entity_mode_has_no_goal_probes(small_catalog):
    result = run_scenario(small_catalog, 1, "entity", n=32, runs=1, seed=1)
    assert result.goal_probes == ()
    assert result.result_rows >= 0


def test_run_scenario_does_not_pollute_catalog(small_catalog):
    names_before = set(small_catalog.relationship_relations())
    run_scenario(small_catalog, 1, "relation", n=16, runs=2, seed=1)
    assert set(small_catalog.relationship_relations()) == names_before


def test_run_scenario_rejects_bad_arguments(small_catalog):
    with pytest.raises(ValueError, match="unknown mode"):
        run_scenario(small_catalog, 1, "both", n=16)
    with pytest.raises(ValueError, match="at least 1"):
        run_scenario(small_catalog, 1, "entity", n=16, runs=0)


def test_modes_agree_on_sample(small_catalog):
    sets = {
        mode: run_scenario(small_catalog, 1, mode, n=48, runs=1, seed=2).result_set
        for mode in MODES
    }
    assert sets["entity"] == sets["relation"] == sets["relation-iter"]
    assert len(sets["entity"]) > 0  # calibration keeps this non-trivial


# -- verification


@pytest.mark.parametrize("scenario", [1, 2, 3, 4])
def test_verify_scenario_passes(small_catalog, scenario):
    verify_scenario(small_catalog, scenario, n=48, seed=6)


def test_compare_sets_message():
    with pytest.raises(VerificationError) as info:
        bench._compare_sets(
            2, 64, "entity vs oracle",
            {(1, 2), (3, 4)}, {(1, 2), (5, 6)},
        )
    message = str(info.value)
    assert "scenario 2 n=64" in message
    assert "missing e.g. [(3, 4)]" in message
    assert "unexpected e.g. [(5, 6)]" in message


# -- sweep and CSV


def test_scaling_sweep_order(small_catalog):
    results = scaling_sweep(
        small_catalog, scenarios=(1, 4), sizes=(16, 32), runs=1,
        modes=("entity", "relation"),
    )
    key = [(r.scenario, r.n, r.mode) for r in results]
    assert key == [
        (1, 16, "entity"), (1, 16, "relation"),
        (1, 32, "entity"), (1, 32, "relation"),
        (4, 16, "entity"), (4, 16, "relation"),
        (4, 32, "entity"), (4, 32, "relation"),
    ]


def fake_result(scenario=1, mode="entity", n=8, times=(0.5, 0.25)):
    return BenchResult(
        scenario=scenario, mode=mode, n=n, times=tuple(times),
        result_rows=3, index_probes=11, distance_evals=29,
        goal_probes=(), result_set=frozenset(),
    )


def test_write_sweep_csv_format():
    stream = io.StringIO()
    write_sweep_csv([fake_result(), fake_result(mode="relation-iter")], stream)
    rows = list(csv.reader(io.StringIO(stream.getvalue())))
    assert rows[0] == [
        "scenario", "mode", "n", "run_1", "run_2",
        "mean", "median", "result_rows", "index_probes", "distance_evals",
    ]
    assert rows[1] == [
        "1", "entity", "8", "0.500000", "0.250000",
        "0.375000", "0.375000", "3", "11", "29",
    ]
    assert rows[2][1] == "relation-iter"


def test_write_sweep_csv_rejects_ragged_runs():
    with pytest.raises(ValueError, match="same run count"):
        write_sweep_csv([fake_result(), fake_result(times=(0.1,))], io.StringIO())


def test_write_sweep_csv_empty_is_noop():
    stream = io.StringIO()
    write_sweep_csv([], stream)
    assert stream.getvalue() == ""


def test_defaults():
    assert bench.DEFAULT_SEED == 42
    assert bench.DEFAULT_RUNS == 10
    assert DEFAULT_SIZES == (128, 256, 512, 1024, 2048, 4096, 8192)
    assert MODES == ("entity", "relation", "relation-iter")
    assert bench.VERIFY_MAX_N == 512
