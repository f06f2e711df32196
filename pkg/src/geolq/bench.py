"""Synthetic data generation and the four-scenario scaling harness.

The harness compares three evaluation modes on the same data:

* "entity": tuple-at-a-time backtracking (engine_entity),
* "relation": set-at-a-time materialization (engine_relation.run),
* "relation-iter": set-at-a-time plus a row-by-row iterator over the final
  relation, which models consuming the result one tuple at a time.

A dataset is one catalog holding four layers: accidents (points), traffic
(points carrying OSM codes for crossings and signals), roads (short
polylines), and pois (points, some carrying the school code). Each timed
run works on a catalog fork whose "accidents" relation is replaced by a
seeded sample of size n, so scaling is driven purely by the accident count.

Timing covers query evaluation only: base-layer indexes are built before
the timed region, while each mode pays for its own intermediate relations
(including their indexes) inside it, and intermediates are dropped again
between runs.
"""

from __future__ import annotations

import gc
import random
import statistics
import time
from dataclasses import dataclass, fields
from importlib import resources
from typing import Iterable, TextIO

from . import engine_entity, engine_relation, qlang
from .errors import CatalogError, LoadError, VerificationError
from .instrument import Counters
from .oracles import ORACLES
from .spatial_index import ensure_index
from .store import Catalog, Entity, EntityKey, EntityRelation
from .geometry import Point, Polyline

DEFAULT_SEED = 42
DEFAULT_RUNS = 10
DEFAULT_SIZES = (128, 256, 512, 1024, 2048, 4096, 8192)
MODES = ("entity", "relation", "relation-iter")

# Oracle comparison is O(n^2); past this sample size --verify checks only
# cross-mode agreement.
VERIFY_MAX_N = 512

CROSSING_CODE = 5204
SIGNAL_CODE = 5201
OTHER_TRAFFIC_CODE = 5299
SCHOOL_CODE = 2082
# plain POI codes, outside the school and education ranges
POI_CODES = (2001, 2006, 2301, 2501, 2590, 2725)

# road polylines walk from a uniform start point in steps of this length
ROAD_STEP_MIN = 80.0
ROAD_STEP_MAX = 170.0


@dataclass(frozen=True)
class DatasetSpec:
    """Layer sizes and extent for one synthetic dataset.

    The defaults are calibrated so that, under uniform placement, every
    scenario produces non-trivial result sets and the entity engine issues
    at least as many index probes as the relational engine at every sample
    size the harness uses (the margin at n=64 is several standard
    deviations). They are calibration choices, not claims about any real
    dataset.
    """

    seed: int = DEFAULT_SEED
    width: float = 2000.0
    height: float = 2000.0
    accidents: int = 10000
    crossings: int = 400
    signals: int = 20
    other_traffic: int = 20
    roads: int = 7200
    pois: int = 1110
    schools: int = 90
    road_vertices_min: int = 2
    road_vertices_max: int = 4

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise CatalogError("extent must be positive")
        for f in fields(self):
            if f.type == "int" and f.name != "seed" and getattr(self, f.name) < 0:
                raise CatalogError(f"{f.name} must be non-negative")
        if not 2 <= self.road_vertices_min <= self.road_vertices_max:
            raise CatalogError("road vertex range must satisfy 2 <= min <= max")


def parse_dataset_spec(text: str, source=None) -> DatasetSpec:
    """Parse the key=value dataset spec format ('#' comments allowed)."""
    known = {f.name: f for f in fields(DatasetSpec)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise LoadError("expected 'key = value'", source=source, line=lineno)
        key, _, rhs = line.partition("=")
        key = key.strip()
        f = known.get(key)
        if f is None:
            raise LoadError(f"unknown key '{key}'", source=source, line=lineno)
        caster = float if f.type == "float" else int
        try:
            values[key] = caster(rhs.strip())
        except ValueError:
            raise LoadError(
                f"bad value {rhs.strip()!r} for '{key}'", source=source, line=lineno
            ) from None
    try:
        return DatasetSpec(**values)
    except CatalogError as exc:
        raise LoadError(str(exc), source=source) from None


def format_dataset_spec(spec: DatasetSpec) -> str:
    lines = [f"{f.name} = {getattr(spec, f.name)!r}" for f in fields(spec)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Generation

def _rng(seed: int, layer: str) -> random.Random:
    # string seeding hashes with sha512, stable across platforms
    return random.Random(f"{seed}:{layer}")


def _points(rng: random.Random, count: int, spec: DatasetSpec) -> list[Point]:
    return [
        Point(rng.uniform(0.0, spec.width), rng.uniform(0.0, spec.height))
        for _ in range(count)
    ]


def _road(rng: random.Random, spec: DatasetSpec) -> Polyline:
    import math

    x = rng.uniform(0.0, spec.width)
    y = rng.uniform(0.0, spec.height)
    vertices = [(x, y)]
    for _ in range(rng.randint(spec.road_vertices_min, spec.road_vertices_max) - 1):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        step = rng.uniform(ROAD_STEP_MIN, ROAD_STEP_MAX)
        x += step * math.cos(angle)
        y += step * math.sin(angle)
        vertices.append((x, y))
    return Polyline(tuple(vertices))


def generate(spec: DatasetSpec, catalog: Catalog | None = None) -> Catalog:
    """Register the four synthetic layers; deterministic per spec.

    Each layer draws from its own seeded generator, so changing one layer's
    count leaves the other layers bit-identical. Traffic ids are assigned
    crossings first, then signals, then the rest; school POIs follow the
    plain ones. Road polylines may wander slightly past the extent.
    """
    catalog = catalog if catalog is not None else Catalog()

    rng = _rng(spec.seed, "accidents")
    accidents = [
        Entity(EntityKey("accidents", i), p)
        for i, p in enumerate(_points(rng, spec.accidents, spec))
    ]
    catalog.register_entities(EntityRelation("accidents", accidents))

    rng = _rng(spec.seed, "traffic")
    codes = (
        [CROSSING_CODE] * spec.crossings
        + [SIGNAL_CODE] * spec.signals
        + [OTHER_TRAFFIC_CODE] * spec.other_traffic
    )
    traffic = [
        Entity(EntityKey("traffic", i), p, code)
        for i, (p, code) in enumerate(zip(_points(rng, len(codes), spec), codes))
    ]
    catalog.register_entities(EntityRelation("traffic", traffic))

    rng = _rng(spec.seed, "roads")
    roads = [
        Entity(EntityKey("roads", i), _road(rng, spec)) for i in range(spec.roads)
    ]
    catalog.register_entities(EntityRelation("roads", roads))

    rng = _rng(spec.seed, "pois")
    poi_codes = [POI_CODES[i % len(POI_CODES)] for i in range(spec.pois)]
    poi_codes += [SCHOOL_CODE] * spec.schools
    pois = [
        Entity(EntityKey("pois", i), p, code)
        for i, (p, code) in enumerate(zip(_points(rng, len(poi_codes), spec), poi_codes))
    ]
    catalog.register_entities(EntityRelation("pois", pois))
    return catalog


def sample_accidents(catalog: Catalog, n: int, seed: int) -> EntityRelation:
    """Uniform sample without replacement from the accidents layer.

    Returns an unregistered relation named "accidents" (members in id
    order) meant to override the full layer in a catalog fork.
    """
    source = catalog.entity_relation("accidents")
    if n < 0:
        raise CatalogError(f"sample size {n} is negative")
    if n > len(source):
        raise CatalogError(
            f"sample size {n} exceeds the accidents layer ({len(source)} members)"
        )
    rng = _rng(seed, f"sample:{n}")
    picked = sorted(rng.sample(range(len(source)), n))
    return EntityRelation("accidents", [source.members[i] for i in picked])


# ---------------------------------------------------------------------------
# Scenarios

@dataclass(frozen=True)
class ScenarioSpec:
    number: int
    title: str
    entity_vars: tuple
    relation_cols: tuple

    @property
    def oracle(self):
        return ORACLES[self.number]


SCENARIOS = {
    1: ScenarioSpec(1, "accidents near crossings", ("AccidentID", "TrafficID"), ("id1", "id2")),
    2: ScenarioSpec(
        2,
        "accidents and traffic on the same road",
        ("AccidentID", "RoadID", "TrafficID"),
        ("Acc", "Road", "Traffic"),
    ),
    3: ScenarioSpec(
        3,
        "accidents near POIs near schools",
        ("AccidentID", "Pois1", "Pois2"),
        ("Acc", "Poi", "School"),
    ),
    4: ScenarioSpec(
        4,
        "accidents near crossings without signals",
        ("AccidentID", "Traffic"),
        ("Acc", "Crossing"),
    ),
}


def load_scenario_program(scenario: int, mode: str) -> qlang.Program:
    kind = "entity" if mode == "entity" else "relation"
    name = f"{kind}_q{scenario}.glq"
    text = resources.files("geolq").joinpath(f"scenarios/{name}").read_text("utf-8")
    return qlang.parse(text)


def _relation_result_set(relation, cols) -> frozenset:
    idx = [relation.column(c) for c in cols]
    return frozenset(tuple(row[i] for i in idx) for row in relation.tuples)


@dataclass(frozen=True)
class BenchResult:
    scenario: int
    mode: str
    n: int
    times: tuple  # seconds per run
    result_rows: int
    index_probes: int
    distance_evals: int
    goal_probes: tuple  # (predicate, probes) per goal; relation modes only
    result_set: frozenset

    @property
    def mean(self) -> float:
        return statistics.fmean(self.times)

    @property
    def median(self) -> float:
        return statistics.median(self.times)


def prepare_run_catalog(catalog: Catalog, n: int, seed: int) -> Catalog:
    """Fork the catalog with a seeded accident sample and warm all indexes."""
    work = catalog.fork({"accidents": sample_accidents(catalog, n, seed)})
    for relation in work.entity_relations().values():
        ensure_index(relation)
    return work


def _evaluate_once(work, spec, mode: str, query, counters: Counters):
    """Run one timed evaluation; return (elapsed, rows, result_set, outcome).

    The cyclic garbage collector is paused around the timed region so a
    collection triggered by a prior run's garbage does not land inside
    someone else's measurement.
    """
    gc_was_enabled = gc.isenabled()
    if gc_was_enabled:
        gc.collect()
        gc.disable()
    try:
        if mode == "entity":
            start = time.perf_counter()
            solutions = engine_entity.solve(work, query, counters)
            elapsed = time.perf_counter() - start
            result_set = frozenset(
                tuple(sol[v] for v in spec.entity_vars) for sol in solutions
            )
            return elapsed, len(solutions), result_set, None
        if mode == "relation":
            start = time.perf_counter()
            outcome = engine_relation.run(work, query, counters)
            elapsed = time.perf_counter() - start
        else:
            start = time.perf_counter()
            stream = engine_relation.run_with_iteration(work, query, counters)
            while True:
                try:
                    next(stream)
                except StopIteration as stop:
                    outcome = stop.value
                    break
            elapsed = time.perf_counter() - start
        result_set = _relation_result_set(outcome.final, spec.relation_cols)
        return elapsed, len(outcome.final), result_set, outcome
    finally:
        if gc_was_enabled:
            gc.enable()


def run_scenario(
    catalog: Catalog,
    scenario: int,
    mode: str,
    n: int,
    runs: int = DEFAULT_RUNS,
    seed: int = DEFAULT_SEED,
) -> BenchResult:
    """Time one scenario/mode `runs` times on the same accident sample.

    An untimed warmup evaluation precedes the timed runs so allocator and
    index cache effects from setup do not skew the first measurement.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if runs < 1:
        raise ValueError("runs must be at least 1")
    spec = SCENARIOS[scenario]
    work = prepare_run_catalog(catalog, n, seed)
    program = load_scenario_program(scenario, mode)
    qlang.validate(program, "entity" if mode == "entity" else "relation", work)
    query = qlang.expand_rules(program)

    times = []
    counters = Counters()
    result_set: frozenset = frozenset()
    result_rows = 0
    goal_probes: tuple = ()
    for attempt in range(runs + 1):
        counters = Counters()
        elapsed, result_rows, result_set, outcome = _evaluate_once(
            work, spec, mode, query, counters
        )
        if outcome is not None:
            goal_probes = outcome.goal_probes
            engine_relation.drop_intermediates(work, outcome)
        if attempt > 0:
            times.append(elapsed)

    return BenchResult(
        scenario=scenario,
        mode=mode,
        n=n,
        times=tuple(times),
        result_rows=result_rows,
        index_probes=counters.index_probes,
        distance_evals=counters.distance_evals,
        goal_probes=goal_probes,
        result_set=result_set,
    )


def verify_scenario(
    catalog: Catalog,
    scenario: int,
    n: int,
    seed: int = DEFAULT_SEED,
) -> None:
    """Assert cross-mode agreement, and oracle agreement for n <= 512.

    Raises VerificationError carrying a sample of the differing rows.
    """
    results = {
        mode: run_scenario(catalog, scenario, mode, n, runs=1, seed=seed)
        for mode in MODES
    }
    baseline = results["entity"]
    for mode in MODES[1:]:
        _compare_sets(
            scenario, n,
            f"entity vs {mode}",
            baseline.result_set,
            results[mode].result_set,
        )
        if results[mode].result_rows != baseline.result_rows:
            raise VerificationError(
                f"scenario {scenario} n={n}: result cardinality differs: "
                f"entity={baseline.result_rows}, {mode}={results[mode].result_rows}"
            )
    if n <= VERIFY_MAX_N:
        work = prepare_run_catalog(catalog, n, seed)
        expected = SCENARIOS[scenario].oracle(work)
        _compare_sets(scenario, n, "entity vs oracle", expected, baseline.result_set)


def _compare_sets(scenario, n, label, expected, actual, sample=5):
    if expected == actual:
        return
    missing = sorted(expected - actual)[:sample]
    extra = sorted(actual - expected)[:sample]
    raise VerificationError(
        f"scenario {scenario} n={n}: {label} mismatch "
        f"({len(expected)} vs {len(actual)} rows); "
        f"missing e.g. {missing}, unexpected e.g. {extra}"
    )


# ---------------------------------------------------------------------------
# Sweep

def scaling_sweep(
    catalog: Catalog,
    scenarios: Iterable[int] = (1, 2, 3, 4),
    sizes: Iterable[int] = DEFAULT_SIZES,
    seed: int = DEFAULT_SEED,
    runs: int = DEFAULT_RUNS,
    modes: Iterable[str] = MODES,
) -> list[BenchResult]:
    """One BenchResult per (scenario, size, mode), sizes ascending."""
    out = []
    for scenario in scenarios:
        for n in sizes:
            for mode in modes:
                out.append(run_scenario(catalog, scenario, mode, n, runs, seed))
    return out


def write_sweep_csv(results: list[BenchResult], stream: TextIO) -> None:
    """Delimited output: one row per BenchResult, times in seconds."""
    import csv as _csv

    if not results:
        return
    runs = len(results[0].times)
    if any(len(r.times) != runs for r in results):
        raise ValueError("all results must have the same run count")
    writer = _csv.writer(stream)
    writer.writerow(
        ["scenario", "mode", "n"]
        + [f"run_{i}" for i in range(1, runs + 1)]
        + ["mean", "median", "result_rows", "index_probes", "distance_evals"]
    )
    for r in results:
        writer.writerow(
            [r.scenario, r.mode, r.n]
            + [f"{t:.6f}" for t in r.times]
            + [
                f"{r.mean:.6f}",
                f"{r.median:.6f}",
                r.result_rows,
                r.index_probes,
                r.distance_evals,
            ]
        )
