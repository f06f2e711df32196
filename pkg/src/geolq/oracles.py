"""Brute-force reference results for the four benchmark scenarios.

Everything here is deliberately naive: plain nested loops over whole
relations and direct shape-to-shape distance calls. No spatial index, no
goal machinery, no shared evaluation code beyond the geometry primitives.
The bench harness and the acceptance tests compare both engines against
these functions, so they must stay independent of the engines.

Thresholds are restated locally on purpose; if an engine constant drifted,
these scans would catch it.
"""

from __future__ import annotations

from .geometry import distance
from .store import Catalog

NEAR = 100.0
CLOSEBY = 10.0


def _typed(catalog: Catalog, relation_name: str, type_name: str) -> list:
    spec = catalog.type_spec(type_name)
    return [e for e in catalog.entity_relation(relation_name) if spec.matches(e.osm_code)]


def scenario_1(catalog: Catalog) -> set:
    """(accident, crossing) pairs within 100 m."""
    accidents = catalog.entity_relation("accidents")
    crossings = _typed(catalog, "traffic", "crossing_features")
    return {
        (a.key.id, t.key.id)
        for a in accidents
        for t in crossings
        if distance(a.shape, t.shape) <= NEAR
    }


def scenario_2(catalog: Catalog) -> set:
    """(accident, road, traffic) triples: both entities within 10 m of the road."""
    accidents = catalog.entity_relation("accidents")
    roads = catalog.entity_relation("roads")
    traffic = catalog.entity_relation("traffic")
    acc_road = [
        (a.key.id, r.key.id)
        for a in accidents
        for r in roads
        if distance(a.shape, r.shape) <= CLOSEBY
    ]
    on_road: dict[int, list[int]] = {}
    for t in traffic:
        for r in roads:
            if distance(t.shape, r.shape) <= CLOSEBY:
                on_road.setdefault(r.key.id, []).append(t.key.id)
    return {
        (acc, road, t)
        for acc, road in acc_road
        for t in on_road.get(road, ())
    }


def scenario_3(catalog: Catalog) -> set:
    """(accident, poi, school) triples chained by two 100 m hops."""
    accidents = catalog.entity_relation("accidents")
    pois = catalog.entity_relation("pois")
    schools = _typed(catalog, "pois", "school_features")
    acc_poi = [
        (a.key.id, p.key.id)
        for a in accidents
        for p in pois
        if distance(a.shape, p.shape) <= NEAR
    ]
    hit_pois = sorted({p for _, p in acc_poi})
    poi_by_id = {p.key.id: p for p in pois}
    near_schools: dict[int, list[int]] = {}
    for pid in hit_pois:
        for s in schools:
            if s.key.id != pid and distance(poi_by_id[pid].shape, s.shape) <= NEAR:
                near_schools.setdefault(pid, []).append(s.key.id)
    return {
        (acc, pid, school)
        for acc, pid in acc_poi
        for school in near_schools.get(pid, ())
    }


def scenario_4(catalog: Catalog) -> set:
    """(accident, crossing) pairs where the crossing has no signal within 100 m."""
    accidents = catalog.entity_relation("accidents")
    crossings = _typed(catalog, "traffic", "crossing_features")
    signals = _typed(catalog, "traffic", "traffic_signal_features")
    signalled = {
        c.key.id
        for c in crossings
        for s in signals
        if distance(c.shape, s.shape) <= NEAR
    }
    return {
        (a.key.id, c.key.id)
        for a in accidents
        for c in crossings
        if c.key.id not in signalled and distance(a.shape, c.shape) <= NEAR
    }


ORACLES = {1: scenario_1, 2: scenario_2, 3: scenario_3, 4: scenario_4}
