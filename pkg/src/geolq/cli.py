"""Command-line interface: generate, load, query, bench.

geolq generate  write synthetic layers as CSV files
geolq load      load layers, build indexes, write a session manifest
geolq query     evaluate a .glq file in one of the three modes
geolq bench     run the scaling harness, emit CSV and optional figures

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
failure. A session is a plain-text manifest naming the layer files; no
binary state is persisted and indexes are rebuilt on load.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import shlex
import sys

from . import bench, engine_entity, engine_relation, qlang
from .errors import GlqError, LoadError, VerificationError
from .geometry import Point
from .instrument import Counters
from .spatial_index import ensure_index
from .store import (
    Catalog,
    EntityRelation,
    load_entities_csv,
    load_entities_geojson,
    parse_type_config,
    shape_to_geojson,
    shape_to_wkt,
)

MODES = bench.MODES


class _ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# generate

def _write_layer_csv(relation: EntityRelation, path: str, with_code: bool) -> None:
    points = all(isinstance(e.shape, Point) for e in relation)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = ["id"] + (["x", "y"] if points else ["wkt"])
        if with_code:
            header.append("code")
        writer.writerow(header)
        for e in relation:
            if points:
                row = [e.key.id, repr(e.shape.x), repr(e.shape.y)]
            else:
                row = [e.key.id, shape_to_wkt(e.shape)]
            if with_code:
                row.append("" if e.osm_code is None else e.osm_code)
            writer.writerow(row)


def cmd_generate(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as handle:
            spec = bench.parse_dataset_spec(handle.read(), source=args.spec)
    else:
        spec = bench.DatasetSpec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    catalog = bench.generate(spec)
    os.makedirs(args.out, exist_ok=True)
    coded = {"traffic", "pois"}
    for name in ("accidents", "traffic", "roads", "pois"):
        relation = catalog.entity_relation(name)
        path = os.path.join(args.out, f"{name}.csv")
        _write_layer_csv(relation, path, with_code=name in coded)
        print(f"wrote {path} ({len(relation)} rows)")
    cfg = os.path.join(args.out, "dataset.cfg")
    with open(cfg, "w", encoding="utf-8") as handle:
        handle.write(bench.format_dataset_spec(spec))
    print(f"wrote {cfg}")
    return 0


# ---------------------------------------------------------------------------
# sessions

def _parse_layer_arg(value: str, flag: str) -> tuple[str, str]:
    path, sep, category = value.rpartition(":")
    if not sep or not path or not category:
        raise LoadError(f"{flag} expects PATH:CATEGORY, got {value!r}")
    return path, category


def _write_session(path, types_path, layers) -> None:
    """layers: list of (category, format, abs path, lonlat, count)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("# geolq session\n")
        handle.write(f"types {shlex.quote(types_path or 'default')}\n")
        for category, fmt, layer_path, lonlat, count in layers:
            handle.write(
                f"layer {shlex.quote(category)} {fmt} {shlex.quote(layer_path)} "
                f"lonlat={int(lonlat)} count={count}\n"
            )


def _load_layer(catalog, fmt, path, category, lonlat):
    if fmt == "csv":
        return load_entities_csv(catalog, path, category, lonlat=lonlat)
    return load_entities_geojson(catalog, path, category, lonlat=lonlat)


def load_session(path) -> Catalog:
    """Rebuild a catalog (indexes included) from a session manifest."""
    entries = []
    types_path = None
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = shlex.split(line)
            if parts[0] == "types" and len(parts) == 2:
                types_path = None if parts[1] == "default" else parts[1]
                continue
            if parts[0] == "layer" and len(parts) == 6:
                category, fmt, layer_path = parts[1], parts[2], parts[3]
                try:
                    lonlat = bool(int(parts[4].removeprefix("lonlat=")))
                    count = int(parts[5].removeprefix("count="))
                except ValueError:
                    raise LoadError("bad layer line", source=str(path), line=lineno) from None
                entries.append((category, fmt, layer_path, lonlat, count))
                continue
            raise LoadError(f"bad session line {line!r}", source=str(path), line=lineno)
    specs = None
    if types_path is not None:
        with open(types_path, encoding="utf-8") as handle:
            specs = parse_type_config(handle.read(), source=types_path)
    catalog = Catalog(type_specs=specs)
    for category, fmt, layer_path, lonlat, count in entries:
        relation = _load_layer(catalog, fmt, layer_path, category, lonlat)
        if len(relation) != count:
            raise LoadError(
                f"layer '{category}': expected {count} entities per the session "
                f"manifest, found {len(relation)}",
                source=layer_path,
            )
        ensure_index(relation)
    return catalog


def cmd_load(args) -> int:
    inputs = [("csv",) + _parse_layer_arg(v, "--csv") for v in args.csv or []]
    inputs += [("geojson",) + _parse_layer_arg(v, "--geojson") for v in args.geojson or []]
    if not inputs:
        raise LoadError("nothing to load: pass --csv and/or --geojson")
    specs = None
    types_path = os.path.abspath(args.types) if args.types else None
    if types_path:
        with open(types_path, encoding="utf-8") as handle:
            specs = parse_type_config(handle.read(), source=types_path)
    catalog = Catalog(type_specs=specs)
    layers = []
    for fmt, path, category in inputs:
        relation = _load_layer(catalog, fmt, path, category, args.lonlat)
        ensure_index(relation)
        layers.append((category, fmt, os.path.abspath(path), args.lonlat, len(relation)))
        print(f"loaded {category}: {len(relation)} entities from {path}")
    _write_session(args.session, types_path, layers)
    print(f"wrote session {args.session}")
    return 0


# ---------------------------------------------------------------------------
# query

def _evaluate(catalog, program, mode, counters):
    """Returns (schema, rows) where rows is a list of value lists."""
    query = qlang.expand_rules(program)
    if mode == "entity":
        # report the directive's own variables; rule locals are witnesses
        variables = qlang.query_variables(program.queries[0])
        solutions = engine_entity.solve(catalog, query, counters)
        return variables, [[sol[v] for v in variables] for sol in solutions]
    if mode == "relation":
        outcome = engine_relation.run(catalog, query, counters)
        final = outcome.final
        if isinstance(final, EntityRelation):
            return ["id"], [[e.key.id] for e in final]
        return list(final.schema), [list(row) for row in final.tuples]
    stream = engine_relation.run_with_iteration(catalog, query, counters)
    rows = []
    schema = None
    while True:
        try:
            item = next(stream)
        except StopIteration as stop:
            outcome = stop.value
            break
        if schema is None:
            schema = list(item)
        rows.append([item[k] for k in schema])
    if schema is None:
        final = outcome.final
        schema = ["id"] if isinstance(final, EntityRelation) else list(final.schema)
    return schema, rows


def _write_rows(schema, rows, handle) -> None:
    writer = csv.writer(handle)
    writer.writerow(schema)
    writer.writerows(rows)


def _export_geojson(catalog, schema, rows, select, path) -> None:
    column, sep, category = select.partition("=")
    if not sep or not column or not category:
        raise LoadError(f"--select expects COLUMN=CATEGORY, got {select!r}")
    if column not in schema:
        raise LoadError(f"--select column '{column}' not in result schema {schema}")
    idx = schema.index(column)
    relation = catalog.entity_relation(category)
    features = []
    for entity_id in sorted({row[idx] for row in rows}):
        entity = relation.get(entity_id)
        features.append(
            {
                "type": "Feature",
                "id": entity_id,
                "geometry": shape_to_geojson(entity.shape),
                "properties": {
                    "category": category,
                    "id": entity_id,
                    "osm_code": entity.osm_code,
                },
            }
        )
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({"type": "FeatureCollection", "features": features}, handle)


def cmd_query(args) -> int:
    if args.select and not args.out:
        raise LoadError("--select requires --out")
    catalog = load_session(args.session)
    with open(args.query, encoding="utf-8") as handle:
        text = handle.read()
    program = qlang.parse(text)
    paradigm = "entity" if args.mode == "entity" else "relation"
    for warning in qlang.validate(program, paradigm, catalog):
        print(f"warning: {warning}", file=sys.stderr)
    counters = Counters()
    schema, rows = _evaluate(catalog, program, args.mode, counters)
    if args.out:
        out_csv = f"{args.out}.csv"
        with open(out_csv, "w", newline="", encoding="utf-8") as handle:
            _write_rows(schema, rows, handle)
        print(f"wrote {out_csv} ({len(rows)} rows)", file=sys.stderr)
        if args.select:
            out_geojson = f"{args.out}.geojson"
            _export_geojson(catalog, schema, rows, args.select, out_geojson)
            print(f"wrote {out_geojson}", file=sys.stderr)
    else:
        _write_rows(schema, rows, sys.stdout)
    if args.stats:
        print(
            f"rows={len(rows)} index_probes={counters.index_probes} "
            f"distance_evals={counters.distance_evals}",
            file=sys.stderr,
        )
    return 0


# ---------------------------------------------------------------------------
# bench

def _plot_sweep(results, out_dir) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    by_scenario: dict[int, dict[str, list]] = {}
    for r in results:
        by_scenario.setdefault(r.scenario, {}).setdefault(r.mode, []).append(
            (r.n, r.mean)
        )
    written = []
    for scenario, series in sorted(by_scenario.items()):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        for mode in MODES:
            if mode not in series:
                continue
            points = sorted(series[mode])
            ax.plot(
                [n for n, _ in points],
                [t for _, t in points],
                marker="o",
                label=mode,
            )
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("accidents (n)")
        ax.set_ylabel("mean seconds")
        ax.set_title(f"scenario {scenario}: {bench.SCENARIOS[scenario].title}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        path = os.path.join(out_dir, f"scenario_{scenario}.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def cmd_bench(args) -> int:
    scenarios = [1, 2, 3, 4] if args.scenario == "all" else [int(args.scenario)]
    try:
        sizes = sorted({int(s) for s in args.sizes.split(",") if s.strip()})
    except ValueError:
        raise LoadError(f"bad --sizes list {args.sizes!r}") from None
    if not sizes:
        raise LoadError("--sizes is empty")
    if sizes[0] < 1:
        raise LoadError("--sizes entries must be positive")

    if args.session:
        catalog = load_session(args.session)
        seed = args.seed if args.seed is not None else bench.DEFAULT_SEED
    else:
        if args.spec:
            with open(args.spec, encoding="utf-8") as handle:
                spec = bench.parse_dataset_spec(handle.read(), source=args.spec)
        else:
            spec = bench.DatasetSpec()
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
        seed = spec.seed
        catalog = bench.generate(spec)

    if args.verify:
        for scenario in scenarios:
            for n in sizes:
                bench.verify_scenario(catalog, scenario, n, seed=seed)
                print(f"verified scenario {scenario} at n={n}", file=sys.stderr)

    results = bench.scaling_sweep(
        catalog, scenarios, sizes, seed=seed, runs=args.runs
    )
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as handle:
            bench.write_sweep_csv(results, handle)
        print(f"wrote {args.out} ({len(results)} rows)", file=sys.stderr)
    else:
        bench.write_sweep_csv(results, sys.stdout)
    if args.plot:
        for path in _plot_sweep(results, args.plot):
            print(f"wrote {path}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="geolq",
        description="Spatio-logical querying over entity and relation paradigms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic layers as CSV")
    p.add_argument("--spec", help="dataset spec file (key=value)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("load", help="load layers and write a session manifest")
    p.add_argument("--csv", action="append", metavar="PATH:CATEGORY")
    p.add_argument("--geojson", action="append", metavar="PATH:CATEGORY")
    p.add_argument("--lonlat", action="store_true",
                   help="treat coordinates as lon/lat degrees and project")
    p.add_argument("--types", help="type spec config (default: built-in)")
    p.add_argument("--session", required=True, help="manifest file to write")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("query", help="evaluate a .glq query file")
    p.add_argument("query", help="query file")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--session", required=True, help="session manifest")
    p.add_argument("--out", help="output prefix (writes PREFIX.csv)")
    p.add_argument("--select", metavar="COLUMN=CATEGORY",
                   help="also write PREFIX.geojson for that column's entities")
    p.add_argument("--stats", action="store_true",
                   help="print instrumentation counters to stderr")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="run the scaling harness")
    p.add_argument("--scenario", default="all", choices=["1", "2", "3", "4", "all"])
    p.add_argument("--sizes", default=",".join(str(s) for s in bench.DEFAULT_SIZES))
    p.add_argument("--runs", type=int, default=bench.DEFAULT_RUNS)
    p.add_argument("--seed", type=int, help="dataset and sampling seed")
    p.add_argument("--verify", action="store_true",
                   help="check cross-mode and oracle agreement first")
    p.add_argument("--out", help="CSV output file (default: stdout)")
    p.add_argument("--plot", metavar="DIR",
                   help="also render log-log scaling figures to DIR")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--spec", help="dataset spec file")
    group.add_argument("--session", help="use a loaded session instead")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GlqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
