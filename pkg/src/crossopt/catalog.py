"""Database catalogs: schemas, foreign keys, statistics and synthetic data.

A :class:`Catalog` is immutable once built. Synthetic catalogs carry their
rows column-major so the reference executor can run queries against them.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import dtypes
from .dtypes import DATA_TYPES, TYPE_WIDTH


class CatalogError(ValueError):
    """Malformed or inconsistent catalog. ``location`` points into the document."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
        self.message = message


@dataclass(frozen=True)
class ColumnStats:
    numNulls: int
    numDistinctVals: int
    avgColSize: float
    maxColSize: int


@dataclass(frozen=True)
class ColumnDef:
    name: str
    dataType: str
    stats: ColumnStats


@dataclass(frozen=True)
class TableStats:
    numRows: int
    avgRowSize: float


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]
    stats: TableStats
    # Column-major values, one tuple per column in ``columns`` order.
    data: tuple[tuple[Any, ...], ...] | None = None

    def column_index(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise KeyError(f"{self.name}.{name}")

    def column(self, name: str) -> ColumnDef:
        return self.columns[self.column_index(name)]

    def rows(self) -> list[tuple]:
        if self.data is None:
            raise ValueError(f"table {self.name} has no materialized data")
        if not self.data:
            return [() for _ in range(self.stats.numRows)]
        return list(zip(*self.data))


@dataclass(frozen=True)
class FkEdge:
    """``src`` (child table.column) references ``dst`` (parent table.column)."""

    src_table: str
    src_column: str
    dst_table: str
    dst_column: str

    def __str__(self) -> str:
        return f"{self.src_table}.{self.src_column} -> {self.dst_table}.{self.dst_column}"


@dataclass(frozen=True)
class Catalog:
    name: str
    tables: tuple[TableDef, ...]
    fk_edges: tuple[FkEdge, ...]
    _by_name: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {t.name: t for t in self.tables})

    def table(self, name: str) -> TableDef:
        try:
            return self._by_name[name]
        except KeyError:
            raise KeyError(f"unknown table {name!r}") from None

    def has_table(self, name: str) -> bool:
        return name in self._by_name

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def fk_between(self, a: str, b: str) -> list[FkEdge]:
        return [e for e in self.fk_edges if {e.src_table, e.dst_table} == {a, b}]

    def has_data(self) -> bool:
        return all(t.data is not None for t in self.tables)


# ---------------------------------------------------------------------------
# statistics


def compute_column_stats(dtype: str, values: Sequence[Any]) -> ColumnStats:
    non_null = [v for v in values if v is not None]
    nulls = len(values) - len(non_null)
    ndv = max(1, len(set(non_null)))
    if dtype == "varchar":
        sizes = [dtypes.value_size(dtype, v) for v in non_null]
        avg = math.fsum(sizes) / len(sizes) if sizes else 0.0
        mx = max(sizes) if sizes else 0
    else:
        avg = float(TYPE_WIDTH[dtype])
        mx = TYPE_WIDTH[dtype]
    return ColumnStats(numNulls=nulls, numDistinctVals=ndv, avgColSize=avg, maxColSize=mx)


def build_table(name: str, columns: Sequence[tuple[str, str]], data: Sequence[Sequence[Any]]) -> TableDef:
    """Build a table from ``(name, dataType)`` pairs and column-major data, computing exact stats."""
    n_rows = len(data[0]) if data else 0
    cols = []
    for (cname, ctype), values in zip(columns, data):
        if len(values) != n_rows:
            raise CatalogError(f"{name}.{cname}", "ragged column data")
        cols.append(ColumnDef(cname, dtypes.check_type(ctype), compute_column_stats(ctype, values)))
    row_size = math.fsum(c.stats.avgColSize for c in cols)
    return TableDef(
        name=name,
        columns=tuple(cols),
        stats=TableStats(numRows=n_rows, avgRowSize=row_size),
        data=tuple(tuple(v) for v in data),
    )


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class CatalogSpec:
    n_tables: int = 5
    rows_per_table: tuple[int, int] = (1000, 10000)
    fk_density: float = 0.0
    type_mix: dict = field(
        default_factory=lambda: {
            "integer": 3.0,
            "float": 1.0,
            "decimal": 1.0,
            "varchar": 2.0,
            "boolean": 0.5,
            "date": 1.0,
            "timestamp": 0.5,
        }
    )
    payload_columns: tuple[int, int] = (2, 6)
    max_null_fraction: float = 0.1
    date_window: tuple[str, str] = ("2015-01-01", "2024-12-31")
    name: str = "synthetic"


_SYLLABLES = (
    "ka", "lo", "mi", "ne", "ru", "ta", "so", "vi", "pe", "do", "gar", "lin", "mor",
    "ber", "tan", "qui", "zel", "fo", "ha", "jun", "wen", "xi", "yo", "bri", "cal",
)


def _word_pool(rng: np.random.Generator, size: int) -> list[str]:
    words: list[str] = []
    seen = set()
    while len(words) < size:
        n = int(rng.integers(1, 4))
        w = "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _zipf_probs(n: int, s: float) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** s
    return p / p.sum()


def _draw_indices(rng: np.random.Generator, domain: int, n: int, zipfian: bool) -> np.ndarray:
    if zipfian:
        return rng.choice(domain, size=n, p=_zipf_probs(domain, 1.1))
    return rng.integers(0, domain, size=n)


def _gen_values(rng: np.random.Generator, dtype: str, n: int, spec: CatalogSpec) -> list:
    zipfian = bool(rng.random() < 0.4)
    if dtype == "integer":
        domain = int(rng.integers(5, 2000))
        offset = int(rng.integers(0, 100))
        vals = [int(v) + offset for v in _draw_indices(rng, domain, n, zipfian)]
    elif dtype == "float":
        mean, sd = float(rng.uniform(-100, 1000)), float(rng.uniform(1, 300))
        vals = [round(float(v), 4) for v in rng.normal(mean, sd, size=n)]
    elif dtype == "decimal":
        hi = float(rng.uniform(10, 10000))
        vals = [round(float(v), 2) for v in rng.uniform(0, hi, size=n)]
    elif dtype == "varchar":
        pool = _word_pool(rng, int(rng.integers(5, 300)))
        vals = [pool[int(i)] for i in _draw_indices(rng, len(pool), n, zipfian)]
    elif dtype == "boolean":
        p = float(rng.uniform(0.1, 0.9))
        vals = [bool(v) for v in rng.random(n) < p]
    elif dtype in ("date", "timestamp"):
        lo = dt.date.fromisoformat(spec.date_window[0])
        hi = dt.date.fromisoformat(spec.date_window[1])
        days = (hi - lo).days
        if dtype == "date":
            vals = [lo + dt.timedelta(days=int(d)) for d in rng.integers(0, days + 1, size=n)]
        else:
            base = dt.datetime(lo.year, lo.month, lo.day)
            secs = rng.integers(0, days * 86400, size=n)
            vals = [base + dt.timedelta(seconds=int(s)) for s in secs]
    else:
        raise ValueError(dtype)
    null_frac = 0.0 if rng.random() < 0.5 else float(rng.uniform(0, spec.max_null_fraction))
    if null_frac > 0:
        mask = rng.random(n) < null_frac
        vals = [None if m else v for v, m in zip(vals, mask)]
    return vals


_ABBREV = {
    "integer": "int", "float": "flt", "decimal": "dec", "varchar": "str",
    "boolean": "flag", "date": "day", "timestamp": "ts",
}


def generate_catalog(spec: CatalogSpec, seed: int) -> Catalog:
    """Generate a synthetic catalog with materialized data; pure in ``(spec, seed)``."""
    lo, hi = spec.rows_per_table
    if spec.n_tables < 2:
        raise CatalogError("spec.n_tables", f"need at least 2 tables, got {spec.n_tables}")
    if lo < 1 or hi < lo:
        raise CatalogError("spec.rows_per_table", f"invalid row range {spec.rows_per_table}")
    if not 0.0 <= spec.fk_density <= 1.0:
        raise CatalogError(
            "spec.fk_density",
            f"fk_density {spec.fk_density} asks for more edges than the "
            f"{spec.n_tables * (spec.n_tables - 1) // 2} available table pairs",
        )
    weights = {k: float(v) for k, v in spec.type_mix.items() if v > 0}
    for k in weights:
        dtypes.check_type(k)
    if not weights:
        raise CatalogError("spec.type_mix", "no positive type weights")
    pc_lo, pc_hi = spec.payload_columns
    if pc_lo < 0 or pc_hi < pc_lo:
        raise CatalogError("spec.payload_columns", f"invalid range {spec.payload_columns}")

    rng = np.random.default_rng(seed)
    n = spec.n_tables
    names = [f"t{i}" for i in range(n)]
    sizes = [int(round(math.exp(rng.uniform(math.log(lo), math.log(hi))))) for _ in range(n)]
    sizes = [min(max(s, lo), hi) for s in sizes]

    # spanning tree keeps the fk graph connected; extras come from remaining pairs
    pairs = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    tree = set(pairs)
    rest = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in tree]
    n_extra = int(round(spec.fk_density * len(rest)))
    if n_extra:
        pick = sorted(int(k) for k in rng.choice(len(rest), size=n_extra, replace=False))
        pairs += [rest[k] for k in pick]

    type_names = sorted(weights)
    probs = np.array([weights[t] for t in type_names])
    probs = probs / probs.sum()

    tables = []
    edges = []
    for ti, tname in enumerate(names):
        rows = sizes[ti]
        cols: list[tuple[str, str]] = [("id", "integer")]
        data: list[list] = [list(range(1, rows + 1))]
        for parent, child in pairs:
            if child != ti:
                continue
            pname = names[parent]
            cols.append((f"{pname}_id", "integer"))
            data.append([int(v) + 1 for v in _draw_indices(rng, sizes[parent], rows, rng.random() < 0.5)])
            edges.append(FkEdge(tname, f"{pname}_id", pname, "id"))
        n_payload = int(rng.integers(pc_lo, pc_hi + 1))
        for k in range(n_payload):
            ctype = type_names[int(rng.choice(len(type_names), p=probs))]
            cols.append((f"{_ABBREV[ctype]}{k}", ctype))
            data.append(_gen_values(rng, ctype, rows, spec))
        tables.append(build_table(tname, cols, data))
    edges.sort(key=lambda e: (names.index(e.src_table), e.src_column))
    return Catalog(name=spec.name, tables=tuple(tables), fk_edges=tuple(edges))


# ---------------------------------------------------------------------------
# validation


def validate_catalog(cat: Catalog) -> None:
    """Raise :class:`CatalogError` on the first violated invariant."""
    seen = set()
    for ti, t in enumerate(cat.tables):
        loc = f"tables[{ti}]"
        if t.name in seen:
            raise CatalogError(loc, f"duplicate table name {t.name!r}")
        seen.add(t.name)
        cnames = set()
        n = t.stats.numRows
        if n < 0:
            raise CatalogError(f"{loc}.stats", "numRows < 0")
        for ci, c in enumerate(t.columns):
            cloc = f"{loc}.columns[{ci}]"
            if c.name in cnames:
                raise CatalogError(cloc, f"duplicate column name {c.name!r} in table {t.name}")
            cnames.add(c.name)
            if c.dataType not in DATA_TYPES:
                raise CatalogError(cloc, f"unknown dataType {c.dataType!r}")
            s = c.stats
            if s.numNulls < 0 or s.numNulls > n:
                raise CatalogError(f"{cloc}.stats", f"numNulls {s.numNulls} exceeds numRows {n}")
            if s.numDistinctVals < 1 or s.numDistinctVals > n - s.numNulls + 1:
                raise CatalogError(
                    f"{cloc}.stats", f"numDistinctVals {s.numDistinctVals} outside [1, {n - s.numNulls + 1}]"
                )
            if s.avgColSize < 0 or s.avgColSize > s.maxColSize:
                raise CatalogError(f"{cloc}.stats", f"avgColSize {s.avgColSize} > maxColSize {s.maxColSize}")
        total = math.fsum(c.stats.avgColSize for c in t.columns)
        if abs(total - t.stats.avgRowSize) > 1.0:
            raise CatalogError(f"{loc}.stats", f"avgRowSize {t.stats.avgRowSize} != column sum {total}")
        if t.data is not None:
            if len(t.data) != len(t.columns):
                raise CatalogError(f"{loc}.data", "column count mismatch")
            for ci, (c, values) in enumerate(zip(t.columns, t.data)):
                if len(values) != n:
                    raise CatalogError(f"{loc}.data[{ci}]", f"{len(values)} rows but numRows is {n}")
                for ri, v in enumerate(values):
                    if not dtypes.is_valid_value(c.dataType, v):
                        raise CatalogError(f"{loc}.data[{ci}][{ri}]", f"{v!r} is not a valid {c.dataType}")

    for ei, e in enumerate(cat.fk_edges):
        loc = f"fk_edges[{ei}]"
        try:
            src = cat.table(e.src_table).column(e.src_column)
            dst_table = cat.table(e.dst_table)
            dst = dst_table.column(e.dst_column)
        except KeyError as exc:
            raise CatalogError(loc, f"edge {e} references missing column {exc.args[0]}") from None
        if not dtypes.comparable(src.dataType, dst.dataType):
            raise CatalogError(loc, f"edge {e} joins incompatible types {src.dataType}/{dst.dataType}")
        if dst.stats.numNulls != 0 or dst.stats.numDistinctVals != dst_table.stats.numRows:
            raise CatalogError(loc, f"edge {e} target is not a key column")
        src_t = cat.table(e.src_table)
        if src_t.data is not None and dst_table.data is not None:
            keys = set(dst_table.data[dst_table.column_index(e.dst_column)])
            vals = src_t.data[src_t.column_index(e.src_column)]
            if any(v is not None and v not in keys for v in vals):
                raise CatalogError(loc, f"edge {e} violates referential integrity")

    if len(cat.tables) > 1:
        adj: dict[str, set[str]] = {t.name: set() for t in cat.tables}
        for e in cat.fk_edges:
            adj[e.src_table].add(e.dst_table)
            adj[e.dst_table].add(e.src_table)
        start = cat.tables[0].name
        reach = {start}
        todo = deque([start])
        while todo:
            for nb in adj[todo.popleft()]:
                if nb not in reach:
                    reach.add(nb)
                    todo.append(nb)
        if len(reach) != len(cat.tables):
            missing = sorted(set(adj) - reach)
            raise CatalogError("fk_edges", f"fk graph is not connected; unreachable: {missing}")


# ---------------------------------------------------------------------------
# serialization


def catalog_to_json(cat: Catalog, include_data: bool = True) -> dict:
    tables = []
    for t in cat.tables:
        doc = {
            "name": t.name,
            "columns": [
                {
                    "name": c.name,
                    "dataType": c.dataType,
                    "stats": {
                        "numNulls": c.stats.numNulls,
                        "numDistinctVals": c.stats.numDistinctVals,
                        "avgColSize": c.stats.avgColSize,
                        "maxColSize": c.stats.maxColSize,
                    },
                }
                for c in t.columns
            ],
            "stats": {"numRows": t.stats.numRows, "avgRowSize": t.stats.avgRowSize},
        }
        if include_data and t.data is not None:
            doc["data"] = [[dtypes.to_json(c.dataType, v) for v in col] for c, col in zip(t.columns, t.data)]
        tables.append(doc)
    return {
        "name": cat.name,
        "tables": tables,
        "fk_edges": [
            {"src": f"{e.src_table}.{e.src_column}", "dst": f"{e.dst_table}.{e.dst_column}"} for e in cat.fk_edges
        ],
    }


def dumps_catalog(cat: Catalog, include_data: bool = True) -> str:
    return json.dumps(catalog_to_json(cat, include_data), separators=(",", ":"), ensure_ascii=False)


def _req(doc: Any, key: str, kind: type | tuple, loc: str) -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise CatalogError(loc, f"missing field {key!r}")
    val = doc[key]
    if kind is int and isinstance(val, bool):
        raise CatalogError(f"{loc}.{key}", "expected integer")
    if not isinstance(val, kind):
        raise CatalogError(f"{loc}.{key}", f"expected {getattr(kind, '__name__', kind)}")
    return val


def catalog_from_json(doc: Any) -> Catalog:
    name = _req(doc, "name", str, "")
    tables = []
    for ti, td in enumerate(_req(doc, "tables", list, "")):
        loc = f"tables[{ti}]"
        cols = []
        for ci, cd in enumerate(_req(td, "columns", list, loc)):
            cloc = f"{loc}.columns[{ci}]"
            sd = _req(cd, "stats", dict, cloc)
            sloc = f"{cloc}.stats"
            cols.append(
                ColumnDef(
                    name=_req(cd, "name", str, cloc),
                    dataType=_req(cd, "dataType", str, cloc),
                    stats=ColumnStats(
                        numNulls=_req(sd, "numNulls", int, sloc),
                        numDistinctVals=_req(sd, "numDistinctVals", int, sloc),
                        avgColSize=float(_req(sd, "avgColSize", (int, float), sloc)),
                        maxColSize=_req(sd, "maxColSize", int, sloc),
                    ),
                )
            )
            if cols[-1].dataType not in DATA_TYPES:
                raise CatalogError(cloc, f"unknown dataType {cols[-1].dataType!r}")
        ts = _req(td, "stats", dict, loc)
        stats = TableStats(
            numRows=_req(ts, "numRows", int, f"{loc}.stats"),
            avgRowSize=float(_req(ts, "avgRowSize", (int, float), f"{loc}.stats")),
        )
        data = None
        if "data" in td:
            raw = _req(td, "data", list, loc)
            if len(raw) != len(cols):
                raise CatalogError(f"{loc}.data", f"{len(raw)} data columns for {len(cols)} columns")
            parsed = []
            for ci, (c, col) in enumerate(zip(cols, raw)):
                if not isinstance(col, list):
                    raise CatalogError(f"{loc}.data[{ci}]", "expected list")
                try:
                    parsed.append(tuple(dtypes.from_json(c.dataType, v) for v in col))
                except (ValueError, TypeError) as exc:
                    raise CatalogError(f"{loc}.data[{ci}]", str(exc)) from None
            data = tuple(parsed)
        tables.append(TableDef(_req(td, "name", str, loc), tuple(cols), stats, data))
    edges = []
    for ei, ed in enumerate(_req(doc, "fk_edges", list, "")):
        loc = f"fk_edges[{ei}]"
        parts = []
        for key in ("src", "dst"):
            ref = _req(ed, key, str, loc)
            if ref.count(".") != 1:
                raise CatalogError(f"{loc}.{key}", f"expected table.column, got {ref!r}")
            parts.extend(ref.split("."))
        edges.append(FkEdge(*parts))
    cat = Catalog(name=name, tables=tuple(tables), fk_edges=tuple(edges))
    validate_catalog(cat)
    return cat


def save_catalog(cat: Catalog, path: str | Path, include_data: bool = True) -> None:
    Path(path).write_text(dumps_catalog(cat, include_data) + "\n", encoding="utf-8")


def loads_catalog(text: str) -> Catalog:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"line {exc.lineno} col {exc.colno}", f"invalid JSON: {exc.msg}") from None
    return catalog_from_json(doc)


def load_catalog(path: str | Path) -> Catalog:
    return loads_catalog(Path(path).read_text(encoding="utf-8"))


def import_csv_table(name: str, path: str | Path, types: Sequence[str]) -> TableDef:
    """Read a headered CSV into a table; empty cells become NULL."""
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if len(types) != len(header):
        raise CatalogError(str(path), "type list does not match header width")
    parse = {
        "integer": int, "float": float, "decimal": float, "varchar": str,
        "boolean": lambda s: s.strip().lower() in ("1", "true", "t", "yes"),
        "date": dt.date.fromisoformat, "timestamp": dt.datetime.fromisoformat,
    }
    data = [[(None if r[i] == "" else parse[types[i]](r[i])) for r in rows] for i in range(len(header))]
    return build_table(name, list(zip(header, types)), data)
