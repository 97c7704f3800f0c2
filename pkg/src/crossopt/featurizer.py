"""Annotated plan -> heterogeneous graph with typed feature vectors.

Node types and feature layouts (continuous values are stored as ln(1 + x)):

=========  ===============================================================
Table      numRows, avgRowSize
Field      numNulls, numDistinctVals, avgColSize, maxColSize, dataType (7)
Literal    size, isCasted, dataType (7)
Operation  operation category (8)
Relation   estRows, avgRowSize, relation kind (7)
=========  ===============================================================

Edges point from producer to consumer: Table -> its scans, Field -> scans
emitting it and every Relation or Operation reading it, Literal -> the
Operation (or Relation) holding it, Operation -> parent Operation or owning
Relation, child Relation -> parent Relation. There is no Table -> Field edge.

Node ids: Tables, then Fields, then Literals, then Operations and Relations
interleaved in plan post-order (each relation after its own expressions).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from . import dtypes
from .dtypes import DATA_TYPES
from .plan import KINDS, FieldRef, Literal, LogicalPlan, Operation, RelationNode, column_origins

NODE_TYPES = ("Table", "Field", "Literal", "Operation", "Relation")
GRAPH_FORMAT = "crossopt-graph"
GRAPH_VERSION = 1


class EncodeError(ValueError):
    pass


@lru_cache(maxsize=1)
def op_categories() -> dict:
    """The versioned operation -> category mapping shipped with the package."""
    text = resources.files("crossopt").joinpath("data/op_categories.json").read_text()
    doc = json.loads(text)
    return {"version": doc["version"], "categories": tuple(doc["categories"]), "ops": dict(doc["ops"])}


def feature_dims() -> dict[str, int]:
    n_cat = len(op_categories()["categories"])
    return {
        "Table": 2,
        "Field": 4 + len(DATA_TYPES),
        "Literal": 2 + len(DATA_TYPES),
        "Operation": n_cat,
        "Relation": 2 + len(KINDS),
    }


def schema_signature() -> str:
    """Identifies the feature layout; stored with trained models."""
    cats = op_categories()
    return json.dumps(
        {"dims": feature_dims(), "types": DATA_TYPES, "kinds": KINDS, "ops": cats["version"]},
        sort_keys=True,
        separators=(",", ":"),
    )


def _onehot(options, value, what: str) -> list[float]:
    if value not in options:
        raise EncodeError(f"unknown {what} {value!r}")
    return [1.0 if o == value else 0.0 for o in options]


def _log(x: float) -> float:
    return math.log1p(float(x))


@dataclass(frozen=True)
class PlanGraph:
    types: tuple  # node type name per node id
    features: tuple  # float64 feature vector per node id
    edges: tuple  # (src, dst) pairs
    topo: tuple  # node ids in topological order
    relation_ids: tuple
    root: int

    def __len__(self) -> int:
        return len(self.types)

    def ids_of(self, t: str) -> list[int]:
        return [i for i, x in enumerate(self.types) if x == t]

    def children(self) -> list[list[int]]:
        """For each node, the sources of its incoming edges, sorted."""
        out: list[list[int]] = [[] for _ in self.types]
        for u, v in self.edges:
            out[v].append(u)
        for lst in out:
            lst.sort()
        return out


class _Encoder:
    def __init__(self, catalog):
        self.cat = catalog
        self.cats = op_categories()

    def encode(self, plan: LogicalPlan) -> PlanGraph:
        rels = list(plan.root.walk())
        for r in rels:
            if r.hints is None:
                raise EncodeError(f"relation {r.id} has no hints; annotate the plan first")

        tables: dict[str, int] = {}
        fields: dict[tuple, int] = {}
        for r in rels:
            if r.kind == "TableScan":
                tables.setdefault(r.table, len(tables))
        origins_in = {}
        for r in rels:
            ins = []
            for c in r.children:
                ins.extend(column_origins(c, self.cat))
            origins_in[r.id] = ins
            if r.kind == "TableScan":
                t = self.cat.table(r.table)
                for ci in r.emit:
                    fields.setdefault((t.name, t.columns[ci].name), None)
            else:
                for e in r.exprs:
                    for f in _field_refs(e):
                        o = ins[f] if f < len(ins) else None
                        if o is not None:
                            fields.setdefault((o.table, o.column), None)
        n_lit = sum(1 for r in rels for e in r.exprs for x in _walk(e) if isinstance(x, Literal))

        types: list[str] = []
        feats: list[np.ndarray] = []
        edges: list[tuple[int, int]] = []

        def add(t: str, f) -> int:
            types.append(t)
            feats.append(np.asarray(f, dtype=np.float64))
            return len(types) - 1

        table_id = {}
        for name in tables:
            st = self.cat.table(name).stats
            table_id[name] = add("Table", [_log(st.numRows), _log(st.avgRowSize)])
        field_id = {}
        for key in fields:
            col = self.cat.table(key[0]).column(key[1])
            s = col.stats
            f = [_log(s.numNulls), _log(s.numDistinctVals), _log(s.avgColSize), _log(s.maxColSize)]
            field_id[key] = add("Field", f + _onehot(DATA_TYPES, col.dataType, "data type"))
        # literals get ids before operations; reserve the block and fill in order
        lit_base = len(types)
        for _ in range(n_lit):
            types.append("Literal")
            feats.append(None)
        next_lit = [lit_base]

        def literal(x: Literal) -> int:
            i = next_lit[0]
            next_lit[0] += 1
            if x.dtype not in DATA_TYPES:
                raise EncodeError(f"unknown data type {x.dtype!r}")
            size = dtypes.value_size(x.dtype, x.value)
            feats[i] = np.asarray(
                [_log(size), 1.0 if x.is_casted else 0.0] + _onehot(DATA_TYPES, x.dtype, "data type"), dtype=np.float64
            )
            return i

        rel_id: dict[int, int] = {}
        rel_ids: list[int] = []

        def expr(e, ins, touched: set) -> int | None:
            """Encode ``e``; returns its graph node id (None for a FieldRef).

            Every base field read anywhere below ``e`` is added to ``touched``.
            """
            if isinstance(e, FieldRef):
                o = ins[e.index] if e.index < len(ins) else None
                if o is not None:
                    touched.add(field_id[(o.table, o.column)])
                return None
            if isinstance(e, Literal):
                return literal(e)
            if e.op not in self.cats["ops"]:
                raise EncodeError(f"unknown operation {e.op!r}")
            sources = []
            for a in e.args:
                if isinstance(a, FieldRef):
                    direct: set = set()
                    expr(a, ins, direct)
                    touched |= direct
                    sources.extend(direct)
                else:
                    sources.append(expr(a, ins, touched))
            me = add("Operation", _onehot(self.cats["categories"], self.cats["ops"][e.op], "operation category"))
            edges.extend((u, me) for u in sources)
            return me

        for r in rels:
            ins = origins_in[r.id]
            owned = []
            touched: set = set()
            for e in r.exprs:
                nid = expr(e, ins, touched)
                if nid is not None:
                    owned.append(nid)
            h = r.hints
            me = add("Relation", [_log(h.est_rows), _log(h.avg_row_size)] + _onehot(KINDS, r.kind, "relation kind"))
            rel_id[r.id] = me
            rel_ids.append(me)
            if r.kind == "TableScan":
                t = self.cat.table(r.table)
                edges.append((table_id[r.table], me))
                for ci in r.emit:
                    touched.add(field_id[(t.name, t.columns[ci].name)])
            for f in sorted(touched):
                edges.append((f, me))
            for nid in owned:
                edges.append((nid, me))
            for c in r.children:
                edges.append((rel_id[c.id], me))

        edges = sorted(set(edges))
        topo = topo_order(len(types), edges)
        return PlanGraph(tuple(types), tuple(feats), tuple(edges), tuple(topo), tuple(rel_ids), rel_id[plan.root.id])


def _walk(e):
    yield e
    if isinstance(e, Operation):
        for a in e.args:
            yield from _walk(a)


def _field_refs(e) -> list[int]:
    return [x.index for x in _walk(e) if isinstance(x, FieldRef)]


def topo_order(n: int, edges) -> list[int]:
    """Kahn's algorithm taking the smallest ready node id first; raises on a cycle."""
    indeg = [0] * n
    out: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        out[u].append(v)
        indeg[v] += 1
    ready = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != n:
        raise EncodeError("graph contains a cycle")
    return order


def encode_plan(plan: LogicalPlan, catalog) -> PlanGraph:
    """Vectorized graph of an annotated plan."""
    return _Encoder(catalog).encode(plan)


def graph_to_json(g: PlanGraph) -> dict:
    return {
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "nodes": [{"id": i, "type": t, "features": [float(x) for x in f]} for i, (t, f) in enumerate(zip(g.types, g.features))],
        "edges": [list(e) for e in g.edges],
        "topo": list(g.topo),
        "relations": list(g.relation_ids),
        "root": g.root,
    }


def graph_from_json(doc) -> PlanGraph:
    if not isinstance(doc, dict) or doc.get("format") != GRAPH_FORMAT or doc.get("version") != GRAPH_VERSION:
        raise EncodeError("not a crossopt graph document of a supported version")
    dims = feature_dims()
    types, feats = [], []
    for i, nd in enumerate(doc["nodes"]):
        if nd["id"] != i or nd["type"] not in dims or len(nd["features"]) != dims[nd["type"]]:
            raise EncodeError(f"bad graph node {i}")
        types.append(nd["type"])
        feats.append(np.asarray(nd["features"], dtype=np.float64))
    edges = tuple(tuple(e) for e in doc["edges"])
    topo = topo_order(len(types), edges)
    if topo != list(doc["topo"]):
        raise EncodeError("stored topological order does not match the edges")
    return PlanGraph(tuple(types), tuple(feats), edges, tuple(topo), tuple(doc["relations"]), int(doc["root"]))


def dumps_graph(g: PlanGraph) -> str:
    return json.dumps(graph_to_json(g), separators=(",", ":"))
