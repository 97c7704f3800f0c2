"""Logical plan intermediate representation and its JSON interchange format.

Every relation node carries an explicit output schema and an ``emit`` list
selecting (and ordering) columns of the node's *direct* output:

=========  ==============================================
kind       direct output
=========  ==============================================
TableScan  all columns of the scanned table
Filter     child output
Project    one column per expression (names in ``names``)
Join       left output followed by right output
Aggregate  group keys followed by aggregate measures
Sort       child output
Limit      child output
=========  ==============================================

Expressions reference columns of the node's *input* (the child output, or the
concatenated child outputs for a Join) by position.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterator, Sequence, Union

from . import dtypes
from .dtypes import NUMERIC, TEMPORAL, comparable

KINDS = ("TableScan", "Filter", "Project", "Join", "Aggregate", "Sort", "Limit")
ARITY = {"TableScan": 0, "Join": 2}


class PlanError(ValueError):
    """Base class for plan construction and interchange errors."""


class PlanFormatError(PlanError):
    """Serialized plan could not be parsed."""


class PlanTypeError(PlanError):
    pass


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class FieldRef:
    index: int


@dataclass(frozen=True)
class Literal:
    dtype: str
    value: Any
    is_casted: bool = False


@dataclass(frozen=True)
class Operation:
    op: str
    args: tuple = ()


Expr = Union[FieldRef, Literal, Operation]


@dataclass(frozen=True)
class OpInfo:
    category: str
    min_args: int
    max_args: int | None


def _ops() -> dict[str, OpInfo]:
    table = {}
    for name in ("eq", "ne", "lt", "le", "gt", "ge"):
        table[name] = OpInfo("comparison", 2, 2)
    table["between"] = OpInfo("comparison", 3, 3)
    table["in_list"] = OpInfo("comparison", 2, None)
    table["is_null"] = OpInfo("comparison", 1, 1)
    table["is_not_null"] = OpInfo("comparison", 1, 1)
    table["and"] = OpInfo("logical", 2, 2)
    table["or"] = OpInfo("logical", 2, 2)
    table["not"] = OpInfo("logical", 1, 1)
    for name in ("add", "sub", "mul", "div"):
        table[name] = OpInfo("arithmetic", 2, 2)
    table["neg"] = OpInfo("arithmetic", 1, 1)
    table["like"] = OpInfo("string", 2, 2)
    table["lower"] = OpInfo("string", 1, 1)
    table["upper"] = OpInfo("string", 1, 1)
    for t in dtypes.DATA_TYPES:
        table[f"cast_{t}"] = OpInfo("cast", 1, 1)
    for part in ("year", "month", "day"):
        table[f"extract_{part}"] = OpInfo("datetime", 1, 1)
    for name in ("sum", "count", "min", "max"):
        table[name] = OpInfo("simple_aggregate", 1, 1)
    table["count_star"] = OpInfo("simple_aggregate", 0, 0)
    table["avg"] = OpInfo("complex_aggregate", 1, 1)
    table["count_distinct"] = OpInfo("complex_aggregate", 1, 1)
    return table


OPS = _ops()
AGGREGATES = frozenset(k for k, v in OPS.items() if v.category.endswith("aggregate"))
COMPARISONS = frozenset({"eq", "ne", "lt", "le", "gt", "ge"})
FLIPPED = {"eq": "eq", "ne": "ne", "lt": "gt", "le": "ge", "gt": "lt", "ge": "le"}

TRUE = Literal("boolean", True)
FALSE = Literal("boolean", False)


def is_aggregate(e: Expr) -> bool:
    return isinstance(e, Operation) and e.op in AGGREGATES


def expr_fields(e: Expr) -> set[int]:
    if isinstance(e, FieldRef):
        return {e.index}
    if isinstance(e, Operation):
        out: set[int] = set()
        for a in e.args:
            out |= expr_fields(a)
        return out
    return set()


def remap_expr(e: Expr, mapping) -> Expr:
    """Rewrite field indices through ``mapping`` (dict or callable)."""
    if isinstance(e, FieldRef):
        return FieldRef(mapping[e.index] if not callable(mapping) else mapping(e.index))
    if isinstance(e, Operation):
        return Operation(e.op, tuple(remap_expr(a, mapping) for a in e.args))
    return e


def substitute(e: Expr, exprs: Sequence[Expr]) -> Expr:
    """Replace every ``FieldRef(i)`` with ``exprs[i]``."""
    if isinstance(e, FieldRef):
        return exprs[e.index]
    if isinstance(e, Operation):
        return Operation(e.op, tuple(substitute(a, exprs) for a in e.args))
    return e


def conjuncts(e: Expr | None) -> list[Expr]:
    if e is None:
        return []
    if isinstance(e, Operation) and e.op == "and":
        return conjuncts(e.args[0]) + conjuncts(e.args[1])
    return [e]


def make_and(parts: Sequence[Expr]) -> Expr | None:
    if not parts:
        return None
    out = parts[0]
    for p in parts[1:]:
        out = Operation("and", (out, p))
    return out


def walk_expr(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Operation):
        for a in e.args:
            yield from walk_expr(a)


def _promote(a: str, b: str) -> str:
    if "float" in (a, b):
        return "float"
    if "decimal" in (a, b):
        return "decimal"
    return "integer"


def infer_type(e: Expr, schema: Sequence[tuple[str, str]]) -> str:
    """Result type of ``e`` over input ``schema``; raises PlanTypeError."""
    if isinstance(e, FieldRef):
        if not 0 <= e.index < len(schema):
            raise PlanTypeError(f"field reference ${e.index} out of range (input width {len(schema)})")
        return schema[e.index][1]
    if isinstance(e, Literal):
        if e.dtype not in dtypes.DATA_TYPES:
            raise PlanTypeError(f"literal has unknown type {e.dtype!r}")
        if not dtypes.is_valid_value(e.dtype, e.value):
            raise PlanTypeError(f"literal {e.value!r} is not representable as {e.dtype}")
        return e.dtype
    if not isinstance(e, Operation):
        raise PlanTypeError(f"not an expression: {e!r}")
    info = OPS.get(e.op)
    if info is None:
        raise PlanTypeError(f"unknown operation {e.op!r}")
    n = len(e.args)
    if n < info.min_args or (info.max_args is not None and n > info.max_args):
        raise PlanTypeError(f"operation {e.op} takes {info.min_args}..{info.max_args} args, got {n}")
    args = [infer_type(a, schema) for a in e.args]
    op = e.op
    if op in COMPARISONS or op in ("between", "in_list"):
        for t in args[1:]:
            if not comparable(args[0], t):
                raise PlanTypeError(f"cannot compare {args[0]} with {t} in {op}")
        return "boolean"
    if op in ("is_null", "is_not_null"):
        return "boolean"
    if op in ("and", "or", "not"):
        for t in args:
            if t != "boolean":
                raise PlanTypeError(f"{op} expects boolean operands, got {t}")
        return "boolean"
    if op in ("add", "sub", "mul", "div", "neg"):
        for t in args:
            if t not in NUMERIC:
                raise PlanTypeError(f"{op} expects numeric operands, got {t}")
        if op == "div":
            return "float"
        return args[0] if op == "neg" else _promote(args[0], args[1])
    if op == "like":
        if args != ["varchar", "varchar"]:
            raise PlanTypeError(f"like expects varchar operands, got {args}")
        return "boolean"
    if op in ("lower", "upper"):
        if args[0] != "varchar":
            raise PlanTypeError(f"{op} expects varchar, got {args[0]}")
        return "varchar"
    if op.startswith("cast_"):
        return op[5:]
    if op.startswith("extract_"):
        if args[0] not in TEMPORAL:
            raise PlanTypeError(f"{op} expects date or timestamp, got {args[0]}")
        return "integer"
    if op in AGGREGATES:
        if any(is_aggregate(a) for a in e.args):
            raise PlanTypeError(f"nested aggregate in {op}")
        if op in ("count", "count_star", "count_distinct"):
            return "integer"
        if op in ("sum", "avg"):
            if args[0] not in NUMERIC:
                raise PlanTypeError(f"{op} expects numeric operand, got {args[0]}")
            return "float" if op == "avg" else args[0]
        return args[0]
    raise PlanTypeError(f"no signature for {op}")


# ---------------------------------------------------------------------------
# relations


@dataclass(frozen=True)
class Hints:
    est_rows: float
    avg_row_size: float


@dataclass(frozen=True)
class RelationNode:
    id: int
    kind: str
    children: tuple = ()
    exprs: tuple = ()
    schema: tuple = ()
    emit: tuple = ()
    # kind-specific arguments
    table: str | None = None
    names: tuple | None = None
    descending: tuple | None = None
    limit: int | None = None
    hints: Hints | None = None

    def walk(self) -> Iterator["RelationNode"]:
        """Post-order traversal (children first, left to right)."""
        for c in self.children:
            yield from c.walk()
        yield self

    def with_(self, **kw) -> "RelationNode":
        return replace(self, **kw)


@dataclass(frozen=True)
class LogicalPlan:
    root: RelationNode

    def nodes(self) -> list[RelationNode]:
        return list(self.root.walk())

    @property
    def annotated(self) -> bool:
        return all(n.hints is not None for n in self.root.walk())


def input_schema(node: RelationNode) -> tuple:
    if node.kind == "Join":
        return tuple(node.children[0].schema) + tuple(node.children[1].schema)
    if node.children:
        return tuple(node.children[0].schema)
    return ()


def direct_schema(node: RelationNode, catalog=None) -> tuple:
    """Output schema before ``emit`` is applied, recomputed from children."""
    k = node.kind
    if k == "TableScan":
        if catalog is None:
            raise PlanError("TableScan schema requires a catalog")
        t = catalog.table(node.table)
        return tuple((f"{t.name}.{c.name}", c.dataType) for c in t.columns)
    if k in ("Filter", "Sort", "Limit", "Join"):
        return input_schema(node)
    inp = input_schema(node)
    names = node.names or tuple(f"expr{i}" for i in range(len(node.exprs)))
    return tuple((n, infer_type(e, inp)) for n, e in zip(names, node.exprs))


def make_node(
    id: int,
    kind: str,
    children: Sequence[RelationNode] = (),
    exprs: Sequence[Expr] = (),
    emit: Sequence[int] | None = None,
    catalog=None,
    **kw,
) -> RelationNode:
    """Construct a node, deriving its schema from the children (or catalog for scans)."""
    node = RelationNode(id=id, kind=kind, children=tuple(children), exprs=tuple(exprs), **kw)
    full = direct_schema(node, catalog)
    emit = tuple(range(len(full))) if emit is None else tuple(emit)
    return replace(node, emit=emit, schema=tuple(full[i] for i in emit))


def renumber(plan_or_node) -> LogicalPlan:
    """Assign ids 0..n-1 in post-order."""
    root = plan_or_node.root if isinstance(plan_or_node, LogicalPlan) else plan_or_node
    counter = iter(range(1 << 30))

    def go(n: RelationNode) -> RelationNode:
        kids = tuple(go(c) for c in n.children)
        return replace(n, id=next(counter), children=kids)

    return LogicalPlan(go(root))


def shift_ids(plan: LogicalPlan, offset: int) -> LogicalPlan:
    def go(n: RelationNode) -> RelationNode:
        return replace(n, id=n.id + offset, children=tuple(go(c) for c in n.children))

    return LogicalPlan(go(plan.root))


def strip_hints(plan: LogicalPlan) -> LogicalPlan:
    def go(n: RelationNode) -> RelationNode:
        return replace(n, hints=None, children=tuple(go(c) for c in n.children))

    return LogicalPlan(go(plan.root))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    node_id: int | None
    message: str

    def __str__(self) -> str:
        return f"node {self.node_id}: {self.message}" if self.node_id is not None else self.message


def validate_plan(plan: LogicalPlan, catalog) -> list[Violation]:
    """Check every structural, schema and typing invariant. Empty list means valid."""
    out: list[Violation] = []
    seen: set[int] = set()
    try:
        _validate_node(plan.root, catalog, out, seen, set())
    except RecursionError:
        out.append(Violation(None, "plan too deep or cyclic"))
    except Exception as exc:  # validation must never raise on malformed input
        out.append(Violation(None, f"malformed plan: {exc!r}"))
    return out


def _validate_node(node, catalog, out, seen, path) -> None:
    if not isinstance(node, RelationNode):
        out.append(Violation(None, f"not a relation node: {type(node).__name__}"))
        return
    nid = node.id
    if id(node) in path:
        out.append(Violation(nid, "cyclic child reference"))
        return
    if nid in seen:
        out.append(Violation(nid, "duplicate node id"))
    seen.add(nid)
    if node.kind not in KINDS:
        out.append(Violation(nid, f"unknown relation kind {node.kind!r}"))
        return
    want = ARITY.get(node.kind, 1)
    if len(node.children) != want:
        out.append(Violation(nid, f"{node.kind} must have {want} children, has {len(node.children)}"))
        return
    for c in node.children:
        _validate_node(c, catalog, out, seen, path | {id(node)})

    k = node.kind
    if k == "TableScan":
        if not catalog.has_table(node.table or ""):
            out.append(Violation(nid, f"unknown table {node.table!r}"))
            return
        if node.exprs:
            out.append(Violation(nid, "TableScan takes no expressions"))
    inp = input_schema(node)
    if k in ("Filter", "Join"):
        want_n = (1,) if k == "Filter" else (0, 1)
        if len(node.exprs) not in want_n:
            out.append(Violation(nid, f"{k} has {len(node.exprs)} predicate expressions"))
    if k == "Limit" and (not isinstance(node.limit, int) or node.limit < 0):
        out.append(Violation(nid, "Limit requires a non-negative count"))
    if k == "Sort" and (node.descending is None or len(node.descending) != len(node.exprs)):
        out.append(Violation(nid, "Sort directions do not match keys"))
    if k in ("Project", "Aggregate") and (node.names is None or len(node.names) != len(node.exprs)):
        out.append(Violation(nid, f"{k} output names do not match expressions"))
        return
    typed_ok = True
    seen_measure = False
    for i, e in enumerate(node.exprs):
        try:
            t = infer_type(e, inp)
        except PlanTypeError as exc:
            out.append(Violation(nid, f"expression {i}: {exc}"))
            typed_ok = False
            continue
        if k in ("Filter", "Join") and t != "boolean":
            out.append(Violation(nid, f"predicate has type {t}, expected boolean"))
        agg_inside = any(is_aggregate(x) for x in walk_expr(e))
        if k == "Aggregate":
            if is_aggregate(e):
                seen_measure = True
            elif agg_inside:
                out.append(Violation(nid, f"expression {i} nests an aggregate inside a scalar expression"))
            elif seen_measure:
                out.append(Violation(nid, f"group key {i} follows an aggregate measure"))
        elif agg_inside:
            out.append(Violation(nid, f"aggregate function outside Aggregate in expression {i}"))
    if not typed_ok:
        return
    try:
        full = direct_schema(node, catalog)
    except Exception as exc:
        out.append(Violation(nid, f"cannot derive schema: {exc}"))
        return
    for i in node.emit:
        if not isinstance(i, int) or not 0 <= i < len(full):
            out.append(Violation(nid, f"emit index {i} out of range (direct width {len(full)})"))
            return
    expected = tuple(full[i] for i in node.emit)
    if tuple(tuple(c) for c in node.schema) != expected:
        out.append(Violation(nid, f"stored schema {list(node.schema)} != derived {list(expected)}"))
    if not node.emit:
        out.append(Violation(nid, "empty output schema"))
    if node.hints is not None:
        h = node.hints
        if not (h.est_rows >= 0 and h.avg_row_size > 0):
            out.append(Violation(nid, f"invalid hints {h}"))


def check_plan(plan: LogicalPlan, catalog) -> LogicalPlan:
    bad = validate_plan(plan, catalog)
    if bad:
        raise PlanError("invalid plan: " + "; ".join(map(str, bad)))
    return plan


# ---------------------------------------------------------------------------
# interchange format

FORMAT = "crossopt-plan"
VERSION = 1


def expr_to_json(e: Expr) -> Any:
    if isinstance(e, FieldRef):
        return {"field": e.index}
    if isinstance(e, Literal):
        return {"literal": {"type": e.dtype, "value": dtypes.to_json(e.dtype, e.value), "casted": e.is_casted}}
    return {"op": e.op, "args": [expr_to_json(a) for a in e.args]}


def expr_from_json(doc: Any) -> Expr:
    if not isinstance(doc, dict) or len(doc) == 0:
        raise PlanFormatError(f"bad expression {doc!r}")
    if "field" in doc:
        idx = doc["field"]
        if not isinstance(idx, int) or isinstance(idx, bool):
            raise PlanFormatError(f"bad field reference {doc!r}")
        return FieldRef(idx)
    if "literal" in doc:
        lit = doc["literal"]
        try:
            t = lit["type"]
            dtypes.check_type(t)
            return Literal(t, dtypes.from_json(t, lit["value"]), bool(lit.get("casted", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanFormatError(f"bad literal {lit!r}: {exc}") from None
    if "op" in doc:
        if doc["op"] not in OPS:
            raise PlanFormatError(f"unknown operation {doc['op']!r}")
        args = doc.get("args", [])
        if not isinstance(args, list):
            raise PlanFormatError("operation args must be a list")
        return Operation(doc["op"], tuple(expr_from_json(a) for a in args))
    raise PlanFormatError(f"bad expression {doc!r}")


def _node_to_json(n: RelationNode, with_ids: bool = True) -> dict:
    doc: dict[str, Any] = {}
    if with_ids:
        doc["id"] = n.id
    doc["kind"] = n.kind
    doc["children"] = [c.id for c in n.children] if with_ids else [_node_to_json(c, False) for c in n.children]
    doc["exprs"] = [expr_to_json(e) for e in n.exprs]
    doc["schema"] = [[name, t] for name, t in n.schema]
    doc["emit"] = list(n.emit)
    args: dict[str, Any] = {}
    if n.table is not None:
        args["table"] = n.table
    if n.names is not None:
        args["names"] = list(n.names)
    if n.descending is not None:
        args["descending"] = list(n.descending)
    if n.limit is not None:
        args["count"] = n.limit
    if args:
        doc["args"] = args
    if n.hints is not None:
        doc["hints"] = {"estRows": float(n.hints.est_rows), "avgRowSize": float(n.hints.avg_row_size)}
    return doc


def plan_to_json(plan: LogicalPlan) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "root": plan.root.id,
        "nodes": [_node_to_json(n) for n in plan.root.walk()],
    }


def _canonical(doc: Any) -> bytes:
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode("utf-8")


def serialize_plan(plan: LogicalPlan) -> bytes:
    return _canonical(plan_to_json(plan))


def plan_from_json(doc: Any) -> LogicalPlan:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise PlanFormatError("not a crossopt plan document")
    if doc.get("version") != VERSION:
        raise PlanFormatError(f"unsupported plan format version {doc.get('version')!r}")
    raw_nodes = doc.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise PlanFormatError("plan has no nodes")
    by_id: dict[int, dict] = {}
    for raw in raw_nodes:
        if not isinstance(raw, dict) or not isinstance(raw.get("id"), int):
            raise PlanFormatError(f"bad node entry {raw!r}")
        if raw["id"] in by_id:
            raise PlanFormatError(f"duplicate node id {raw['id']}")
        if raw.get("kind") not in KINDS:
            raise PlanFormatError(f"node {raw['id']}: unknown relation kind {raw.get('kind')!r}")
        by_id[raw["id"]] = raw
    referenced: set[int] = set()
    for raw in raw_nodes:
        kids = raw.get("children")
        if not isinstance(kids, list):
            raise PlanFormatError(f"node {raw['id']}: children must be a list")
        for c in kids:
            if c not in by_id:
                raise PlanFormatError(f"node {raw['id']}: unknown child {c!r}")
            if c in referenced:
                raise PlanFormatError(f"node {c} has more than one parent")
            referenced.add(c)
    root_id = doc.get("root")
    if root_id not in by_id or root_id in referenced:
        raise PlanFormatError(f"bad root {root_id!r}")

    built: dict[int, RelationNode] = {}
    state: dict[int, int] = {}

    def build(nid: int) -> RelationNode:
        if state.get(nid) == 1:
            raise PlanFormatError(f"cyclic child reference at node {nid}")
        if nid in built:
            return built[nid]
        state[nid] = 1
        raw = by_id[nid]
        kids = tuple(build(c) for c in raw["children"])
        try:
            args = raw.get("args", {}) or {}
            hints = raw.get("hints")
            node = RelationNode(
                id=nid,
                kind=raw["kind"],
                children=kids,
                exprs=tuple(expr_from_json(e) for e in raw.get("exprs", [])),
                schema=tuple((str(a), str(b)) for a, b in raw["schema"]),
                emit=tuple(int(i) for i in raw["emit"]),
                table=args.get("table"),
                names=tuple(args["names"]) if "names" in args else None,
                descending=tuple(bool(d) for d in args["descending"]) if "descending" in args else None,
                limit=args.get("count"),
                hints=Hints(float(hints["estRows"]), float(hints["avgRowSize"])) if hints is not None else None,
            )
        except PlanFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanFormatError(f"node {nid}: malformed field ({exc!r})") from None
        state[nid] = 2
        built[nid] = node
        return node

    root = build(root_id)
    if len(built) != len(by_id):
        raise PlanFormatError("plan contains unreachable nodes")
    for node in root.walk():
        want = ARITY.get(node.kind, 1)
        if len(node.children) != want:
            raise PlanFormatError(f"node {node.id}: {node.kind} needs {want} children")
        direct = None
        if node.kind != "TableScan":
            try:
                direct = direct_schema(node)
            except PlanError as exc:
                raise PlanFormatError(f"node {node.id}: schema mismatch ({exc})") from None
            if any(not 0 <= i < len(direct) for i in node.emit) or tuple(direct[i] for i in node.emit) != node.schema:
                raise PlanFormatError(f"node {node.id}: schema mismatch")
    return LogicalPlan(root)


def deserialize_plan(data: bytes | str) -> LogicalPlan:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PlanFormatError(f"cannot parse plan: {exc}") from None
    return plan_from_json(doc)


def plan_structure(plan: LogicalPlan) -> bytes:
    """Canonical bytes of the plan with node ids dropped."""
    return _canonical(_node_to_json(plan.root, with_ids=False))


def plan_equal(a: LogicalPlan, b: LogicalPlan) -> bool:
    """Structural equality modulo node id numbering."""
    return plan_structure(a) == plan_structure(b)


def plan_fingerprint(plan: LogicalPlan) -> int:
    """64-bit digest invariant under node id relabeling."""
    return int.from_bytes(hashlib.blake2b(plan_structure(plan), digest_size=8).digest(), "big")


# ---------------------------------------------------------------------------
# printing


def format_expr(e: Expr) -> str:
    if isinstance(e, FieldRef):
        return f"${e.index}"
    if isinstance(e, Literal):
        text = dtypes.sql_literal(e.dtype, e.value)
        return f"{text}::{e.dtype}" if e.is_casted and e.value is not None else text
    return f"{e.op}(" + ", ".join(format_expr(a) for a in e.args) + ")"


def format_plan(plan: LogicalPlan) -> str:
    """One node per line, children indented below their parent."""
    lines: list[str] = []

    def go(n: RelationNode, depth: int) -> None:
        parts = [f"{n.kind}#{n.id}"]
        if n.table is not None:
            parts.append(f"table={n.table}")
        if n.exprs:
            parts.append("[" + ", ".join(format_expr(e) for e in n.exprs) + "]")
        if n.descending is not None:
            parts.append("desc=" + "".join("d" if d else "a" for d in n.descending))
        if n.limit is not None:
            parts.append(f"limit={n.limit}")
        parts.append("emit=" + ",".join(map(str, n.emit)))
        if n.hints is not None:
            parts.append(f"rows={n.hints.est_rows:.6g} width={n.hints.avg_row_size:.6g}")
        lines.append("  " * depth + " ".join(parts))
        for c in n.children:
            go(c, depth + 1)

    go(plan.root, 0)
    return "\n".join(lines)


def join_depth(node: RelationNode) -> int:
    """Largest number of Join nodes on any root-to-leaf path."""
    below = max((join_depth(c) for c in node.children), default=0)
    return below + (1 if node.kind == "Join" else 0)


def depth(node: RelationNode) -> int:
    return 1 + max((depth(c) for c in node.children), default=0)


@dataclass(frozen=True)
class ColumnOrigin:
    """Base table column an output column passes through from, if any."""

    table: str
    column: str
    scan_id: int


def column_origins(node: RelationNode, catalog) -> list[ColumnOrigin | None]:
    """For each output column of ``node``, the base column it is a pass-through of."""
    k = node.kind
    if k == "TableScan":
        t = catalog.table(node.table)
        full = [ColumnOrigin(t.name, c.name, node.id) for c in t.columns]
    elif k == "Join":
        full = column_origins(node.children[0], catalog) + column_origins(node.children[1], catalog)
    elif k in ("Filter", "Sort", "Limit"):
        full = column_origins(node.children[0], catalog)
    else:
        inner = column_origins(node.children[0], catalog)
        full = []
        for e in node.exprs:
            full.append(inner[e.index] if isinstance(e, FieldRef) and e.index < len(inner) else None)
    return [full[i] for i in node.emit]
