"""Reference in-memory executor.

Row-at-a-time evaluation over the catalog's materialized data with SQL
three-valued logic. Besides the result rows it records, for every relation
node, the true number of input and output rows; the engine simulator turns
that profile into runtimes.

Sort orders by the keys and then by the whole row, so Sort+Limit returns the
same multiset no matter in which order the input arrived.
"""

from __future__ import annotations

import math
import operator
import re
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Sequence

from . import dtypes
from .plan import FieldRef, Literal, LogicalPlan, Operation, RelationNode, conjuncts, infer_type, input_schema

DEFAULT_MAX_ROWS = 500_000


class ResourceLimitExceeded(RuntimeError):
    def __init__(self, node_id: int, rows: int, cap: int):
        super().__init__(f"node {node_id} produced more than {cap} rows ({rows}+)")
        self.node_id = node_id


@dataclass(frozen=True)
class NodeProfile:
    id: int
    kind: str
    rows_in: tuple
    rows_out: int
    table_rows: int = 0


@dataclass(frozen=True)
class ExecProfile:
    nodes: tuple  # NodeProfile in post-order
    output_rows: int

    def by_id(self) -> dict[int, NodeProfile]:
        return {n.id: n for n in self.nodes}


# ---------------------------------------------------------------------------
# expressions


def _and3(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _or3(a, b):
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


def _cmp(fn):
    def op(a, b):
        if a is None or b is None:
            return None
        return fn(a, b)

    return op


_CMP = {
    "eq": _cmp(operator.eq),
    "ne": _cmp(operator.ne),
    "lt": _cmp(operator.lt),
    "le": _cmp(operator.le),
    "gt": _cmp(operator.gt),
    "ge": _cmp(operator.ge),
}


def _arith(fn):
    def op(a, b):
        if a is None or b is None:
            return None
        return fn(a, b)

    return op


def _div(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


@lru_cache(maxsize=1024)
def like_regex(pattern: str) -> re.Pattern:
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


def _like(a, p):
    if a is None or p is None:
        return None
    return like_regex(p).fullmatch(a) is not None


def _in_list(x, *items):
    if x is None:
        return None
    saw_null = False
    for it in items:
        if it is None:
            saw_null = True
        elif x == it:
            return True
    return None if saw_null else False


def _extract(part):
    def op(v):
        return None if v is None else getattr(v, part)

    return op


_ARITH = {
    "add": _arith(operator.add),
    "sub": _arith(operator.sub),
    "mul": _arith(operator.mul),
    "div": _div,
}


def eval_scalar(op: str, args: Sequence[Any], arg_types: Sequence[str] = ()) -> Any:
    """Evaluate one non-aggregate operation on already evaluated arguments."""
    if op in _CMP:
        return _CMP[op](*args)
    if op == "between":
        x, lo, hi = args
        return _and3(_CMP["ge"](x, lo), _CMP["le"](x, hi))
    if op == "in_list":
        return _in_list(*args)
    if op == "is_null":
        return args[0] is None
    if op == "is_not_null":
        return args[0] is not None
    if op == "and":
        return _and3(*args)
    if op == "or":
        return _or3(*args)
    if op == "not":
        return None if args[0] is None else not args[0]
    if op == "add":
        return _arith(operator.add)(*args)
    if op == "sub":
        return _arith(operator.sub)(*args)
    if op == "mul":
        return _arith(operator.mul)(*args)
    if op == "div":
        return _div(*args)
    if op == "neg":
        return None if args[0] is None else -args[0]
    if op == "like":
        return _like(*args)
    if op in ("lower", "upper"):
        return None if args[0] is None else getattr(args[0], op)()
    if op.startswith("cast_"):
        try:
            return dtypes.cast_value(args[0], arg_types[0], op[5:])
        except (ValueError, TypeError, OverflowError):
            return None
    if op.startswith("extract_"):
        return _extract(op[8:])(args[0])
    raise ValueError(f"cannot evaluate {op}")


def compile_expr(e, schema: Sequence[tuple[str, str]]) -> Callable[[tuple], Any]:
    """Compile a scalar expression over rows of ``schema`` into a closure."""
    if isinstance(e, FieldRef):
        return operator.itemgetter(e.index)
    if isinstance(e, Literal):
        v = e.value
        return lambda row: v
    fns = [compile_expr(a, schema) for a in e.args]
    op = e.op
    if op == "and":
        f, g = fns

        def and_(row):
            a = f(row)
            if a is False:
                return False
            return _and3(a, g(row))

        return and_
    if op == "or":
        f, g = fns

        def or_(row):
            a = f(row)
            if a is True:
                return True
            return _or3(a, g(row))

        return or_
    if op in _CMP and len(fns) == 2:
        cmp = _CMP[op]
        f, g = fns
        return lambda row: cmp(f(row), g(row))
    if op == "like" and isinstance(e.args[1], Literal) and e.args[1].value is not None:
        rx = like_regex(e.args[1].value)
        f = fns[0]

        def like_(row):
            a = f(row)
            return None if a is None else rx.fullmatch(a) is not None

        return like_
    if op == "between":
        f, lo, hi = fns

        def between_(row):
            x = f(row)
            if x is None:
                return None
            return _and3(_CMP["ge"](x, lo(row)), _CMP["le"](x, hi(row)))

        return between_
    if op in ("is_null", "is_not_null"):
        f = fns[0]
        want = op == "is_null"
        return lambda row: (f(row) is None) == want
    if op == "not":
        f = fns[0]

        def not_(row):
            v = f(row)
            return None if v is None else not v

        return not_
    if op == "in_list" and all(isinstance(a, Literal) for a in e.args[1:]):
        f = fns[0]
        values = frozenset(a.value for a in e.args[1:] if a.value is not None)
        has_null = any(a.value is None for a in e.args[1:])

        def in_(row):
            x = f(row)
            if x is None:
                return None
            if x in values:
                return True
            return None if has_null else False

        return in_
    if op in _ARITH:
        fn = _ARITH[op]
        f, g = fns
        return lambda row: fn(f(row), g(row))
    types = [infer_type(a, schema) for a in e.args] if op.startswith("cast_") else ()
    return lambda row: eval_scalar(op, [f(row) for f in fns], types)


def eval_const(e) -> Any:
    """Evaluate an expression that contains no field references."""
    return compile_expr(e, ())(())


# ---------------------------------------------------------------------------
# aggregates


def _aggregate(op: str, values: list, arg_type: str | None):
    if op == "count_star":
        return len(values)
    vals = [v for v in values if v is not None]
    if op == "count":
        return len(vals)
    if op == "count_distinct":
        return len(set(vals))
    if not vals:
        return None
    if op == "sum":
        return sum(vals) if arg_type == "integer" else math.fsum(vals)
    if op == "avg":
        return math.fsum(vals) / len(vals)
    if op == "min":
        return min(vals)
    if op == "max":
        return max(vals)
    raise ValueError(op)


def null_key(v):
    return (v is None, v)


def row_key(row: tuple) -> tuple:
    """Total order over rows of one schema; NULLs sort after values."""
    return tuple((v is None, v) for v in row)


# ---------------------------------------------------------------------------
# execution

_TABLE_CACHE: "OrderedDict[int, tuple]" = OrderedDict()


def _table_rows(catalog, name: str) -> list[tuple]:
    key = id(catalog)
    hit = _TABLE_CACHE.get(key)
    if hit is None or hit[0] is not catalog:
        hit = (catalog, {})
        _TABLE_CACHE[key] = hit
        while len(_TABLE_CACHE) > 8:
            _TABLE_CACHE.popitem(last=False)
    rows = hit[1].get(name)
    if rows is None:
        rows = catalog.table(name).rows()
        hit[1][name] = rows
    return rows


def _emit(rows: list[tuple], emit: tuple, width: int) -> list[tuple]:
    if emit == tuple(range(width)):
        return rows
    if len(emit) == 1:
        i = emit[0]
        return [(r[i],) for r in rows]
    get = operator.itemgetter(*emit)
    return [get(r) for r in rows]


class Executor:
    def __init__(self, catalog, max_rows: int = DEFAULT_MAX_ROWS):
        self.catalog = catalog
        self.max_rows = max_rows
        self.profile: list[NodeProfile] = []

    def check(self, node: RelationNode, n: int) -> None:
        if n > self.max_rows:
            raise ResourceLimitExceeded(node.id, n, self.max_rows)

    def run(self, node: RelationNode) -> list[tuple]:
        kids = [self.run(c) for c in node.children]
        k = node.kind
        table_rows = 0
        if k == "TableScan":
            rows = _table_rows(self.catalog, node.table)
            table_rows = len(rows)
            width = len(self.catalog.table(node.table).columns)
        elif k == "Filter":
            pred = compile_expr(node.exprs[0], input_schema(node))
            rows = [r for r in kids[0] if pred(r) is True]
            width = len(node.children[0].schema)
        elif k == "Project":
            fns = [compile_expr(e, input_schema(node)) for e in node.exprs]
            rows = [tuple(f(r) for f in fns) for r in kids[0]]
            width = len(node.exprs)
        elif k == "Join":
            rows = self.join(node, kids[0], kids[1])
            width = len(input_schema(node))
        elif k == "Aggregate":
            rows = self.aggregate(node, kids[0])
            width = len(node.exprs)
        elif k == "Sort":
            rows = self.sort(node, kids[0])
            width = len(node.children[0].schema)
        elif k == "Limit":
            rows = kids[0][: node.limit]
            width = len(node.children[0].schema)
        else:
            raise ValueError(f"unknown relation kind {k}")
        self.check(node, len(rows))
        rows = _emit(rows, node.emit, width)
        self.profile.append(NodeProfile(node.id, k, tuple(len(c) for c in kids), len(rows), table_rows))
        return rows

    def join(self, node: RelationNode, left: list, right: list) -> list:
        wl = len(node.children[0].schema)
        schema = input_schema(node)
        lkeys, rkeys, residual = [], [], []
        for c in conjuncts(node.exprs[0]) if node.exprs else []:
            if isinstance(c, Operation) and c.op == "eq" and all(isinstance(a, FieldRef) for a in c.args):
                a, b = c.args[0].index, c.args[1].index
                if a < wl <= b:
                    lkeys.append(a)
                    rkeys.append(b - wl)
                    continue
                if b < wl <= a:
                    lkeys.append(b)
                    rkeys.append(a - wl)
                    continue
            residual.append(c)
        res = compile_expr(_and_all(residual), schema) if residual else None
        out = []
        if lkeys:
            lget = operator.itemgetter(*lkeys)
            rget = operator.itemgetter(*rkeys)
            single = len(lkeys) == 1
            table: dict = {}
            for r in right:
                key = rget(r)
                if (key is None) if single else (None in key):
                    continue
                table.setdefault(key, []).append(r)
            probed = 0
            for lrow in left:
                key = lget(lrow)
                if (key is None) if single else (None in key):
                    continue
                matches = table.get(key)
                if not matches:
                    continue
                probed += len(matches)
                if probed > self.max_rows:
                    self.check(node, probed)
                for rrow in matches:
                    row = lrow + rrow
                    if res is None or res(row) is True:
                        out.append(row)
                if len(out) > self.max_rows:
                    self.check(node, len(out))
        else:
            # every pair is an intermediate row of a nested-loop join
            self.check(node, len(left) * len(right))
            for lrow in left:
                for rrow in right:
                    row = lrow + rrow
                    if res is None or res(row) is True:
                        out.append(row)
        return out

    def aggregate(self, node: RelationNode, rows: list) -> list:
        schema = input_schema(node)
        keys = [e for e in node.exprs if not (isinstance(e, Operation) and e.op in _AGG)]
        measures = node.exprs[len(keys):]
        kfns = [compile_expr(e, schema) for e in keys]
        afns = [compile_expr(m.args[0], schema) if m.args else None for m in measures]
        atypes = [infer_type(m.args[0], schema) if m.args else None for m in measures]
        groups: dict = {}
        for r in rows:
            groups.setdefault(tuple(f(r) for f in kfns), []).append(r)
        if not keys and not groups:
            groups[()] = []
        out = []
        for key, members in groups.items():
            vals = []
            for m, f, t in zip(measures, afns, atypes):
                column = members if f is None else [f(r) for r in members]
                vals.append(_aggregate(m.op, column, t))
            out.append(key + tuple(vals))
        return out

    def sort(self, node: RelationNode, rows: list) -> list:
        out = sorted(rows, key=row_key)
        for e, desc in reversed(list(zip(node.exprs, node.descending))):
            f = compile_expr(e, input_schema(node))
            out.sort(key=lambda r: null_key(f(r)), reverse=desc)
        return out


_AGG = frozenset({"sum", "count", "count_star", "min", "max", "avg", "count_distinct"})


def _and_all(parts):
    out = parts[0]
    for p in parts[1:]:
        out = Operation("and", (out, p))
    return out


def execute(plan: LogicalPlan, catalog, max_rows: int = DEFAULT_MAX_ROWS) -> tuple[list[tuple], ExecProfile]:
    """Run ``plan``; returns the result rows and the true-cardinality profile."""
    ex = Executor(catalog, max_rows)
    rows = ex.run(plan.root)
    return rows, ExecProfile(tuple(ex.profile), len(rows))


def multiset(rows: Sequence[tuple]) -> list[tuple]:
    """Canonical sorted form for multiset comparison of results."""
    return sorted(rows, key=row_key)
