"""Resolve a parsed query against a catalog into the initial logical plan.

The initial plan follows the query text: scans in FROM order joined
left-deep, WHERE as a single Filter above the joins, then aggregation,
HAVING, projection, ORDER BY and LIMIT. Uncorrelated ``IN`` subqueries
become joins against the de-duplicated subquery keys and ``EXISTS``
becomes a cross join with a zero-or-one row relation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

from .. import dtypes
from ..catalog import Catalog
from ..plan import (
    FieldRef,
    Literal,
    LogicalPlan,
    Operation,
    PlanTypeError,
    RelationNode,
    infer_type,
    make_and,
    make_node,
    renumber,
    validate_plan,
)
from . import ast as A
from .parser import parse_sql


class BindError(ValueError):
    pass


@dataclass
class _Entry:
    label: str
    table: str
    offset: int
    columns: list  # [(name, dtype)]


class Scope:
    """Column namespace of the relation currently being built."""

    def __init__(self, entries: list[_Entry] | None = None):
        self.entries = entries or []

    @property
    def width(self) -> int:
        return sum(len(e.columns) for e in self.entries)

    def add(self, label: str, table: str, columns: list) -> None:
        if any(e.label == label for e in self.entries):
            raise BindError(f"duplicate table alias {label!r}")
        self.entries.append(_Entry(label, table, self.width, columns))

    def lookup(self, col: A.Column) -> int | None:
        hits = []
        for e in self.entries:
            if col.table is not None and e.label != col.table:
                continue
            for i, (name, _) in enumerate(e.columns):
                if name == col.name:
                    hits.append(e.offset + i)
        if col.table is not None and not any(e.label == col.table for e in self.entries):
            return None
        if len(hits) > 1:
            raise BindError(f"ambiguous column {col.name!r} at line {col.pos[0]}, column {col.pos[1]}")
        return hits[0] if hits else None

    def known_label(self, label: str) -> bool:
        return any(e.label == label for e in self.entries)


_FUNC_OPS = {
    "SUM": "sum", "MIN": "min", "MAX": "max", "AVG": "avg", "COUNT": "count",
    "LOWER": "lower", "UPPER": "upper",
    "EXTRACT_YEAR": "extract_year", "EXTRACT_MONTH": "extract_month", "EXTRACT_DAY": "extract_day",
}


def _fmt_col(c: A.Column) -> str:
    return f"{c.table}.{c.name}" if c.table else c.name


class _ExprBinder:
    """Binds AST expressions to plan expressions over a flat input schema."""

    def __init__(self, scope: Scope, schema: tuple, outer: Scope | None = None, allow_agg: bool = False):
        self.scope = scope
        self.schema = schema
        self.outer = outer
        self.allow_agg = allow_agg

    def typeof(self, e) -> str:
        try:
            return infer_type(e, self.schema)
        except PlanTypeError as exc:
            raise BindError(f"type mismatch: {exc}") from None

    def column(self, node: A.Column):
        idx = self.scope.lookup(node)
        if idx is None:
            if self.outer is not None and self.outer.lookup(node) is not None:
                raise BindError(f"correlated subqueries are not supported (column {_fmt_col(node)})")
            if node.table is not None and not self.scope.known_label(node.table):
                raise BindError(f"unknown table or alias {node.table!r} at line {node.pos[0]}, column {node.pos[1]}")
            raise BindError(f"unknown column {_fmt_col(node)!r} at line {node.pos[0]}, column {node.pos[1]}")
        return FieldRef(idx)

    def bind(self, node):
        if isinstance(node, A.Column):
            return self.column(node)
        if isinstance(node, A.Lit):
            return Literal(node.dtype or "integer", node.value, node.casted)
        if isinstance(node, A.Unary):
            arg = self.bind(node.arg)
            if node.op == "neg" and isinstance(arg, Literal) and arg.value is not None and arg.dtype in dtypes.NUMERIC:
                return Literal(arg.dtype, -arg.value, arg.is_casted)
            return Operation(node.op, (arg,))
        if isinstance(node, A.Binary):
            left, right = self._bind_siblings([node.left, node.right])
            return Operation(node.op, (left, right))
        if isinstance(node, A.Between):
            args = self._bind_siblings([node.arg, node.low, node.high])
            out = Operation("between", tuple(args))
            return Operation("not", (out,)) if node.negated else out
        if isinstance(node, A.InList):
            args = self._bind_siblings([node.arg, *node.items])
            out = Operation("in_list", tuple(args))
            return Operation("not", (out,)) if node.negated else out
        if isinstance(node, A.IsNull):
            return Operation("is_not_null" if node.negated else "is_null", (self.bind(node.arg),))
        if isinstance(node, A.Like):
            out = Operation("like", (self.bind(node.arg), self.bind(node.pattern)))
            return Operation("not", (out,)) if node.negated else out
        if isinstance(node, A.Cast):
            arg = self.bind(node.arg)
            if isinstance(arg, Literal):
                try:
                    value = dtypes.cast_value(arg.value, arg.dtype, node.dtype)
                except (ValueError, TypeError):
                    raise BindError(f"cannot cast {arg.value!r} to {node.dtype}") from None
                return Literal(node.dtype, value, True)
            return Operation(f"cast_{node.dtype}", (arg,))
        if isinstance(node, A.Func):
            if node.name in A.AGG_FUNCS:
                if not self.allow_agg:
                    raise BindError(f"aggregate {node.name} not allowed here")
                inner = _ExprBinder(self.scope, self.schema, self.outer, allow_agg=False)
                if node.star:
                    return Operation("count_star", ())
                if len(node.args) != 1:
                    raise BindError(f"{node.name} takes one argument")
                arg = inner.bind(node.args[0])
                if node.distinct:
                    if node.name != "COUNT":
                        raise BindError(f"DISTINCT only supported in COUNT, not {node.name}")
                    return Operation("count_distinct", (arg,))
                return Operation(_FUNC_OPS[node.name], (arg,))
            if node.distinct or node.star:
                raise BindError(f"invalid arguments to {node.name}")
            return Operation(_FUNC_OPS[node.name], tuple(self.bind(a) for a in node.args))
        if isinstance(node, (A.InSubquery, A.Exists)):
            raise BindError("subqueries are only supported as top-level WHERE conjuncts")
        raise BindError(f"unsupported expression {type(node).__name__}")

    def _bind_siblings(self, nodes: list) -> list:
        bound = [self.bind(n) for n in nodes]
        typed = None
        for n, b in zip(nodes, bound):
            if not (isinstance(n, A.Lit) and n.dtype is None):
                try:
                    typed = infer_type(b, self.schema)
                except PlanTypeError:
                    typed = None
                if typed is not None:
                    break
        if typed is not None:
            bound = [
                Literal(typed, None) if isinstance(n, A.Lit) and n.dtype is None else b for n, b in zip(nodes, bound)
            ]
        return bound


class _PostAggBinder(_ExprBinder):
    """Binds expressions above an Aggregate in terms of its key/measure outputs."""

    def __init__(self, pre: _ExprBinder, keys: list, measures: list):
        super().__init__(pre.scope, pre.schema, pre.outer, allow_agg=True)
        self.pre = pre
        self.keys = keys
        self.measures = measures
        self.agg_schema = None

    def bind(self, node):
        if isinstance(node, A.Func) and node.name in A.AGG_FUNCS:
            op = self.pre.bind(node)
            return FieldRef(len(self.keys) + self.measures.index(op))
        if not A.contains_aggregate(node) and not isinstance(node, A.Lit):
            try:
                e = self.pre.bind(node)
            except BindError:
                e = None
            if e is not None and e in self.keys:
                return FieldRef(self.keys.index(e))
            if isinstance(node, A.Column):
                raise BindError(f"column {_fmt_col(node)!r} must appear in GROUP BY or inside an aggregate")
        return super().bind(node)

    def _bind_siblings(self, nodes):
        bound = [self.bind(n) for n in nodes]
        typed = None
        for n, b in zip(nodes, bound):
            if not (isinstance(n, A.Lit) and n.dtype is None):
                try:
                    typed = infer_type(b, self.agg_schema)
                    break
                except PlanTypeError:
                    pass
        if typed is not None:
            bound = [
                Literal(typed, None) if isinstance(n, A.Lit) and n.dtype is None else b for n, b in zip(nodes, bound)
            ]
        return bound


def _collect_aggs(node, out: list) -> None:
    if isinstance(node, A.Func) and node.name in A.AGG_FUNCS:
        out.append(node)
        return
    for c in A.children(node):
        _collect_aggs(c, out)


class _QueryBinder:
    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.ids = itertools.count()

    def node(self, kind, children=(), exprs=(), emit=None, **kw) -> RelationNode:
        try:
            return make_node(next(self.ids), kind, children, exprs, emit, catalog=self.catalog, **kw)
        except PlanTypeError as exc:
            raise BindError(f"type mismatch: {exc}") from None

    def scan(self, ref: A.TableRef, scope: Scope) -> RelationNode:
        if not self.catalog.has_table(ref.name):
            raise BindError(f"unknown table {ref.name!r} at line {ref.pos[0]}, column {ref.pos[1]}")
        t = self.catalog.table(ref.name)
        scope.add(ref.label, t.name, [(c.name, c.dataType) for c in t.columns])
        return self.node("TableScan", table=t.name)

    def predicate(self, binder: _ExprBinder, node, what: str):
        e = binder.bind(node)
        t = binder.typeof(e)
        if t != "boolean":
            raise BindError(f"{what} must be boolean, got {t}")
        return e

    def bind_query(self, q: A.Select, outer: Scope | None = None) -> tuple[RelationNode, list[str]]:
        scope = Scope()
        first = q.from_items[0]
        current = self.scan(first.table, scope)
        for item in q.from_items[1:]:
            right = self.scan(item.table, scope)
            exprs = ()
            if item.condition is not None:
                binder = _ExprBinder(scope, current.schema + right.schema, outer)
                if A.contains_aggregate(item.condition):
                    raise BindError("aggregates are not allowed in ON")
                exprs = (self.predicate(binder, item.condition, "join condition"),)
            current = self.node("Join", (current, right), exprs)

        if q.where is not None:
            if A.contains_aggregate(q.where):
                raise BindError("aggregates are not allowed in WHERE; use HAVING")
            plain, subs = [], []
            for part in _split_and(q.where):
                if _is_subquery_conjunct(part):
                    subs.append(part)
                elif _has_subquery(part):
                    raise BindError("subqueries are only supported as top-level WHERE conjuncts")
                else:
                    plain.append(part)
            if plain:
                binder = _ExprBinder(scope, current.schema, outer)
                pred = make_and([self.predicate(binder, p, "WHERE") for p in plain])
                current = self.node("Filter", (current,), (pred,))
            for part in subs:
                current = self.subquery_join(current, scope, part, outer)

        pre = _ExprBinder(scope, current.schema, outer, allow_agg=True)
        items = q.items
        if q.star:
            if q.has_aggregation:
                raise BindError("SELECT * cannot be combined with aggregation")
            items = [
                A.SelectItem(A.Column(e.label, name), None) for e in scope.entries for name, _ in e.columns
            ]
        binder: _ExprBinder = pre
        if q.has_aggregation:
            keys = []
            for g in q.group_by or []:
                if A.contains_aggregate(g):
                    raise BindError("aggregates are not allowed in GROUP BY")
                k = _ExprBinder(scope, current.schema, outer).bind(g)
                if k not in keys:
                    keys.append(k)
            found: list = []
            for it in items:
                _collect_aggs(it.expr, found)
            if q.having is not None:
                _collect_aggs(q.having, found)
            for o in q.order_by or []:
                _collect_aggs(o.expr, found)
            measures = []
            for f in found:
                op = pre.bind(f)
                if op not in measures:
                    measures.append(op)
            names = []
            for k in keys:
                names.append(current.schema[k.index][0].split(".")[-1] if isinstance(k, FieldRef) else f"key{len(names)}")
            names += [f"{m.op}_{i}" for i, m in enumerate(measures)]
            current = self.node("Aggregate", (current,), keys + measures, names=tuple(names))
            post = _PostAggBinder(pre, keys, measures)
            post.agg_schema = current.schema
            binder = post
            if q.having is not None:
                pred = post.bind(q.having)
                try:
                    t = infer_type(pred, current.schema)
                except PlanTypeError as exc:
                    raise BindError(f"type mismatch: {exc}") from None
                if t != "boolean":
                    raise BindError(f"HAVING must be boolean, got {t}")
                current = self.node("Filter", (current,), (pred,))

        out_exprs = [binder.bind(it.expr) for it in items]
        for e in out_exprs:
            try:
                infer_type(e, current.schema)
            except PlanTypeError as exc:
                raise BindError(f"type mismatch: {exc}") from None
        out_names = []
        for i, (it, e) in enumerate(zip(items, out_exprs)):
            if it.alias:
                out_names.append(it.alias)
            elif isinstance(it.expr, A.Column):
                out_names.append(it.expr.name)
            else:
                out_names.append(f"expr{i}")

        if all(isinstance(e, FieldRef) for e in out_exprs):
            emit = tuple(current.emit[e.index] for e in out_exprs)
            current = self.node(
                current.kind, current.children, current.exprs, emit,
                table=current.table, names=current.names, descending=current.descending, limit=current.limit,
            )
        else:
            current = self.node("Project", (current,), out_exprs, names=tuple(out_names))

        if q.order_by:
            keys, desc = [], []
            for o in q.order_by:
                keys.append(FieldRef(self.order_key(o.expr, items, out_exprs, out_names, binder)))
                desc.append(o.descending)
            current = self.node("Sort", (current,), keys, descending=tuple(desc))
        if q.limit is not None:
            current = self.node("Limit", (current,), limit=q.limit)
        return current, out_names

    def order_key(self, expr, items, out_exprs, out_names, binder) -> int:
        if isinstance(expr, A.Lit) and expr.dtype == "integer":
            if not 1 <= expr.value <= len(items):
                raise BindError(f"ORDER BY position {expr.value} out of range")
            return expr.value - 1
        if isinstance(expr, A.Column) and expr.table is None:
            hits = [i for i, it in enumerate(items) if it.alias == expr.name]
            if len(hits) == 1:
                return hits[0]
        e = binder.bind(expr)
        if e in out_exprs:
            return out_exprs.index(e)
        raise BindError("ORDER BY expression must appear in the select list")

    def subquery_join(self, current: RelationNode, scope: Scope, part, outer: Scope | None) -> RelationNode:
        width = len(current.schema)
        negated = False
        if isinstance(part, A.Unary):
            part, negated = part.arg, True
        combined = Scope(list(scope.entries) + (list(outer.entries) if outer else []))
        if isinstance(part, A.InSubquery):
            sub, _ = self.bind_query(part.query, outer=combined)
            if len(sub.schema) != 1:
                raise BindError("IN subquery must return exactly one column")
            x = _ExprBinder(scope, current.schema, outer).bind(part.arg)
            keys = self.node("Aggregate", (sub,), (FieldRef(0),), names=(sub.schema[0][0].split(".")[-1],))
            cond = Operation("eq", (x, FieldRef(width)))
            try:
                infer_type(cond, current.schema + keys.schema)
            except PlanTypeError as exc:
                raise BindError(f"type mismatch in IN subquery: {exc}") from None
            return self.node("Join", (current, keys), (cond,), tuple(range(width)))
        sub, _ = self.bind_query(part.query, outer=combined)
        count = self.node("Aggregate", (sub,), (Operation("count_star", ()),), names=("exists_count",))
        test = Operation("eq" if negated else "gt", (FieldRef(0), Literal("integer", 0)))
        gate = self.node("Filter", (count,), (test,))
        return self.node("Join", (current, gate), (), tuple(range(width)))


def _split_and(node) -> list:
    if isinstance(node, A.Binary) and node.op == "and":
        return _split_and(node.left) + _split_and(node.right)
    return [node]


def _has_subquery(node) -> bool:
    if isinstance(node, (A.InSubquery, A.Exists)):
        return True
    return any(_has_subquery(c) for c in A.children(node))


def _is_subquery_conjunct(node) -> bool:
    if isinstance(node, A.InSubquery):
        if node.negated:
            raise BindError("NOT IN with a subquery is not supported")
        return not _has_subquery(node.arg)
    if isinstance(node, A.Exists):
        return True
    return isinstance(node, A.Unary) and node.op == "not" and isinstance(node.arg, A.Exists)


def bind(ast: A.Select, catalog: Catalog) -> LogicalPlan:
    """Build the initial logical plan for ``ast``; raises BindError."""
    root, _ = _QueryBinder(catalog).bind_query(ast)
    plan = renumber(root)
    problems = validate_plan(plan, catalog)
    if problems:
        raise BindError("bound plan is invalid: " + "; ".join(map(str, problems)))
    return plan


def sql_to_plan(sql: str, catalog: Catalog) -> LogicalPlan:
    return bind(parse_sql(sql), catalog)
