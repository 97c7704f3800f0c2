"""Predicate pushdown, constant folding and Filter/Project fusion.

``push(node, preds)`` returns a node with the same output schema as
``node`` that additionally applies the conjuncts ``preds`` (expressed over
``node``'s output), having moved each as far down as its columns allow.
Predicates never cross a Limit.
"""

from __future__ import annotations

from ..dtypes import is_valid_value
from ..executor import eval_const
from ..plan import (
    FALSE,
    FieldRef,
    Literal,
    LogicalPlan,
    Operation,
    RelationNode,
    conjuncts,
    expr_fields,
    infer_type,
    is_aggregate,
    make_and,
    make_node,
    remap_expr,
    renumber,
    substitute,
)
from .trim import rebuild, reemit

FLIP = {"lt": "gt", "le": "ge", "gt": "lt", "ge": "le", "eq": "eq"}


def simplify_expr(e):
    """Fold constant subexpressions and apply boolean identities."""
    if not isinstance(e, Operation) or is_aggregate(e):
        return e
    args = tuple(simplify_expr(a) for a in e.args)
    op = e.op
    if op == "and":
        a, b = args
        if _is(a, False) or _is(b, False):
            return FALSE
        if _is(a, True):
            return b
        if _is(b, True):
            return a
        if a == b:
            return a
    elif op == "or":
        a, b = args
        if _is(a, True) or _is(b, True):
            return Literal("boolean", True)
        if _is(a, False):
            return b
        if _is(b, False):
            return a
        if a == b:
            return a
    elif op == "not" and isinstance(args[0], Operation) and args[0].op == "not":
        return args[0].args[0]
    out = Operation(op, args)
    if args and all(isinstance(a, Literal) for a in args):
        folded = _fold(out)
        if folded is not None:
            return folded
    return out


def _is(e, value: bool) -> bool:
    return isinstance(e, Literal) and e.value is value


def _fold(e: Operation):
    try:
        t = infer_type(e, ())
        v = eval_const(e)
    except (ValueError, TypeError, ArithmeticError):
        return None
    if not is_valid_value(t, v):
        return None
    return Literal(t, v)


def _bound(c):
    """(field, op, value) for a comparison between a column and a literal."""
    if not isinstance(c, Operation):
        return None
    if c.op in FLIP:
        a, b = c.args
        if isinstance(a, FieldRef) and isinstance(b, Literal):
            return [(a.index, c.op, b.value)]
        if isinstance(b, FieldRef) and isinstance(a, Literal):
            return [(b.index, FLIP[c.op], a.value)]
    if c.op == "between" and isinstance(c.args[0], FieldRef):
        lo, hi = c.args[1], c.args[2]
        if isinstance(lo, Literal) and isinstance(hi, Literal):
            f = c.args[0].index
            return [(f, "ge", lo.value), (f, "le", hi.value)]
    return None


def contradictory(parts) -> bool:
    """Whether the conjunction of ``parts`` can never be TRUE."""
    lower: dict = {}
    upper: dict = {}
    equal: dict = {}
    null_tested: set = set()
    compared: set = set()
    for c in parts:
        if isinstance(c, Literal):
            if c.value is not True:
                return True
            continue
        if isinstance(c, Operation) and c.op == "is_null" and isinstance(c.args[0], FieldRef):
            null_tested.add(c.args[0].index)
            continue
        b = _bound(c)
        if b is None:
            continue
        for f, op, v in b:
            if v is None:
                return True
            compared.add(f)
            if op == "eq":
                if f in equal and equal[f] != v:
                    return True
                equal[f] = v
                op_pairs = (("ge", v), ("le", v))
            else:
                op_pairs = ((op, v),)
            for o, val in op_pairs:
                if o in ("gt", "ge"):
                    strict = o == "gt"
                    cur = lower.get(f)
                    if cur is None or val > cur[0] or (val == cur[0] and strict):
                        lower[f] = (val, strict)
                else:
                    strict = o == "lt"
                    cur = upper.get(f)
                    if cur is None or val < cur[0] or (val == cur[0] and strict):
                        upper[f] = (val, strict)
    if null_tested & compared:
        return True
    for f in set(lower) & set(upper):
        (lo, ls), (hi, hs) = lower[f], upper[f]
        if lo > hi or (lo == hi and (ls or hs)):
            return True
    return False


def normalize(preds) -> list | None:
    """Simplified, flattened, deduplicated conjuncts; None if contradictory."""
    out: list = []
    for p in preds:
        for c in conjuncts(simplify_expr(p)):
            if _is(c, True) or c in out:
                continue
            out.append(c)
    if contradictory(out):
        return None
    return out


class _Pusher:
    def __init__(self, catalog):
        self.catalog = catalog

    def filter(self, node: RelationNode, preds) -> RelationNode:
        if not preds:
            return node
        return make_node(node.id, "Filter", (node,), (make_and(preds),), catalog=self.catalog)

    def empty(self, node: RelationNode) -> RelationNode:
        """Empty relation with ``node``'s output schema."""
        if node.kind == "Filter" and _is(node.exprs[0], False):
            return node
        return make_node(node.id, "Filter", (node,), (FALSE,), catalog=self.catalog)

    def push(self, node: RelationNode, preds) -> RelationNode:
        preds = normalize(preds)
        if preds is None:
            return self.empty(self.push(node, []))
        return getattr(self, "push_" + node.kind)(node, preds)

    def push_TableScan(self, node, preds):
        return self.filter(node, preds)

    def push_Filter(self, node, preds):
        mapped = [remap_expr(p, node.emit) for p in preds]
        combined = normalize(list(node.exprs) + mapped)
        child = node.children[0]
        if combined is None:
            return reemit(self.empty(self.push(child, [])), node.emit)
        return reemit(self.push(child, combined), node.emit)

    def push_Sort(self, node, preds):
        mapped = [remap_expr(p, node.emit) for p in preds]
        child = self.push(node.children[0], mapped)
        return rebuild(node, (child,), node.exprs, node.emit, self.catalog)

    def push_Limit(self, node, preds):
        child = self.push(node.children[0], [])
        return self.filter(rebuild(node, (child,), (), node.emit, self.catalog), preds)

    def push_Project(self, node, preds):
        outputs = [node.exprs[j] for j in node.emit]
        mapped = [substitute(p, outputs) for p in preds]
        child = self.push(node.children[0], mapped)
        exprs = [simplify_expr(e) for e in node.exprs]
        if child.kind == "Project":
            inner = [child.exprs[j] for j in child.emit]
            exprs = [simplify_expr(substitute(e, inner)) for e in exprs]
            child = child.children[0]
        return rebuild(node, (child,), exprs, node.emit, self.catalog)

    def push_Aggregate(self, node, preds):
        nkeys = sum(1 for e in node.exprs if not is_aggregate(e))
        keys = list(node.exprs[:nkeys])
        down, stay = [], []
        for p in preds:
            direct = remap_expr(p, node.emit)
            if all(f < nkeys for f in expr_fields(direct)):
                down.append(substitute(direct, keys))
            else:
                stay.append(p)
        child = self.push(node.children[0], down)
        agg = rebuild(node, (child,), node.exprs, node.emit, self.catalog)
        return self.filter(agg, stay)

    def push_Join(self, node, preds):
        left, right = node.children
        wl = len(left.schema)
        mapped = [remap_expr(p, node.emit) for p in preds]
        combined = normalize(list(node.exprs) + mapped)
        if combined is None:
            kids = (self.push(left, []), self.push(right, []))
            return self.empty(rebuild(node, kids, node.exprs, node.emit, self.catalog))
        lp, rp, stay = [], [], []
        for c in combined:
            fields = expr_fields(c)
            if fields and max(fields) < wl:
                lp.append(c)
            elif fields and min(fields) >= wl:
                rp.append(remap_expr(c, lambda i: i - wl))
            else:
                stay.append(c)
        new_l = self.push(left, lp)
        new_r = self.push(right, rp)
        cond = make_and(stay)
        return rebuild(node, (new_l, new_r), (cond,) if cond is not None else (), node.emit, self.catalog)


def pushdown_and_simplify(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Move every conjunct to the lowest node covering its columns and simplify."""
    return renumber(_Pusher(catalog).push(plan.root, []))
