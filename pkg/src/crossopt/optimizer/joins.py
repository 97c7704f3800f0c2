"""Greedy bushy join ordering.

A join region is a maximal tree of Join nodes; its non-Join children are the
region inputs and its join conditions form a predicate pool. The greedy loop
repeatedly joins the two subtrees with the smallest estimated output,
restricted to predicate-connected pairs whenever one exists. Ties go to the
narrower combined schema, then to the pair whose inputs have the smallest
structural keys, so the result does not depend on node id numbering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..plan import (
    FieldRef,
    LogicalPlan,
    RelationNode,
    column_origins,
    conjuncts,
    expr_fields,
    expr_to_json,
    make_and,
    make_node,
    plan_structure,
    remap_expr,
    renumber,
)
from .hints import Estimator
from .selectivity import estimate_selectivity, origin_stats

_STRIDE = 1 << 20  # global column id = input * _STRIDE + column


@dataclass
class _Item:
    node: RelationNode
    cols: list  # global column ids of the node's output
    inputs: frozenset
    est: float
    key: tuple


@dataclass
class _Pred:
    expr: object  # over global column ids
    inputs: frozenset
    sel: float


@dataclass
class RegionTrace:
    """What the greedy loop saw in one join region, for external checking."""

    input_rows: list = field(default_factory=list)
    preds: list = field(default_factory=list)  # (frozenset of inputs, selectivity)
    steps: list = field(default_factory=list)  # (partition before step, chosen pair, estimate)


def _expr_key(e) -> str:
    return json.dumps(expr_to_json(e), sort_keys=True)


class JoinOrderer:
    def __init__(self, catalog, trace: list | None = None):
        self.catalog = catalog
        self.trace = trace
        self.est = Estimator(catalog)

    def rewrite(self, node: RelationNode) -> RelationNode:
        if node.kind == "Join":
            return self.region(node)
        if not node.children:
            return node
        return node.with_(children=tuple(self.rewrite(c) for c in node.children))

    def region(self, top: RelationNode) -> RelationNode:
        inputs: list[RelationNode] = []
        raw_preds: list = []

        def collect(n: RelationNode) -> list:
            if n.kind != "Join":
                i = len(inputs)
                inputs.append(self.rewrite(n))
                return [i * _STRIDE + c for c in range(len(n.schema))]
            direct = collect(n.children[0]) + collect(n.children[1])
            for c in conjuncts(n.exprs[0]) if n.exprs else []:
                raw_preds.append(remap_expr(c, lambda d: direct[d]))
            return [direct[j] for j in n.emit]

        final_cols = collect(top)
        origins = {}
        for i, n in enumerate(inputs):
            for c, o in enumerate(column_origins(n, self.catalog)):
                origins[i * _STRIDE + c] = o
        lookup_by_gid = lambda g: origin_stats([origins.get(g)], self.catalog)(0)

        pool = []
        for p in raw_preds:
            ins = frozenset(g // _STRIDE for g in expr_fields(p))
            pool.append(_Pred(p, ins, estimate_selectivity(p, lookup_by_gid)))

        items = []
        for i, n in enumerate(inputs):
            key = (plan_structure(LogicalPlan(n)), i)
            cols = [i * _STRIDE + c for c in range(len(n.schema))]
            items.append(_Item(n, cols, frozenset([i]), self.est.rows(n), key))

        rt = None
        if self.trace is not None:
            rt = RegionTrace([it.est for it in items], [(p.inputs, p.sel) for p in pool])
            self.trace.append(rt)

        while len(items) > 1:
            scored = []
            for a in range(len(items)):
                for b in range(a + 1, len(items)):
                    A, B = items[a], items[b]
                    union = A.inputs | B.inputs
                    app = [p for p in pool if p.inputs <= union]
                    connected = any(p.inputs & A.inputs and p.inputs & B.inputs for p in app)
                    est = A.est * B.est
                    for p in app:
                        est *= p.sel
                    width = len(A.cols) + len(B.cols)
                    keys = tuple(sorted((A.key, B.key)))
                    scored.append((est, not connected, width, keys, a, b, app))
            if any(not s[1] for s in scored):
                scored = [s for s in scored if not s[1]]
            best = min(scored, key=lambda s: s[:4])
            assert all(best[0] <= s[0] for s in scored), "greedy step is not minimal"
            est, _, _, _, a, b, app = best
            if rt is not None:
                rt.steps.append(([it.inputs for it in items], (items[a].inputs, items[b].inputs), est))
            L, R = items[a], items[b]
            if R.key < L.key:
                L, R = R, L
            pool = [p for p in pool if not any(p is q for q in app)]
            last = len(items) == 2
            joined = self.join(L, R, app, pool, final_cols, last, est)
            items = [it for k, it in enumerate(items) if k not in (a, b)] + [joined]
        return items[0].node

    def join(self, L: _Item, R: _Item, app, pool, final_cols, last, est) -> _Item:
        direct = L.cols + R.cols
        pos = {g: k for k, g in reversed(list(enumerate(direct)))}
        conds = sorted((remap_expr(p.expr, pos) for p in app), key=_expr_key)
        cond = make_and(conds)
        if last:
            emit = [pos[g] for g in final_cols]
        else:
            needed = set(final_cols)
            for p in pool:
                needed |= expr_fields(p.expr)
            emit = [k for k, g in enumerate(direct) if g in needed] or [0]
        node = make_node(0, "Join", (L.node, R.node), (cond,) if cond is not None else (), emit, catalog=self.catalog)
        return _Item(node, [direct[k] for k in emit], L.inputs | R.inputs, est, min(L.key, R.key))


def order_joins(plan: LogicalPlan, catalog, trace: list | None = None) -> LogicalPlan:
    """Reorder every join region greedily; appends a RegionTrace per region to ``trace``."""
    return renumber(JoinOrderer(catalog, trace).rewrite(plan.root))
