"""Cardinality and row-width hints propagated bottom-up through a plan."""

from __future__ import annotations

import math

from ..dtypes import TYPE_WIDTH, VARCHAR_DEFAULT_WIDTH
from ..plan import FieldRef, Hints, Literal, LogicalPlan, RelationNode, column_origins, is_aggregate
from .selectivity import estimate_selectivity, input_stats, origin_stats


def is_false(pred) -> bool:
    """Literal predicate that never holds (FALSE or NULL)."""
    return isinstance(pred, Literal) and pred.value is not True


class Estimator:
    """Memoized row and width estimates for plan subtrees."""

    def __init__(self, catalog):
        self.catalog = catalog
        # keyed by id(); the node is kept alive so ids are never reused
        self._rows: dict[int, tuple] = {}

    def rows(self, node: RelationNode) -> float:
        key = id(node)
        hit = self._rows.get(key)
        if hit is None:
            hit = (node, self._estimate(node))
            self._rows[key] = hit
        return hit[1]

    def _estimate(self, node: RelationNode) -> float:
        k = node.kind
        if k == "TableScan":
            return float(self.catalog.table(node.table).stats.numRows)
        child = self.rows(node.children[0])
        if k == "Filter":
            pred = node.exprs[0]
            if is_false(pred):
                return 0.0
            return child * estimate_selectivity(pred, input_stats(node, self.catalog))
        if k == "Join":
            out = child * self.rows(node.children[1])
            if node.exprs:
                if is_false(node.exprs[0]):
                    return 0.0
                out *= estimate_selectivity(node.exprs[0], input_stats(node, self.catalog))
            return out
        if k == "Aggregate":
            keys = [e for e in node.exprs if not is_aggregate(e)]
            if not keys:
                return 1.0
            stats = input_stats(node, self.catalog)
            groups = 1.0
            for e in keys:
                st = stats(e.index) if isinstance(e, FieldRef) else None
                groups *= child if st is None else max(1, st[0].numDistinctVals)
                if groups >= child:
                    break
            return min(child, groups)
        if k == "Limit":
            return min(child, float(node.limit))
        return child

    def row_size(self, node: RelationNode) -> float:
        if node.kind == "TableScan":
            return float(self.catalog.table(node.table).stats.avgRowSize)
        return output_width(node, self.catalog)


def output_width(node: RelationNode, catalog) -> float:
    """Sum of per-column average widths of ``node``'s output, at least 1."""
    lookup = origin_stats(column_origins(node, catalog), catalog)
    total = 0.0
    for i, (_, dtype) in enumerate(node.schema):
        st = lookup(i)
        if st is not None:
            total += st[0].avgColSize
        else:
            total += TYPE_WIDTH.get(dtype, VARCHAR_DEFAULT_WIDTH)
    return max(1.0, total)


def annotate_hints(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Attach ``Hints(est_rows, avg_row_size)`` to every relation node."""
    est = Estimator(catalog)

    def go(n: RelationNode) -> RelationNode:
        kids = tuple(go(c) for c in n.children)
        rows = est.rows(n)
        if not math.isfinite(rows) or rows < 0:
            raise ValueError(f"non-finite row estimate at node {n.id}")
        return n.with_(children=kids, hints=Hints(rows, est.row_size(n)))

    return LogicalPlan(go(plan.root))
