"""Plan rewriting: trimming, pushdown, greedy join ordering and cost hints."""

from __future__ import annotations

from ..plan import LogicalPlan, plan_equal, renumber, strip_hints
from .hints import Estimator, annotate_hints, output_width
from .joins import RegionTrace, order_joins
from .pushdown import contradictory, normalize, pushdown_and_simplify, simplify_expr
from .selectivity import MIN_SELECTIVITY, estimate_selectivity, input_stats, origin_stats
from .trim import trim_plan

MAX_PASSES = 6


def rewrite(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Apply trim, pushdown and join ordering until the plan stops changing."""
    cur = renumber(strip_hints(plan))
    for _ in range(MAX_PASSES):
        nxt = trim_plan(cur, catalog)
        nxt = pushdown_and_simplify(nxt, catalog)
        nxt = order_joins(nxt, catalog)
        nxt = trim_plan(nxt, catalog)
        if plan_equal(nxt, cur):
            break
        cur = nxt
    return cur


def optimize(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Optimized plan annotated with cost hints."""
    return annotate_hints(rewrite(plan, catalog), catalog)


def prepare_unoptimized(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Plan as written, only trimmed and annotated (the comparison baseline)."""
    return annotate_hints(trim_plan(strip_hints(plan), catalog), catalog)


__all__ = [
    "Estimator",
    "MIN_SELECTIVITY",
    "RegionTrace",
    "annotate_hints",
    "contradictory",
    "estimate_selectivity",
    "input_stats",
    "normalize",
    "optimize",
    "order_joins",
    "origin_stats",
    "output_width",
    "prepare_unoptimized",
    "pushdown_and_simplify",
    "rewrite",
    "simplify_expr",
    "trim_plan",
]
