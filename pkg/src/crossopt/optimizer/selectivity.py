"""Selinger-style selectivity estimation.

Every estimate lies in ``[MIN_SELECTIVITY, 1]``. Column statistics are looked
up through a callable mapping an input field index to ``(ColumnStats,
numRows)`` of the base column it passes through from, or ``None`` when the
field is computed or its origin is unknown.
"""

from __future__ import annotations

from typing import Callable, Optional

from ..catalog import ColumnStats
from ..plan import FieldRef, Literal, Operation, RelationNode, column_origins

MIN_SELECTIVITY = 1e-12

RANGE = 1.0 / 3.0
BETWEEN = 1.0 / 4.0
LIKE = 1.0 / 10.0
DEFAULT = 1.0 / 10.0
IN_LIST_CAP = 0.5

StatsFn = Callable[[int], Optional[tuple]]


def clamp(s: float) -> float:
    return min(1.0, max(MIN_SELECTIVITY, s))


def _stats(e, stats: StatsFn) -> Optional[tuple[ColumnStats, int]]:
    if isinstance(e, FieldRef):
        return stats(e.index)
    return None


def _ndv(e, stats: StatsFn) -> Optional[int]:
    st = _stats(e, stats)
    return None if st is None else max(1, st[0].numDistinctVals)


def _eq(a, b, stats: StatsFn) -> float:
    if isinstance(a, Literal) and not isinstance(b, Literal):
        a, b = b, a
    if isinstance(b, Literal):
        if b.value is None:
            return MIN_SELECTIVITY
        n = _ndv(a, stats)
        return DEFAULT if n is None else 1.0 / n
    na, nb = _ndv(a, stats), _ndv(b, stats)
    if na is None and nb is None:
        return DEFAULT
    return 1.0 / max(n for n in (na, nb) if n is not None)


def _raw(e, stats: StatsFn) -> float:
    if isinstance(e, Literal):
        return 1.0 if e.value is True else 0.0
    if isinstance(e, FieldRef):
        # bare boolean column used as a predicate
        n = _ndv(e, stats)
        return DEFAULT if n is None else 1.0 / n
    op, args = e.op, e.args
    if op == "and":
        return clamp(_raw(args[0], stats)) * clamp(_raw(args[1], stats))
    if op == "or":
        s1, s2 = clamp(_raw(args[0], stats)), clamp(_raw(args[1], stats))
        return s1 + s2 - s1 * s2
    if op == "not":
        return 1.0 - clamp(_raw(args[0], stats))
    if op == "eq":
        return _eq(args[0], args[1], stats)
    if op == "ne":
        return 1.0 - _eq(args[0], args[1], stats)
    if op in ("lt", "le", "gt", "ge"):
        return RANGE
    if op == "between":
        return BETWEEN
    if op == "in_list":
        n = _ndv(args[0], stats)
        if n is None:
            return DEFAULT
        return min((len(args) - 1) / n, IN_LIST_CAP)
    if op == "like":
        return LIKE
    if op in ("is_null", "is_not_null"):
        st = _stats(args[0], stats)
        if st is None or st[1] <= 0:
            return DEFAULT
        frac = st[0].numNulls / st[1]
        return frac if op == "is_null" else 1.0 - frac
    return DEFAULT


def estimate_selectivity(pred, stats: StatsFn | None = None) -> float:
    """Fraction of input rows that satisfy ``pred``."""
    return clamp(_raw(pred, stats or (lambda i: None)))


def origin_stats(origins, catalog) -> StatsFn:
    """Stats lookup over a list of :class:`ColumnOrigin` (or None) entries."""

    def lookup(i: int):
        if not 0 <= i < len(origins) or origins[i] is None:
            return None
        o = origins[i]
        t = catalog.table(o.table)
        return t.column(o.column).stats, t.stats.numRows

    return lookup


def input_stats(node: RelationNode, catalog) -> StatsFn:
    """Stats lookup for expressions over ``node``'s input columns."""
    origins = []
    for c in node.children:
        origins.extend(column_origins(c, catalog))
    return origin_stats(origins, catalog)
