"""Column pruning and foreign-key join elimination.

Every node is rebuilt to output only the columns some ancestor (or the final
result) reads. A join against a bare scan of a referenced table whose only
used column is the referenced key is dropped: by referential integrity each
row with a non-NULL foreign key matches exactly one key row, so the join
reduces to ``fk IS NOT NULL`` with the key read from the foreign key column.
"""

from __future__ import annotations

from ..plan import (
    FieldRef,
    LogicalPlan,
    Operation,
    RelationNode,
    column_origins,
    conjuncts,
    expr_fields,
    is_aggregate,
    make_node,
    remap_expr,
    renumber,
)


def reemit(node: RelationNode, sel) -> RelationNode:
    """``node`` restricted to (and reordered as) output columns ``sel``."""
    sel = tuple(sel)
    if sel == tuple(range(len(node.schema))):
        return node
    return node.with_(emit=tuple(node.emit[j] for j in sel), schema=tuple(node.schema[j] for j in sel))


def rebuild(node: RelationNode, children, exprs, emit, catalog, **kw) -> RelationNode:
    args = dict(table=node.table, names=node.names, descending=node.descending, limit=node.limit)
    args.update(kw)
    return make_node(node.id, node.kind, children, exprs, emit, catalog=catalog, **args)


def _fields(exprs) -> set[int]:
    out: set[int] = set()
    for e in exprs:
        out |= expr_fields(e)
    return out


class _Pruner:
    def __init__(self, catalog):
        self.catalog = catalog

    def prune(self, node: RelationNode, needed: list[int]) -> tuple[RelationNode, dict[int, int]]:
        """Rebuild ``node`` to output exactly ``needed`` (sorted, distinct output indices).

        Returns the new node and the map from old to new output positions.
        """
        if not needed:
            needed = [self.cheapest(node)]
        out = getattr(self, "prune_" + node.kind)(node, needed)
        return out, {old: new for new, old in enumerate(needed)}

    def cheapest(self, node: RelationNode) -> int:
        if node.kind != "TableScan":
            return 0
        cols = self.catalog.table(node.table).columns
        return min(range(len(node.emit)), key=lambda i: (cols[node.emit[i]].stats.avgColSize, i))

    def prune_TableScan(self, node, needed):
        return reemit(node, needed)

    def _passthrough(self, node, needed):
        child = node.children[0]
        req = sorted({node.emit[i] for i in needed} | _fields(node.exprs))
        new_child, m = self.prune(child, req)
        exprs = [remap_expr(e, m) for e in node.exprs]
        return rebuild(node, (new_child,), exprs, [m[node.emit[i]] for i in needed], self.catalog)

    prune_Filter = prune_Sort = prune_Limit = _passthrough

    def _computed(self, node, keep):
        exprs = [node.exprs[k] for k in keep]
        req = sorted(_fields(exprs))
        new_child, m = self.prune(node.children[0], req)
        names = tuple(node.names[k] for k in keep)
        return rebuild(node, (new_child,), [remap_expr(e, m) for e in exprs], None, self.catalog, names=names), keep

    def prune_Project(self, node, needed):
        keep = sorted({node.emit[i] for i in needed})
        new, keep = self._computed(node, keep)
        pos = {k: j for j, k in enumerate(keep)}
        return reemit(new, [pos[node.emit[i]] for i in needed])

    def prune_Aggregate(self, node, needed):
        nkeys = sum(1 for e in node.exprs if not is_aggregate(e))
        keep = sorted(set(range(nkeys)) | {node.emit[i] for i in needed})
        new, keep = self._computed(node, keep)
        pos = {k: j for j, k in enumerate(keep)}
        return reemit(new, [pos[node.emit[i]] for i in needed])

    def prune_Join(self, node, needed):
        left, right = node.children
        wl = len(left.schema)
        direct = {node.emit[i] for i in needed} | _fields(node.exprs)
        new_l, lm = self.prune(left, sorted(d for d in direct if d < wl))
        new_r, rm = self.prune(right, sorted(d - wl for d in direct if d >= wl))
        nl = len(new_l.schema)

        def where(d: int) -> int:
            return lm[d] if d < wl else nl + rm[d - wl]

        elim = self.eliminate(node, new_l, new_r, where)
        if elim is not None:
            keep, fk_pos, pk_direct, kept_is_left = elim
            out = []
            for i in needed:
                d = node.emit[i]
                if d == pk_direct:
                    out.append(fk_pos)
                elif kept_is_left:
                    out.append(lm[d])
                else:
                    out.append(rm[d - wl])
            return reemit(keep, out)
        exprs = [remap_expr(e, where) for e in node.exprs]
        return rebuild(node, (new_l, new_r), exprs, [where(node.emit[i]) for i in needed], self.catalog)

    def eliminate(self, node, new_l, new_r, where):
        """Detect an fk = pk join against a bare key-only scan; see module docstring."""
        if len(node.exprs) != 1:
            return None
        parts = conjuncts(node.exprs[0])
        if len(parts) != 1:
            return None
        c = parts[0]
        if not (isinstance(c, Operation) and c.op == "eq" and all(isinstance(a, FieldRef) for a in c.args)):
            return None
        wl = len(node.children[0].schema)
        a, b = c.args[0].index, c.args[1].index
        if (a < wl) == (b < wl):
            return None
        for parent_side, kept_side in ((new_r, new_l), (new_l, new_r)):
            if parent_side.kind != "TableScan" or len(parent_side.schema) != 1:
                continue
            kept_is_left = kept_side is new_l
            pk_direct, fk_direct = (max(a, b), min(a, b)) if kept_is_left else (min(a, b), max(a, b))
            pk_origin = column_origins(parent_side, self.catalog)[0]
            fk_pos = where(fk_direct) - (0 if kept_is_left else len(new_l.schema))
            fk_origin = column_origins(kept_side, self.catalog)[fk_pos]
            if fk_origin is None:
                continue
            edge_ok = any(
                e.src_table == fk_origin.table
                and e.src_column == fk_origin.column
                and e.dst_table == pk_origin.table
                and e.dst_column == pk_origin.column
                for e in self.catalog.fk_edges
            )
            if not edge_ok:
                continue
            keep = kept_side
            stats = self.catalog.table(fk_origin.table).column(fk_origin.column).stats
            if stats.numNulls > 0:
                test = Operation("is_not_null", (FieldRef(fk_pos),))
                keep = make_node(node.id, "Filter", (kept_side,), (test,), catalog=self.catalog)
            return keep, fk_pos, pk_direct, kept_is_left
        return None


def trim_plan(plan: LogicalPlan, catalog) -> LogicalPlan:
    """Prune unused columns everywhere and drop joins that only check fk existence."""
    root = plan.root
    new, _ = _Pruner(catalog).prune(root, list(range(len(root.schema))))
    return renumber(new)
