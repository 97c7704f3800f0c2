"""Independent reference computations used by the tests.

Each oracle re-derives a result along a different route than the library:
nested loops instead of hash joins, closed-form join estimates instead of the
incremental greedy bookkeeping, one node at a time instead of batched levels.
"""

from __future__ import annotations

import math
import statistics
from functools import cmp_to_key

import numpy as np

from crossopt.executor import eval_scalar
from crossopt.plan import FieldRef, Literal, Operation, infer_type, input_schema

AGG = {"sum", "count", "count_star", "min", "max", "avg", "count_distinct"}


# ---------------------------------------------------------------------------
# relational


def _eval(e, row, schema):
    if isinstance(e, FieldRef):
        return row[e.index]
    if isinstance(e, Literal):
        return e.value
    args = [_eval(a, row, schema) for a in e.args]
    types = [infer_type(a, schema) for a in e.args]
    return eval_scalar(e.op, args, types)


def _agg(op, vals, arg_type):
    if op == "count_star":
        return len(vals)
    present = [v for v in vals if v is not None]
    if op == "count":
        return len(present)
    if op == "count_distinct":
        distinct = []
        for v in present:
            if v not in distinct:
                distinct.append(v)
        return len(distinct)
    if not present:
        return None
    if op == "sum":
        if arg_type == "integer":
            total = 0
            for v in present:
                total += v
            return total
        return math.fsum(present)
    if op == "avg":
        return math.fsum(present) / len(present)
    best = present[0]
    for v in present[1:]:
        if (op == "min" and v < best) or (op == "max" and v > best):
            best = v
    return best


def _cmp_values(a, b, nulls_last=True):
    if a is None and b is None:
        return 0
    if a is None:
        return 1 if nulls_last else -1
    if b is None:
        return -1 if nulls_last else 1
    return (a > b) - (a < b)


def _cmp_rows(r1, r2):
    for a, b in zip(r1, r2):
        c = _cmp_values(a, b)
        if c:
            return c
    return 0


def nested_loop_execute(node, catalog):
    """Rows of ``node`` computed with cartesian products and linear group search."""
    kids = [nested_loop_execute(c, catalog) for c in node.children]
    k = node.kind
    if k == "TableScan":
        t = catalog.table(node.table)
        rows = [tuple(col[i] for col in t.data) for i in range(t.stats.numRows)]
    elif k == "Filter":
        s = input_schema(node)
        rows = [r for r in kids[0] if _eval(node.exprs[0], r, s) is True]
    elif k == "Project":
        s = input_schema(node)
        rows = [tuple(_eval(e, r, s) for e in node.exprs) for r in kids[0]]
    elif k == "Join":
        s = input_schema(node)
        rows = []
        for a in kids[0]:
            for b in kids[1]:
                r = a + b
                if not node.exprs or _eval(node.exprs[0], r, s) is True:
                    rows.append(r)
    elif k == "Aggregate":
        s = input_schema(node)
        keys = [e for e in node.exprs if not (isinstance(e, Operation) and e.op in AGG)]
        measures = list(node.exprs[len(keys) :])
        groups: list = []
        for r in kids[0]:
            kv = tuple(_eval(e, r, s) for e in keys)
            for g in groups:
                if g[0] == kv:
                    g[1].append(r)
                    break
            else:
                groups.append((kv, [r]))
        if not keys and not groups:
            groups.append(((), []))
        rows = []
        for kv, members in groups:
            vals = []
            for m in measures:
                if m.op == "count_star":
                    vals.append(len(members))
                else:
                    col = [_eval(m.args[0], r, s) for r in members]
                    vals.append(_agg(m.op, col, infer_type(m.args[0], s)))
            rows.append(kv + tuple(vals))
    elif k == "Sort":
        s = input_schema(node)

        def cmp(r1, r2):
            for e, desc in zip(node.exprs, node.descending):
                a, b = _eval(e, r1, s), _eval(e, r2, s)
                c = _cmp_values(a, b)  # NULL compares as the largest value
                if c:
                    return -c if desc else c
            return _cmp_rows(r1, r2)

        rows = sorted(kids[0], key=cmp_to_key(cmp))
    elif k == "Limit":
        rows = kids[0][: node.limit]
    else:
        raise ValueError(k)
    return [tuple(r[i] for i in node.emit) for r in rows]


def canonical(rows):
    return sorted(rows, key=cmp_to_key(_cmp_rows))


# ---------------------------------------------------------------------------
# greedy join order


def closed_form_estimate(subset, input_rows, preds) -> float:
    est = 1.0
    for i in sorted(subset):
        est *= input_rows[i]
    for ins, sel in preds:
        if ins <= subset:
            est *= sel
    return est


def check_greedy_trace(rt) -> list[str]:
    """Re-enumerate every pair at each recorded step; returns violations."""
    problems = []
    for step, (parts, chosen, est) in enumerate(rt.steps):
        cands = []
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                a, b = parts[i], parts[j]
                connected = any(ins & a and ins & b and ins <= (a | b) for ins, _ in rt.preds)
                cands.append((closed_form_estimate(a | b, rt.input_rows, rt.preds), connected, {a, b}))
        if any(c[1] for c in cands):
            cands = [c for c in cands if c[1]]
        best = min(c[0] for c in cands)
        mine = closed_form_estimate(chosen[0] | chosen[1], rt.input_rows, rt.preds)
        if {chosen[0], chosen[1]} not in [c[2] for c in cands]:
            problems.append(f"step {step}: chosen pair is not an allowed candidate")
        if not math.isclose(mine, est, rel_tol=1e-9, abs_tol=1e-300):
            problems.append(f"step {step}: recorded estimate {est} != closed form {mine}")
        if mine > best * (1 + 1e-9):
            problems.append(f"step {step}: chose {mine} but {best} was available")
    return problems


# ---------------------------------------------------------------------------
# cost model, one node at a time in float64


def _mlp(layers, x):
    h = np.asarray(x, dtype=np.float64)
    for k, (W, b) in enumerate(layers):
        h = h @ np.asarray(W, np.float64) + np.asarray(b, np.float64)
        if k < len(layers) - 1:
            h = np.where(h > 0, h, 0.0)
    return h


def naive_embedding(model, graph, order=None):
    d = model.config.dim
    parents_in = [[] for _ in graph.types]
    for u, v in graph.edges:
        parents_in[v].append(u)
    hp = {}
    for v in order if order is not None else graph.topo:
        t = graph.types[v]
        h = _mlp(model.params[f"enc/{t}"], graph.features[v])
        s = np.zeros(d)
        for u in parents_in[v]:
            s = s + hp[u]
        hp[v] = _mlp(model.params[f"hid/{t}"], np.concatenate([s, h]))
    return np.mean([hp[r] for r in graph.relation_ids], axis=0)


def naive_set_embedding(model, graph):
    d = model.config.dim
    parts = []
    for t in model.config.encoded_types:
        ids = [i for i, x in enumerate(graph.types) if x == t]
        if ids:
            parts.append(np.mean([_mlp(model.params[f"enc/{t}"], graph.features[i]) for i in ids], axis=0))
        else:
            parts.append(np.zeros(d))
    return np.concatenate(parts)


def naive_predict(model, graph):
    e = naive_embedding(model, graph) if model.config.kind == "gnn" else naive_set_embedding(model, graph)
    return np.array([_mlp(model.params[f"head/{n}"], e)[0] for n in model.engines])


def naive_loss(model, items):
    per_item = []
    for g, y in items:
        p = naive_predict(model, g)
        qs = []
        for pi, ti in zip(p, y):
            qs.append(max(pi / ti, ti / pi) if pi > 0 else 100.0 + 100.0 * (1 + abs(pi) / ti))
        per_item.append(sum(qs) / len(qs))
    return sum(per_item) / len(per_item)


def dfs_postorder(graph):
    """A second valid topological order: reverse postorder of a DFS from the sinks."""
    preds = [[] for _ in graph.types]
    for u, v in graph.edges:
        preds[v].append(u)
    seen, order = set(), []

    def visit(v):
        if v in seen:
            return
        seen.add(v)
        for u in sorted(preds[v], reverse=True):
            visit(u)
        order.append(v)

    for v in reversed(range(len(graph.types))):
        visit(v)
    return order


# ---------------------------------------------------------------------------
# metrics


def brute_metrics(preds, truths):
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    meds, means, p95s = [], [], []
    for e in range(truths.shape[1]):
        qs = sorted(max(max(p, 1e-9) / t, t / max(p, 1e-9)) for p, t in zip(preds[:, e], truths[:, e]))
        meds.append(statistics.median(qs))
        means.append(statistics.fmean(qs))
        rank = math.ceil(0.95 * len(qs))
        p95s.append(qs[rank - 1])
    return statistics.fmean(meds), statistics.fmean(means), statistics.fmean(p95s)

