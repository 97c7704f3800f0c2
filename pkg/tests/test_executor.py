import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossopt.catalog import Catalog, build_table
from crossopt.executor import ExecProfile, NodeProfile, ResourceLimitExceeded, execute
from crossopt.optimizer import optimize, prepare_unoptimized
from crossopt.simulator import (
    EngineSpec,
    default_fleet,
    label_workload,
    load_fleet,
    load_labeled,
    node_work,
    save_fleet,
    save_labeled,
    simulate_time,
    work_seconds,
)
from crossopt.sql import sql_to_plan
from oracles import canonical, nested_loop_execute


@pytest.fixture(scope="module")
def ten():
    """One 10-row table with a nullable column."""
    vals = [3, 7, None, 5, 9, 1, 6, None, 10, 5]
    return Catalog("ten", (build_table("t", [("id", "integer"), ("x", "integer")], [list(range(10)), vals]),), ())


def run(sql, cat):
    return execute(sql_to_plan(sql, cat), cat)[0]


# ---------------------------------------------------------------------------
# reference executor


def test_filter_matches_brute_force(ten):
    rows = run("SELECT t.id, t.x FROM t WHERE t.x > 5", ten)
    data = ten.table("t").data
    want = [(i, x) for i, x in zip(*data) if x is not None and x > 5]
    assert canonical(rows) == canonical(want)


def test_count_over_empty_input_is_one_zero_row(ten):
    assert run("SELECT COUNT(*) FROM t WHERE t.x > 100", ten) == [(0,)]
    assert run("SELECT t.x, COUNT(*) FROM t WHERE t.x > 100 GROUP BY t.x", ten) == []


def test_three_valued_logic(ten):
    # NULL > 5 is unknown: neither the predicate nor its negation keeps the row
    pos = run("SELECT t.id FROM t WHERE t.x > 5", ten)
    neg = run("SELECT t.id FROM t WHERE NOT (t.x > 5)", ten)
    assert len(pos) + len(neg) == 8
    assert run("SELECT t.id FROM t WHERE t.x > 5 OR t.x IS NULL", ten).__len__() == len(pos) + 2
    assert len(run("SELECT t.id FROM t WHERE t.x = NULL", ten)) == 0


def test_aggregates_skip_nulls(ten):
    ((s, c, cs, mn, mx, avg),) = run("SELECT SUM(t.x), COUNT(t.x), COUNT(*), MIN(t.x), MAX(t.x), AVG(t.x) FROM t", ten)
    present = [v for v in ten.table("t").data[1] if v is not None]
    assert (s, c, cs, mn, mx) == (sum(present), len(present), 10, min(present), max(present))
    assert avg == pytest.approx(sum(present) / len(present), rel=1e-15)


def test_sort_and_limit_prefix(ten):
    # NULL sorts as the largest value: first when descending, last when ascending
    rows = run("SELECT t.x, t.id FROM t ORDER BY 1 DESC LIMIT 4", ten)
    assert [r[0] for r in rows] == [None, None, 10, 9]
    asc = run("SELECT t.x FROM t ORDER BY 1", ten)
    assert asc[-2:] == [(None,), (None,)]


def test_fk_join_size_bounded_by_fanout(tiny_catalog):
    for e in tiny_catalog.fk_edges:
        sql = f"SELECT {e.src_table}.id FROM {e.src_table} JOIN {e.dst_table} ON {e.src_table}.{e.src_column} = {e.dst_table}.{e.dst_column}"
        plan = sql_to_plan(sql, tiny_catalog)
        rows, prof = execute(plan, tiny_catalog)
        child = tiny_catalog.table(e.src_table)
        parent = tiny_catalog.table(e.dst_table)
        fks = child.data[child.column_index(e.src_column)]
        fanout = max(list(fks).count(k) for k in parent.data[parent.column_index(e.dst_column)])
        assert len(rows) <= parent.stats.numRows * fanout
        assert len(rows) <= child.stats.numRows
        assert len(rows) == len(nested_loop_execute(plan.root, tiny_catalog))


def test_profile_edges_are_consistent(tiny_catalog, tiny_workload):
    for sql in tiny_workload[:60]:
        plan = optimize(sql_to_plan(sql, tiny_catalog), tiny_catalog)
        rows, prof = execute(plan, tiny_catalog)
        by_id = prof.by_id()
        for node in plan.nodes():
            rec = by_id[node.id]
            assert rec.kind == node.kind
            assert rec.rows_in == tuple(by_id[c.id].rows_out for c in node.children)
            assert rec.rows_out >= 0
        assert prof.output_rows == len(rows) == by_id[plan.root.id].rows_out


def test_resource_cap(tiny_catalog):
    plan = sql_to_plan("SELECT t0.id FROM t0 JOIN t1 ON t0.id > t1.id", tiny_catalog)
    with pytest.raises(ResourceLimitExceeded):
        execute(plan, tiny_catalog, max_rows=100)
    execute(plan, tiny_catalog, max_rows=10_000)


@settings(max_examples=80, deadline=None)
@given(st.data())
def test_matches_nested_loop_oracle(tiny_catalog, tiny_workload, data):
    sql = data.draw(st.sampled_from(tiny_workload))
    raw = sql_to_plan(sql, tiny_catalog)
    for plan in (raw, optimize(raw, tiny_catalog), prepare_unoptimized(raw, tiny_catalog)):
        got = execute(plan, tiny_catalog)[0]
        want = nested_loop_execute(plan.root, tiny_catalog)
        assert canonical(got) == canonical(want)
        if any(n.kind == "Sort" for n in plan.nodes()) and plan.root.kind in ("Sort", "Limit"):
            assert got == want


# ---------------------------------------------------------------------------
# simulator


def _profile(*nodes):
    return ExecProfile(tuple(nodes), nodes[-1].rows_out if nodes else 0)


def test_empty_profile_costs_startup_times_noise():
    e = default_fleet()[2]
    assert simulate_time(ExecProfile((), 0), e) == e.startup
    assert simulate_time(ExecProfile((), 0), e, z=1.5) == pytest.approx(e.startup * math.exp(0.05 * 1.5), rel=1e-15)


def test_formula_by_hand():
    e = EngineSpec("x", 4, 0.5, {"TableScan": 1e-3, "Join": 2e-3, "Sort": 1e-4}, 0.8, 0.0)
    prof = _profile(
        NodeProfile(0, "TableScan", (), 100, 100),
        NodeProfile(1, "TableScan", (), 50, 50),
        NodeProfile(2, "Join", (100, 50), 30),
        NodeProfile(3, "Sort", (30,), 30),
    )
    work = 1e-3 * 150 + 2e-3 * (100 + 50 + 30) + 1e-4 * 30 * math.log2(32)
    assert simulate_time(prof, e) == pytest.approx(0.5 + work / 4**0.8, rel=1e-12)


def test_work_terms():
    assert node_work(NodeProfile(0, "TableScan", (), 3, 40)) == 40
    assert node_work(NodeProfile(0, "Filter", (40,), 3)) == 40
    assert node_work(NodeProfile(0, "Aggregate", (40,), 3)) == 43
    assert node_work(NodeProfile(0, "Limit", (40,), 3)) == 3


def test_doubling_work_doubles_variable_term():
    e = replace(default_fleet()[1], noise_sigma=0.0)
    one = _profile(NodeProfile(0, "TableScan", (), 500, 500))
    two = _profile(NodeProfile(0, "TableScan", (), 1000, 1000))
    var = simulate_time(one, e) - e.startup
    assert simulate_time(two, e) == pytest.approx(e.startup + 2 * var, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.sampled_from(["TableScan", "Filter", "Join", "Aggregate", "Sort", "Limit"]), st.integers(0, 10**6)), min_size=1, max_size=6),
    st.integers(0, 5),
    st.integers(1, 10**5),
    st.floats(0, 10),
)
def test_monotone_in_work_and_startup(items, which, extra, bump):
    def prof(items):
        out = []
        for i, (k, n) in enumerate(items):
            rows_in = () if k == "TableScan" else ((n, n) if k == "Join" else (n,))
            out.append(NodeProfile(i, k, rows_in, n, n if k == "TableScan" else 0))
        return _profile(*out)

    for e in default_fleet(noise_sigma=0.0):
        base = simulate_time(prof(items), e)
        bigger = list(items)
        k, n = bigger[which % len(items)]
        bigger[which % len(items)] = (k, n + extra)
        assert simulate_time(prof(bigger), e) >= base
        assert simulate_time(prof(items), replace(e, startup=e.startup + bump)) >= base


def test_golden_labels(tiny_catalog):
    from conftest import TOY_SQL

    got = [q.y for q in label_workload(TOY_SQL, tiny_catalog, default_fleet(), seed=42)]
    # computed once from the formula and frozen
    want = [
        (0.41068978377714277, 0.5710007384566653, 5.194433002229522, 6.289993931245682),
        (0.4210406155524966, 0.6422933773668468, 5.136032593176702, 6.0435358255344935),
        (0.41990318001381155, 0.5800911281505605, 5.373535682951078, 5.725922323708554),
    ]
    for g, w in zip(got, want):
        assert g == pytest.approx(w, rel=1e-12)


def test_label_shape_and_determinism(tiny_catalog, tiny_workload):
    fleet = default_fleet()
    stats = []
    a = label_workload(tiny_workload[:100], tiny_catalog, fleet, seed=5, stats=stats)
    b = label_workload(tiny_workload[:100], tiny_catalog, fleet, seed=5)
    assert stats[0].kept + stats[0].dropped_timeout + stats[0].dropped_resource == 100
    assert len(a) == stats[0].kept
    assert all(len(q.y) == 4 and min(q.y) > 0 for q in a)
    assert [q.y for q in a] == [q.y for q in b]
    assert [q.y for q in a] != [q.y for q in label_workload(tiny_workload[:100], tiny_catalog, fleet, seed=6)]


def test_dominant_engine_always_wins(tiny_catalog, tiny_workload):
    slow = EngineSpec("slow", 1, 1.0, {k: 2e-4 for k in ("TableScan", "Filter", "Join")}, 0.8, 0.0)
    fast = EngineSpec("fast", 1, 0.5, {k: 1e-4 for k in ("TableScan", "Filter", "Join")}, 0.8, 0.0)
    labels = label_workload(tiny_workload[:50], tiny_catalog, [slow, fast], seed=0)
    assert labels and all(q.y[1] < q.y[0] for q in labels)


def test_timeout_drops_only_when_every_engine_is_slow(tiny_catalog, tiny_workload):
    stats = []
    kept = label_workload(tiny_workload[:40], tiny_catalog, default_fleet(), seed=0, timeout=0.45, stats=stats)
    assert stats[0].dropped_timeout > 0
    # presto_w1 starts at 0.4 s, so every kept query has some engine under the limit noise-free
    assert all(min(q.y) <= 0.45 * math.exp(0.05 * 5) for q in kept)
    judged = label_workload(tiny_workload[:40], tiny_catalog, default_fleet(with_w8=True), seed=0, timeout=0.45, timeout_fleet=default_fleet())
    assert len(judged) == len(kept)


def test_default_fleet_is_not_dominated():
    from crossopt.harness.suite import default_catalogs
    from crossopt.harness.workload import WorkloadConfig, generate_workload

    cat = default_catalogs(0)[0]
    queries = generate_workload(cat, WorkloadConfig(query_count=200, seed=9))
    fleet = default_fleet(noise_sigma=0.0)
    labels = label_workload(queries, cat, fleet, seed=0)
    for start in range(0, len(labels) - 99, 50):
        winners = {min(range(4), key=lambda i: q.y[i]) for q in labels[start : start + 100]}
        assert len(winners) >= 2


def test_fleet_and_label_files_round_trip(tmp_path, tiny_catalog):
    from conftest import TOY_SQL

    save_fleet(default_fleet(with_w8=True), tmp_path / "fleet.json")
    assert load_fleet(tmp_path / "fleet.json") == default_fleet(with_w8=True)
    labels = label_workload(TOY_SQL, tiny_catalog, default_fleet(), seed=1)
    save_labeled(labels, tmp_path / "l.jsonl")
    assert load_labeled(tmp_path / "l.jsonl") == labels


@pytest.mark.parametrize(
    "kw",
    [dict(workers=0), dict(startup=-1.0), dict(parallel_exponent=0.0), dict(noise_sigma=-0.1), dict(per_row_cost={"Scan": 1.0})],
)
def test_engine_spec_validation(kw):
    base = dict(name="e", workers=1, startup=0.1)
    base.update(kw)
    with pytest.raises(ValueError):
        EngineSpec(**base)


def test_work_seconds_sums_per_kind():
    e = default_fleet()[0]
    prof = _profile(NodeProfile(0, "TableScan", (), 10, 10), NodeProfile(1, "Filter", (10,), 2))
    assert work_seconds(prof, e) == pytest.approx(10 * 1e-4 + 10 * 4e-5, rel=1e-12)
