import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossopt.optimizer import optimize
from crossopt.plan import (
    FieldRef,
    Literal,
    LogicalPlan,
    Operation,
    PlanFormatError,
    deserialize_plan,
    direct_schema,
    format_plan,
    make_node,
    plan_equal,
    plan_fingerprint,
    serialize_plan,
    shift_ids,
    validate_plan,
)
from crossopt.sql import sql_to_plan


# frozen from the first run; guards against accidental changes to the canonical form
FINGERPRINT_T0 = 1788936832923905407


def scan(cat, table, nid=0):
    return make_node(nid, "TableScan", table=table, catalog=cat)


def test_single_scan_round_trips_byte_identically(tiny_catalog):
    p = LogicalPlan(scan(tiny_catalog, "t0"))
    data = serialize_plan(p)
    back = deserialize_plan(data)
    assert back == p
    assert serialize_plan(back) == data


def test_id_shift_changes_bytes_not_identity(tiny_catalog):
    p = sql_to_plan("SELECT t1.int1 FROM t1 JOIN t0 ON t1.t0_id = t0.id", tiny_catalog)
    q = shift_ids(p, 100)
    assert serialize_plan(p) != serialize_plan(q)
    assert plan_equal(p, q)
    assert plan_fingerprint(p) == plan_fingerprint(q)


def test_truncated_bytes_never_yield_a_plan(tiny_catalog):
    data = serialize_plan(sql_to_plan("SELECT t0.id FROM t0 WHERE t0.id > 2", tiny_catalog))
    for cut in range(0, len(data), 7):
        with pytest.raises(PlanFormatError):
            deserialize_plan(data[:cut])


def test_unknown_kind_and_cycles_are_format_errors(tiny_catalog):
    doc = json.loads(serialize_plan(sql_to_plan("SELECT t0.id FROM t0 WHERE t0.id > 2", tiny_catalog)))
    bad = json.loads(json.dumps(doc))
    bad["nodes"][0]["kind"] = "Union"
    with pytest.raises(PlanFormatError, match="unknown relation kind"):
        deserialize_plan(json.dumps(bad))
    cyc = json.loads(json.dumps(doc))
    cyc["nodes"][0]["children"] = [cyc["nodes"][-1]["id"]]
    cyc["nodes"][0]["kind"] = "Filter"
    with pytest.raises(PlanFormatError):
        deserialize_plan(json.dumps(cyc))
    wrong = json.loads(json.dumps(doc))
    wrong["nodes"][-1]["schema"][0][1] = "varchar"
    with pytest.raises(PlanFormatError, match="schema"):
        deserialize_plan(json.dumps(wrong))


def test_valid_two_table_join(tiny_catalog):
    p = sql_to_plan("SELECT t1.str0 FROM t1 JOIN t0 ON t1.t0_id = t0.id", tiny_catalog)
    assert validate_plan(p, tiny_catalog) == []


def test_field_ref_at_schema_width_is_out_of_range(tiny_catalog):
    s = scan(tiny_catalog, "t0")
    width = len(s.schema)
    pred = Operation("gt", (FieldRef(width), Literal("integer", 1)))
    f = replace(make_node(7, "Filter", (s,), (Operation("gt", (FieldRef(0), Literal("integer", 1))),)), exprs=(pred,))
    bad = validate_plan(LogicalPlan(f), tiny_catalog)
    assert bad and bad[0].node_id == 7
    assert "out of range" in bad[0].message


def test_date_vs_integer_comparison_is_a_type_violation(tiny_catalog):
    s = scan(tiny_catalog, "t0")
    day = [i for i, (_, t) in enumerate(s.schema) if t == "date"][0]
    pred = Operation("lt", (FieldRef(day), Literal("integer", 3)))
    ok = make_node(2, "Filter", (replace(s, id=1),), (Operation("eq", (FieldRef(0), Literal("integer", 0))),))
    f = LogicalPlan(replace(ok, exprs=(pred,)))
    bad = validate_plan(f, tiny_catalog)
    assert any(v.node_id == 2 and "date" in v.message and "integer" in v.message for v in bad)


def test_validation_never_raises_on_garbage(tiny_catalog):
    assert validate_plan(LogicalPlan("not a node"), tiny_catalog)
    weird = replace(scan(tiny_catalog, "t0"), kind="Join")
    assert validate_plan(LogicalPlan(weird), tiny_catalog)
    assert validate_plan(LogicalPlan(scan(tiny_catalog, "t0").with_(table="zz")), tiny_catalog)


def test_fingerprint_sensitive_to_literals_and_stable(tiny_catalog):
    a = sql_to_plan("SELECT t0.id FROM t0 WHERE t0.id > 5", tiny_catalog)
    b = sql_to_plan("SELECT t0.id FROM t0 WHERE t0.id > 6", tiny_catalog)
    assert plan_fingerprint(a) != plan_fingerprint(b)
    assert plan_fingerprint(a) == plan_fingerprint(sql_to_plan("SELECT t0.id FROM t0 WHERE t0.id > 5", tiny_catalog))
    assert 0 <= plan_fingerprint(a) < 2**64
    c = optimize(a, tiny_catalog)
    d = replace(c.root, hints=replace(c.root.hints, est_rows=c.root.hints.est_rows + 1))
    assert plan_fingerprint(c) != plan_fingerprint(LogicalPlan(d))


def test_fingerprint_golden_value(tiny_catalog):
    p = LogicalPlan(scan(tiny_catalog, "t0"))
    assert plan_fingerprint(p) == FINGERPRINT_T0


def _recompute_schemas(node, catalog):
    kids = tuple(_recompute_schemas(c, catalog) for c in node.children)
    n = replace(node, children=kids)
    full = direct_schema(n, catalog)
    return replace(n, schema=tuple(full[i] for i in n.emit))


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_workload_plans_serialize_canonically(tiny_catalog, tiny_workload, data):
    sql = data.draw(st.sampled_from(tiny_workload))
    for p in (sql_to_plan(sql, tiny_catalog), optimize(sql_to_plan(sql, tiny_catalog), tiny_catalog)):
        assert validate_plan(p, tiny_catalog) == []
        b = serialize_plan(p)
        assert serialize_plan(deserialize_plan(b)) == b
        assert deserialize_plan(b) == p
        assert _recompute_schemas(p.root, tiny_catalog) == p.root
        shift = data.draw(st.integers(1, 1000))
        assert plan_fingerprint(shift_ids(p, shift)) == plan_fingerprint(p)


def test_printer_one_line_per_node(tiny_catalog):
    p = optimize(sql_to_plan("SELECT t1.str0 FROM t1 JOIN t0 ON t1.t0_id = t0.id WHERE t0.id < 4", tiny_catalog), tiny_catalog)
    text = format_plan(p)
    assert len(text.splitlines()) == len(p.nodes())
    assert text.splitlines()[0].startswith(p.root.kind)
