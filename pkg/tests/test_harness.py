import filecmp
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from crossopt.cli import CliError, configured, load_config, main
from crossopt.harness.metrics import compute_metrics, nearest_rank, qerrors
from crossopt.harness.report import dumps_report, write_report
from crossopt.harness.routing import evaluate_routing, route
from crossopt.harness.scenario import (
    ScenarioError,
    ScenarioSpec,
    _check_hygiene,
    build_corpus,
    prepare_samples,
    run_scenario,
)
from crossopt.harness.suite import default_catalogs
from crossopt.harness.workload import WorkloadConfig, generate_workload
from crossopt.lcm import SMALL_CONFIG, ModelConfig, TrainConfig
from crossopt.simulator import default_fleet
from crossopt.sql import sql_to_plan
from oracles import brute_metrics

BASE4 = ("presto_w1", "presto_w4", "spark_w1", "spark_w4")
TINY_TRAIN = TrainConfig(min_epochs=3, max_epochs=3, patience=1)


# ---------------------------------------------------------------------------
# workload


def test_max_joins_zero_is_single_table(tiny_catalog):
    for sql in generate_workload(tiny_catalog, WorkloadConfig(query_count=100, max_joins=0, seed=4)):
        assert " JOIN " not in sql
        froms = sql.split(" FROM ")[1].split(" WHERE ")[0].split(" GROUP ")[0].split(" ORDER ")[0]
        assert "," not in froms


def test_generated_queries_parse_and_bind():
    cat = default_catalogs(0)[2]
    qs = generate_workload(cat, WorkloadConfig(query_count=500, seed=9))
    assert len(qs) == 500
    for q in qs:
        sql_to_plan(q, cat)


def test_aggregate_share():
    cat = default_catalogs(0)[0]
    qs = generate_workload(cat, WorkloadConfig(query_count=2000, aggregate_prob=0.3, seed=2))
    aggs = ("COUNT(", "SUM(", "AVG(", "MIN(", "MAX(")
    share = sum(1 for q in qs if any(a in q.split(" FROM ")[0] for a in aggs)) / len(qs)
    assert 0.25 <= share <= 0.35


def test_workload_deterministic(tiny_catalog):
    cfg = WorkloadConfig(query_count=50, seed=11)
    assert generate_workload(tiny_catalog, cfg) == generate_workload(tiny_catalog, cfg)
    assert generate_workload(tiny_catalog, cfg) != generate_workload(tiny_catalog, WorkloadConfig(query_count=50, seed=12))


def test_workload_config_validation():
    with pytest.raises(ValueError):
        WorkloadConfig(aggregate_prob=1.5)
    with pytest.raises(ValueError):
        WorkloadConfig(max_joins=-1)


# ---------------------------------------------------------------------------
# metrics


def test_perfect_predictions_give_one():
    y = np.random.default_rng(0).uniform(0.5, 9, size=(20, 4))
    m = compute_metrics(y.copy(), y)
    assert (m.q_med, m.q_mean, m.q_p95) == (1.0, 1.0, 1.0)


def test_small_list_arithmetic():
    truths = np.ones((3, 1))
    preds = np.array([[1.0], [2.0], [1 / 3]])
    m = compute_metrics(preds, truths)
    assert m.q_med == pytest.approx(2.0, abs=1e-15)
    assert m.q_mean == pytest.approx(2.0, abs=1e-15)
    assert m.q_p95 == pytest.approx(3.0, abs=1e-15)


def test_nearest_rank():
    vals = list(range(1, 21))
    assert nearest_rank(vals, 0.95) == 19
    assert nearest_rank([4.0], 0.95) == 4.0
    assert nearest_rank(vals, 0.5) == 10


def test_metrics_match_brute_force_random():
    rng = np.random.default_rng(17)
    for _ in range(20):
        y = rng.uniform(0.01, 100, size=(50, 4))
        p = rng.uniform(-1, 100, size=(50, 4))
        m = compute_metrics(p, y, ["a", "b", "c", "d"])
        for k, ref in zip(("q_med", "q_mean", "q_p95"), brute_metrics(p, y)):
            assert abs(getattr(m, k) - ref) <= 1e-12 * max(1.0, ref)
        assert min(m.q_med, m.q_mean, m.q_p95) >= 1.0


def test_metrics_errors():
    with pytest.raises(ValueError):
        compute_metrics(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        qerrors(np.ones((2, 1)), np.array([[1.0], [0.0]]))


# ---------------------------------------------------------------------------
# routing


def test_route_examples():
    assert route([3.0, 2.0, 5.0]) == 1
    assert route([2.0, 2.0]) == 0
    assert route([7.0]) == 0
    with pytest.raises(ValueError):
        route([])


def test_perfect_predictions_route_to_oracle():
    y = np.random.default_rng(1).uniform(0.1, 10, size=(200, 4))
    rt = evaluate_routing(y, y)
    assert rt.lcm == rt.oracle
    assert rt.lcm <= rt.static


def test_single_engine_totals_equal():
    y = np.random.default_rng(2).uniform(0.1, 10, size=(30, 1))
    rt = evaluate_routing(y, np.random.default_rng(3).uniform(0.1, 10, size=(30, 1)))
    assert rt.lcm == rt.random_mean == rt.static == rt.oracle
    assert rt.random_std == 0.0


@settings(max_examples=60, deadline=None)
@given(
    hnp.arrays(np.float64, (12, 3), elements=st.floats(0.01, 100)),
    hnp.arrays(np.float64, (12, 3), elements=st.floats(-5, 100)),
    st.integers(0, 100),
)
def test_routing_bounds(y, p, seed):
    rt = evaluate_routing(y, p, seed=seed, draws=10)
    slack = 1e-9 * rt.lcm
    assert rt.lcm >= rt.oracle - slack
    assert rt.static >= rt.oracle - slack
    assert rt.random_mean >= rt.oracle - slack


def test_routing_random_is_seeded():
    rng = np.random.default_rng(5)
    y, p = rng.uniform(0.1, 10, size=(40, 4)), rng.uniform(0.1, 10, size=(40, 4))
    assert evaluate_routing(y, p, seed=1) == evaluate_routing(y, p, seed=1)


# ---------------------------------------------------------------------------
# scenarios on a small corpus


@pytest.fixture(scope="module")
def small_corpus():
    fleet = default_fleet(with_w8=True)
    return build_corpus(default_catalogs(0), fleet, WorkloadConfig(query_count=100, seed=0), 0, timeout_fleet=fleet[:4])


@pytest.fixture(scope="module")
def small_samples(small_corpus):
    return prepare_samples(small_corpus)


def _spec(kind, **kw):
    base = dict(
        engines=BASE4,
        new_engine="presto_w8",
        holdout=40,
        val_per_catalog=20,
        few_shot=20,
        model=ModelConfig(**SMALL_CONFIG),
        train=TINY_TRAIN,
        head_train=TINY_TRAIN,
    )
    base.update(kw)
    return ScenarioSpec(kind, **base)


def test_static_not_worse_than_random_on_default_fleet(small_corpus):
    y = np.asarray([q.y[:4] for cc in small_corpus for q in cc.queries])
    rt = evaluate_routing(y, y, seed=0)
    assert rt.static <= rt.random_mean


def test_zero_shot_fold_bookkeeping(small_samples, small_corpus):
    rep = run_scenario(_spec("zero_shot", baselines=()), small_samples, small_corpus[0].engines)
    assert len(rep["folds"]) == 5
    assert sorted(f["eval_catalog"] for f in rep["folds"]) == sorted(small_samples)
    for f in rep["folds"]:
        assert f["eval_catalog"] not in f["train_catalogs"]
        assert len(f["train_catalogs"]) == 4
        run = f["models"]["GNN.OP"]["runs"][0]
        assert run["test_queries"] == len(small_samples[f["eval_catalog"]]) - 20


def test_few_shot_keeps_zero_shot_encoder(small_samples, small_corpus):
    zs = run_scenario(_spec("zero_shot", baselines=(), folds=("survey",)), small_samples, small_corpus[0].engines)
    fs = run_scenario(
        _spec("few_shot", baselines=("SB.OP",), folds=("survey",), few_shot_seeds=(0, 1)), small_samples, small_corpus[0].engines
    )
    z = zs["folds"][0]["models"]["GNN.OP"]
    f = fs["folds"][0]["models"]["GNN.OP"]
    assert z["encoder_hash"] == f["encoder_hash"]
    for run in f["runs"]:
        assert run["encoder_hash_after"] == f["encoder_hash"]
        assert run["zero_shot"]["selfcheck"] == "ok"
    for run in fs["folds"][0]["models"]["SB.OP"]["runs"]:
        assert run["encoder_hash_after"] == fs["folds"][0]["models"]["SB.OP"]["encoder_hash"]


def test_unseen_splits_and_rerun(small_samples, small_corpus, tmp_path):
    spec = _spec("unseen")
    a = run_scenario(spec, small_samples, small_corpus[0].engines)
    b = run_scenario(spec, small_samples, small_corpus[0].engines)
    assert dumps_report(a) == dumps_report(b)
    assert a["splits"]["test"] == 5 * 40 and a["splits"]["val"] == 5 * 20
    assert set(a["models"]) == {"GNN.OP", "GNN.UP", "SB.OP"}
    pa = write_report(a, tmp_path / "a", "unseen")
    pb = write_report(b, tmp_path / "b", "unseen")
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes()
    assert pa[3].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_new_engine_report(small_samples, small_corpus):
    rep = run_scenario(_spec("new_engine", baselines=(), reference=True), small_samples, small_corpus[0].engines)
    block = rep["models"]["GNN.OP"]
    assert block["isolation"] is True
    assert block["encoder_hash"] == block["encoder_hash_after"]
    assert list(block["per_engine"]) == list(BASE4) + ["presto_w8"]
    assert list(block["reference"]["per_engine"]) == list(BASE4) + ["presto_w8"]


def test_hygiene_detects_overlap(small_samples):
    ss = small_samples["retail"]
    assert _check_hygiene(ss[:10], ss[10:20]) == 0
    with pytest.raises(ScenarioError):
        _check_hygiene(ss[:10], ss[9:20])


def test_scenario_errors(small_samples, small_corpus):
    with pytest.raises(ScenarioError):
        ScenarioSpec("sideways", engines=BASE4)
    with pytest.raises(ScenarioError):
        ScenarioSpec("unseen", engines=BASE4, baselines=("XGB",))
    with pytest.raises(ScenarioError):
        run_scenario(_spec("unseen", engines=("presto_w1", "nope")), small_samples, small_corpus[0].engines)
    with pytest.raises(ScenarioError):
        run_scenario(_spec("unseen", holdout=400), small_samples, small_corpus[0].engines)
    with pytest.raises(ScenarioError):
        run_scenario(_spec("unseen"), {}, small_corpus[0].engines)


# ---------------------------------------------------------------------------
# CLI

SMALL_INI = """\
[catalog]
n_tables = 3
rows_per_table = 200, 800

[workload]
query_count = 40

[model]
encoder_widths = 8, 8
hidden_widths = 8, 8
head_widths = 4, 1

[train]
min_epochs = 3
max_epochs = 3
patience = 2

[head_train]
min_epochs = 3
max_epochs = 3
patience = 2

[scenario]
holdout = 10
val_per_catalog = 5
few_shot = 6
baselines =
"""


def _pipeline(root: Path, ini: Path) -> None:
    c = ["--config", str(ini), "--seed", "3"]

    def run(*args, out="."):
        assert main(list(args) + c + ["--out", str(root / out)]) == 0

    run("gen-catalog")
    cat = str(root / "catalog.json")
    run("gen-workload", "--catalog", cat)
    run("label", "--catalog", cat, "--queries", str(root / "queries.sql"))
    run("optimize", "--catalog", cat, "--queries", str(root / "queries.sql"))
    run("encode", "--catalog", cat, "--plans", str(root / "plans.jsonl"))
    data = ["--data", cat, str(root / "labeled.jsonl")]
    run("train", *data, "--fleet", str(root / "fleet.json"))
    model = str(root / "model.bin")
    run("finetune", *data, "--model", model, out="ft")
    run("add-engine", *data, "--model", model, "--name", "extra", out="ae")
    run("predict", "--model", model, "--catalog", cat, "--queries", str(root / "queries.sql"))
    run("route", "--model", model, "--catalog", cat, "--queries", str(root / "queries.sql"))
    run("evaluate", "--model", model, *data)
    run("gen-catalog", "--suite", out="suite")
    run("scenario", "--kind", "few_shot", "--count", "30", out="scenario")


def test_cli_pipeline_byte_identical(tmp_path):
    ini = tmp_path / "small.ini"
    ini.write_text(SMALL_INI)
    _pipeline(tmp_path / "a", ini)
    _pipeline(tmp_path / "b", ini)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.left_only and not cmp.right_only
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) >= 20
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    routes = (tmp_path / "a" / "routes.csv").read_text().splitlines()
    assert routes[0] == "query,engine,estimate_seconds" and len(routes) > 1
    assert (tmp_path / "a" / "scenario" / "few_shot.png").stat().st_size > 0
    ev = json.loads((tmp_path / "a" / "evaluation.json").read_text())
    assert ev["models"]["GNN.OP"]["selfcheck"] == "ok"


def test_cli_errors(tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == 2
    assert main(["gen-catalog", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nlearning_rat = 0.1\n")
    assert main(["gen-catalog", "--config", str(bad), "--out", str(tmp_path)]) == 0
    with pytest.raises(CliError, match="learning_rat"):
        configured(TrainConfig, load_config(bad), "train")
