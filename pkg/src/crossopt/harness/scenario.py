"""The four evaluation scenarios over a labeled multi-catalog corpus.

unseen      train on all catalogs, evaluate on held-out queries of each
zero_shot   leave one catalog out; evaluate on the unseen catalog
few_shot    zero_shot plus head fine-tuning on a few queries of that catalog
new_engine  pre-train without one engine, then add its head from a few queries

Each scenario evaluates the graph model on optimized plans (GNN.OP) and,
unless disabled, the same model on trimmed-only plans (GNN.UP) and the set
baseline on optimized plans (SB.OP).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..catalog import Catalog
from ..featurizer import PlanGraph, encode_plan
from ..lcm import ModelConfig, TrainConfig, add_engine_head, finetune_heads, init_model, train
from ..optimizer import prepare_unoptimized
from ..plan import plan_fingerprint
from ..simulator import EngineSpec, LabeledQuery, label_workload
from ..sql import sql_to_plan
from .metrics import compute_metrics, qerrors
from .routing import evaluate_routing
from .workload import WorkloadConfig, generate_workload

KINDS = ("unseen", "zero_shot", "few_shot", "new_engine")
MODELS = ("GNN.OP", "GNN.UP", "SB.OP")


class ScenarioError(ValueError):
    pass


@dataclass
class CatalogCorpus:
    catalog: Catalog
    queries: list  # LabeledQuery, label columns follow ``engines``
    engines: list

    @property
    def name(self) -> str:
        return self.catalog.name


def build_corpus(
    catalogs: Sequence[Catalog],
    fleet: Sequence[EngineSpec],
    workload: WorkloadConfig,
    seed: int,
    timeout_fleet: Sequence[EngineSpec] | None = None,
    progress: Callable[[str], None] | None = None,
) -> list[CatalogCorpus]:
    """Generate and label ``workload.query_count`` queries per catalog."""
    out = []
    for i, cat in enumerate(catalogs):
        cfg = replace(workload, seed=workload.seed * 1000 + i)
        queries = generate_workload(cat, cfg)
        stats: list = []
        labeled = label_workload(
            queries, cat, fleet, seed * 1000 + i, timeout=workload.timeout_seconds, stats=stats, timeout_fleet=timeout_fleet
        )
        if progress is not None:
            s = stats[0]
            progress(f"{cat.name}: kept {s.kept}, timeouts {s.dropped_timeout}, row cap {s.dropped_resource}")
        out.append(CatalogCorpus(cat, labeled, [e.name for e in fleet]))
    return out


@dataclass(frozen=True)
class Sample:
    catalog: str
    sql: str
    key: tuple  # (catalog, plan fingerprint)
    y: np.ndarray
    graph: PlanGraph
    graph_up: PlanGraph | None


def prepare_samples(corpus: Sequence[CatalogCorpus], unoptimized: bool = True) -> dict[str, list[Sample]]:
    """Encode every labeled query, dropping repeated plans within a catalog."""
    out = {}
    engines = corpus[0].engines if corpus else []
    for cc in corpus:
        if cc.engines != engines:
            raise ScenarioError("all catalogs must be labeled for the same engines")
        seen = set()
        samples = []
        for q in cc.queries:
            key = (cc.name, plan_fingerprint(q.plan))
            if key in seen:
                continue
            seen.add(key)
            up = None
            if unoptimized:
                up = encode_plan(prepare_unoptimized(sql_to_plan(q.sql, cc.catalog), cc.catalog), cc.catalog)
            samples.append(Sample(cc.name, q.sql, key, np.asarray(q.y, dtype=np.float64), encode_plan(q.plan, cc.catalog), up))
        out[cc.name] = samples
    return out


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    engines: tuple  # label columns the models predict
    new_engine: str | None = None
    holdout: int = 1000
    val_per_catalog: int = 250
    train_per_catalog: int | None = None
    few_shot: int = 250
    few_shot_seeds: tuple = (0,)
    zero_shot_val_fraction: float = 0.2
    folds: tuple | None = None
    baselines: tuple = ("GNN.UP", "SB.OP")
    reference: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    head_train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if any(b not in MODELS[1:] for b in self.baselines):
            raise ScenarioError(f"unknown baseline in {self.baselines}")
        if self.kind == "new_engine" and not self.new_engine:
            raise ScenarioError("new_engine scenario needs the new engine's name")
        if not 0 < self.zero_shot_val_fraction < 1:
            raise ScenarioError("zero_shot_val_fraction must be in (0, 1)")

    def to_json(self) -> dict:
        d = {}
        for k in self.__dataclass_fields__:
            v = getattr(self, k)
            if isinstance(v, ModelConfig):
                v = v.to_json()
            elif isinstance(v, TrainConfig):
                v = {f: getattr(v, f) for f in v.__dataclass_fields__}
            elif isinstance(v, tuple):
                v = list(v)
            d[k] = v
        return d


def encoder_hash(model) -> str:
    """SHA-256 over every non-head parameter."""
    h = hashlib.sha256()
    for g in model.groups():
        if g.startswith("head/"):
            continue
        for W, b in model.params[g]:
            h.update(W.tobytes())
            h.update(b.tobytes())
    return h.hexdigest()


def _keys(samples) -> set:
    return {s.key for s in samples}


def _check_hygiene(train_like, evaluation) -> int:
    overlap = _keys(train_like) & _keys(evaluation)
    if overlap:
        raise ScenarioError(f"{len(overlap)} queries appear in both training and evaluation splits")
    return 0


def _perm(n: int, *key) -> np.ndarray:
    return np.random.default_rng(list(key)).permutation(n)


class _Runner:
    def __init__(self, spec: ScenarioSpec, corpus_engines: list, progress=None):
        self.spec = spec
        self.all_engines = list(corpus_engines)
        missing = [e for e in spec.engines if e not in self.all_engines]
        if spec.new_engine and spec.new_engine not in self.all_engines:
            missing.append(spec.new_engine)
        if missing:
            raise ScenarioError(f"corpus has no labels for engines {missing}")
        self.progress = progress

    def cols(self, engines) -> list[int]:
        return [self.all_engines.index(e) for e in engines]

    def items(self, samples, engines, up: bool = False) -> list:
        cols = self.cols(engines)
        out = []
        for s in samples:
            g = s.graph_up if up else s.graph
            if g is None:
                raise ScenarioError("unoptimized graphs were not prepared")
            out.append((g, s.y[cols]))
        return out

    def log(self, msg: str) -> None:
        if self.progress is not None:
            self.progress(msg)

    def fit(self, name: str, engines, tr, va, seed: int):
        up = name == "GNN.UP"
        cfg = self.spec.model if name != "SB.OP" else replace(self.spec.model, kind="set")
        model = init_model(list(engines), seed, cfg)
        self.log(f"training {name} on {len(tr)} queries ({len(va)} validation)")
        model, hist = train(model, self.items(tr, engines, up), self.items(va, engines, up), replace(self.spec.train, seed=seed))
        info = {"epochs": len(hist), "best_val_qmean": min(r.val_qmean for r in hist), "train_queries": len(tr), "val_queries": len(va)}
        return model, info

    def models(self) -> list[str]:
        return ["GNN.OP"] + list(self.spec.baselines)

    def evaluate(self, model, name, samples, engines) -> tuple[dict, np.ndarray]:
        items = self.items(samples, engines, name == "GNN.UP")
        preds = model.predict([g for g, _ in items])
        y = np.asarray([t for _, t in items])
        return metrics_block(preds, y, engines), preds


def metrics_block(preds, y, engines) -> dict:
    """Metrics plus the percentile profile of per-query mean Q-error, self-checked."""
    m = compute_metrics(preds, y, engines)
    check = brute_force_metrics(preds, y)
    for k in ("q_med", "q_mean", "q_p95"):
        a, b = getattr(m, k), check[k]
        if abs(a - b) > 1e-12 * max(1.0, abs(b)):
            raise AssertionError(f"metric self-check failed for {k}: {a} != {b}")
    q = qerrors(preds, y).mean(axis=1)
    d = m.to_json()
    d["profile"] = [float(np.percentile(q, p)) for p in range(0, 101, 5)]
    d["n"] = int(len(y))
    d["selfcheck"] = "ok"
    return d


def brute_force_metrics(preds, y) -> dict:
    """Second, loop-based computation of the averaged aggregates."""
    import math
    import statistics

    preds = [[float(v) for v in row] for row in np.asarray(preds)]
    y = [[float(v) for v in row] for row in np.asarray(y)]
    n_eng = len(y[0])
    med, mean, p95 = [], [], []
    for e in range(n_eng):
        qs = []
        for p_row, t_row in zip(preds, y):
            p = max(p_row[e], 1e-9)
            t = t_row[e]
            qs.append(p / t if p > t else t / p)
        qs.sort()
        med.append(statistics.median(qs))
        mean.append(math.fsum(qs) / len(qs))
        p95.append(qs[max(1, math.ceil(0.95 * len(qs))) - 1])
    return {"q_med": math.fsum(med) / n_eng, "q_mean": math.fsum(mean) / n_eng, "q_p95": math.fsum(p95) / n_eng}


def _routing(y, preds, seed, engines) -> dict:
    return evaluate_routing(y, preds, seed).to_json(list(engines))


def run_scenario(spec: ScenarioSpec, samples: dict[str, list[Sample]], corpus_engines: list, progress=None) -> dict:
    """Run one scenario; returns a JSON-serialisable report."""
    if not samples or any(not v for v in samples.values()):
        raise ScenarioError("every catalog needs labeled queries")
    r = _Runner(spec, corpus_engines, progress)
    report = {"scenario": spec.kind, "spec": spec.to_json(), "catalogs": sorted(samples)}
    if spec.kind == "unseen":
        report.update(_unseen(r, samples))
    elif spec.kind in ("zero_shot", "few_shot"):
        report.update(_leave_one_out(r, samples))
    else:
        report.update(_new_engine(r, samples))
    return report


def _split_unseen(r: _Runner, samples):
    spec = r.spec
    tr, va, te = [], [], []
    for ci, name in enumerate(sorted(samples)):
        ss = samples[name]
        if len(ss) <= spec.holdout + spec.val_per_catalog:
            raise ScenarioError(f"catalog {name} has {len(ss)} queries; need more than holdout + validation")
        p = _perm(len(ss), spec.seed, 0x5EE, ci)
        te += [ss[k] for k in p[: spec.holdout]]
        va += [ss[k] for k in p[spec.holdout : spec.holdout + spec.val_per_catalog]]
        rest = [ss[k] for k in p[spec.holdout + spec.val_per_catalog :]]
        tr += rest[: spec.train_per_catalog] if spec.train_per_catalog else rest
    return tr, va, te


def _unseen(r: _Runner, samples) -> dict:
    spec = r.spec
    tr, va, te = _split_unseen(r, samples)
    _check_hygiene(tr + va, te)
    engines = list(spec.engines)
    out = {"splits": {"train": len(tr), "val": len(va), "test": len(te), "overlap": 0}, "models": {}}
    y = np.asarray([s.y[r.cols(engines)] for s in te])
    for name in r.models():
        model, info = r.fit(name, engines, tr, va, spec.seed)
        block, preds = r.evaluate(model, name, te, engines)
        block["training"] = info
        block["encoder_hash"] = encoder_hash(model)
        out["models"][name] = block
        if name == "GNN.OP":
            out["routing"] = _routing(y, preds, spec.seed, engines)
    return out


def _leave_one_out(r: _Runner, samples) -> dict:
    spec = r.spec
    names = sorted(samples)
    folds = list(spec.folds) if spec.folds else names
    engines = list(spec.engines)
    out = {"folds": []}
    for k, held in enumerate(names):
        if held not in folds:
            continue
        tr, va = [], []
        for ci, name in enumerate(names):
            if name == held:
                continue
            ss = samples[name]
            ss = [ss[j] for j in _perm(len(ss), spec.seed, 0x20, ci)]
            if spec.train_per_catalog:
                ss = ss[: spec.train_per_catalog]
            n_val = max(1, round(spec.zero_shot_val_fraction * len(ss)))
            va += ss[:n_val]
            tr += ss[n_val:]
        fold = {"eval_catalog": held, "train_catalogs": [n for n in names if n != held], "models": {}}
        trained = {name: r.fit(name, engines, tr, va, spec.seed) for name in r.models()}
        held_samples = samples[held]
        shots = []
        for s_seed in spec.few_shot_seeds if spec.kind == "few_shot" else (spec.few_shot_seeds[0],):
            p = _perm(len(held_samples), s_seed, 0xF5, k)
            if len(p) <= spec.few_shot:
                raise ScenarioError(f"catalog {held} has too few queries for a {spec.few_shot}-query few-shot set")
            few = [held_samples[j] for j in p[: spec.few_shot]]
            test = [held_samples[j] for j in p[spec.few_shot :]]
            _check_hygiene(tr + va + few, test)
            shots.append((s_seed, few, test))
        y0 = None
        for name, (model, info) in trained.items():
            entry = {"training": info, "encoder_hash": encoder_hash(model), "runs": []}
            for s_seed, few, test in shots:
                zero, zp = r.evaluate(model, name, test, engines)
                run = {"few_shot_seed": s_seed, "test_queries": len(test), "zero_shot": zero}
                final = zp
                if spec.kind == "few_shot":
                    tuned, _ = finetune_heads(model, r.items(few, engines, name == "GNN.UP"), replace(spec.head_train, seed=s_seed))
                    tuned_block, final = r.evaluate(tuned, name, test, engines)
                    run["few_shot"] = tuned_block
                    run["encoder_hash_after"] = encoder_hash(tuned)
                if name == "GNN.OP":
                    y = np.asarray([s.y[r.cols(engines)] for s in test])
                    run["routing"] = _routing(y, final, s_seed, engines)
                entry["runs"].append(run)
            fold["models"][name] = entry
        out["folds"].append(fold)
    return out


def _new_engine(r: _Runner, samples) -> dict:
    spec = r.spec
    base = [e for e in spec.engines if e != spec.new_engine]
    full = base + [spec.new_engine]
    tr, va, te = _split_unseen(r, samples)
    _check_hygiene(tr + va, te)
    p = _perm(len(tr), spec.seed, 0xE9)
    few = [tr[j] for j in p[: spec.few_shot]]
    out = {"splits": {"train": len(tr), "val": len(va), "test": len(te), "few_shot": len(few), "overlap": 0}, "models": {}}
    y = np.asarray([s.y[r.cols(full)] for s in te])
    for name in r.models():
        model, info = r.fit(name, base, tr, va, spec.seed)
        up = name == "GNN.UP"
        test_graphs = [g for g, _ in r.items(te, base, up)]
        before = model.predict(test_graphs)
        few_items = [(g, t[-1:]) for g, t in r.items(few, full, up)]
        grown, _ = add_engine_head(model, spec.new_engine, few_items, replace(spec.head_train, seed=spec.seed))
        after = grown.predict(test_graphs)
        isolated = bool(np.array_equal(before, after[:, : len(base)]))
        block, preds = r.evaluate(grown, name, te, full)
        block["training"] = info
        block["isolation"] = isolated
        block["encoder_hash"] = encoder_hash(model)
        block["encoder_hash_after"] = encoder_hash(grown)
        if spec.reference:
            ref, ref_info = r.fit(name, full, tr, va, spec.seed)
            ref_block, _ = r.evaluate(ref, name, te, full)
            ref_block["training"] = ref_info
            block["reference"] = ref_block
        out["models"][name] = block
        if name == "GNN.OP":
            out["routing"] = _routing(y, preds, spec.seed, full)
    return out
