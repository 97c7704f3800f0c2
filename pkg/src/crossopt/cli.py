"""Command line interface.

Every subcommand takes ``--seed``, ``--config`` (an INI file whose sections
``catalog``, ``workload``, ``model``, ``train``, ``head_train`` and
``scenario`` override dataclass defaults) and ``--out`` (output directory).
Outputs are fixed file names inside ``--out``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .catalog import CatalogSpec, generate_catalog, load_catalog, save_catalog
from .featurizer import dumps_graph, encode_plan
from .harness.report import write_report
from .harness.routing import evaluate_routing, route
from .harness.scenario import KINDS, ScenarioSpec, build_corpus, metrics_block, prepare_samples, run_scenario
from .harness.suite import default_catalogs
from .harness.workload import WorkloadConfig, generate_workload
from .lcm import ModelConfig, TrainConfig, add_engine_head, finetune_heads, init_model, load_model, save_history, save_model, train
from .optimizer import optimize
from .plan import plan_to_json
from .simulator import default_fleet, load_fleet, load_labeled, save_fleet, save_labeled, label_workload
from .sql import BindError, SqlSyntaxError, sql_to_plan


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# config


def _convert(raw: str, default):
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if default and isinstance(default[0], int):
            return tuple(int(x) for x in items)
        if default and isinstance(default[0], float):
            return tuple(float(x) for x in items)
        return tuple(items)
    if default is None:
        text = raw.strip()
        if text.lower() in ("", "none"):
            return None
        try:
            return int(text)
        except ValueError:
            return text
    return raw.strip()


def load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise CliError(f"config file {path} not found")
        cp.read(path)
    return cp


def configured(cls, cp: configparser.ConfigParser, section: str, **fixed):
    """Instantiate dataclass ``cls`` from defaults, ``fixed`` values and config overrides."""
    base = cls(**fixed) if fixed else cls()
    if not cp.has_section(section):
        return base
    names = {f.name for f in dataclasses.fields(cls)}
    updates = {}
    for key, raw in cp.items(section):
        if key not in names:
            raise CliError(f"unknown key {key!r} in config section [{section}]")
        if key == "folds":
            updates[key] = tuple(x.strip() for x in raw.split(",") if x.strip()) or None
        elif key == "type_mix":
            updates[key] = {k: float(v) for k, v in (p.split(":") for p in raw.split(","))}
        else:
            updates[key] = _convert(raw, getattr(base, key))
    try:
        return dataclasses.replace(base, **updates)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid [{section}] config: {exc}") from None


# ---------------------------------------------------------------------------
# helpers


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _read_queries(path) -> list[str]:
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]


def _fleet(args):
    return load_fleet(args.fleet) if getattr(args, "fleet", None) else default_fleet()


def _data(pairs) -> list[tuple]:
    """[(catalog, [LabeledQuery])] from repeated --data CATALOG LABELED."""
    out = []
    for cat_path, lab_path in pairs or []:
        out.append((load_catalog(cat_path), load_labeled(lab_path)))
    if not out:
        raise CliError("at least one --data CATALOG LABELED pair is required")
    return out


def _items(data) -> list[tuple]:
    return [(encode_plan(q.plan, cat), np.asarray(q.y, dtype=np.float64)) for cat, qs in data for q in qs]


def _graphs_from_sql(catalog, queries) -> list:
    return [encode_plan(optimize(sql_to_plan(s, catalog), catalog), catalog) for s in queries]


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_gen_catalog(args, cp) -> None:
    out = _out(args)
    if args.suite:
        for cat in default_catalogs(args.seed):
            save_catalog(cat, out / f"{cat.name}.json")
        return
    spec = configured(CatalogSpec, cp, "catalog")
    save_catalog(generate_catalog(spec, args.seed), out / "catalog.json")


def cmd_gen_workload(args, cp) -> None:
    cfg = configured(WorkloadConfig, cp, "workload", seed=args.seed)
    if args.count is not None:
        cfg = dataclasses.replace(cfg, query_count=args.count)
    queries = generate_workload(load_catalog(args.catalog), cfg)
    (_out(args) / "queries.sql").write_text("".join(q + "\n" for q in queries))


def cmd_label(args, cp) -> None:
    cat = load_catalog(args.catalog)
    fleet = _fleet(args)
    stats: list = []
    timeout = configured(WorkloadConfig, cp, "workload").timeout_seconds
    labeled = label_workload(_read_queries(args.queries), cat, fleet, args.seed, timeout=timeout, stats=stats)
    out = _out(args)
    save_labeled(labeled, out / "labeled.jsonl")
    save_fleet(fleet, out / "fleet.json")
    _write_json(out / "label_stats.json", dataclasses.asdict(stats[0]))


def cmd_optimize(args, cp) -> None:
    cat = load_catalog(args.catalog)
    queries = [args.sql] if args.sql else _read_queries(args.queries)
    with open(_out(args) / "plans.jsonl", "w") as fh:
        for q in queries:
            fh.write(json.dumps(plan_to_json(optimize(sql_to_plan(q, cat), cat)), sort_keys=True, separators=(",", ":")) + "\n")


def cmd_encode(args, cp) -> None:
    from .plan import plan_from_json

    cat = load_catalog(args.catalog)
    with open(args.plans) as src, open(_out(args) / "graphs.jsonl", "w") as dst:
        for line in src:
            if line.strip():
                dst.write(dumps_graph(encode_plan(plan_from_json(json.loads(line)), cat)) + "\n")


def _train_config(cp, section: str, seed: int) -> TrainConfig:
    return configured(TrainConfig, cp, section, seed=seed)


def cmd_train(args, cp) -> None:
    data = _data(args.data)
    items = _items(data)
    fleet = _fleet(args)
    engines = [e.name for e in fleet]
    if any(len(y) != len(engines) for _, y in items):
        raise CliError("label width does not match the fleet")
    perm = np.random.default_rng([args.seed, 0x5A11]).permutation(len(items))
    n_val = max(1, round(args.val_fraction * len(items)))
    val = [items[k] for k in sorted(perm[:n_val])]
    tr = [items[k] for k in sorted(perm[n_val:])]
    model = init_model(engines, args.seed, configured(ModelConfig, cp, "model"))
    model, hist = train(model, tr, val, _train_config(cp, "train", args.seed))
    out = _out(args)
    save_model(model, out / "model.bin")
    save_history(hist, out / "history.csv")


def cmd_finetune(args, cp) -> None:
    model = load_model(args.model)
    items = _items(_data(args.data))
    model, hist = finetune_heads(model, items, _train_config(cp, "head_train", args.seed))
    out = _out(args)
    save_model(model, out / "model.bin")
    save_history(hist, out / "history.csv")


def cmd_add_engine(args, cp) -> None:
    model = load_model(args.model)
    items = [(g, y[-1:]) for g, y in _items(_data(args.data))]
    model, hist = add_engine_head(model, args.name, items, _train_config(cp, "head_train", args.seed))
    out = _out(args)
    save_model(model, out / "model.bin")
    save_history(hist, out / "history.csv")


def _predictions(args) -> tuple:
    model = load_model(args.model)
    cat = load_catalog(args.catalog)
    queries = _read_queries(args.queries)
    return model, queries, model.predict(_graphs_from_sql(cat, queries))


def cmd_predict(args, cp) -> None:
    model, _, preds = _predictions(args)
    with open(_out(args) / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query"] + model.engines)
        for i, row in enumerate(preds):
            w.writerow([i] + [repr(float(v)) for v in row])


def cmd_route(args, cp) -> None:
    model, _, preds = _predictions(args)
    with open(_out(args) / "routes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query", "engine", "estimate_seconds"])
        for i, row in enumerate(preds):
            k = route(row)
            w.writerow([i, model.engines[k], repr(float(row[k]))])


def cmd_evaluate(args, cp) -> None:
    model = load_model(args.model)
    items = _items(_data(args.data))
    y = np.asarray([t for _, t in items])
    if y.shape[1] != len(model.engines):
        raise CliError(f"labels have {y.shape[1]} engines, the model has {len(model.engines)}")
    preds = model.predict([g for g, _ in items])
    block = metrics_block(preds, y, model.engines)
    report = {
        "scenario": "evaluate",
        "models": {"GNN.OP" if model.config.kind == "gnn" else "SB.OP": block},
        "routing": evaluate_routing(y, preds, args.seed).to_json(model.engines),
    }
    write_report(report, _out(args), "evaluation")


def cmd_scenario(args, cp) -> None:
    wl = configured(WorkloadConfig, cp, "workload", seed=args.seed)
    if args.count is not None:
        wl = dataclasses.replace(wl, query_count=args.count)
    fleet = default_fleet(with_w8=True)
    base = [e.name for e in fleet[:4]]
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    corpus = build_corpus(default_catalogs(args.seed), fleet, wl, args.seed, timeout_fleet=fleet[:4], progress=log)
    samples = prepare_samples(corpus, unoptimized=True)
    spec = configured(
        ScenarioSpec,
        cp,
        "scenario",
        kind=args.kind,
        engines=tuple(base),
        new_engine=fleet[4].name,
        seed=args.seed,
        model=configured(ModelConfig, cp, "model"),
        train=_train_config(cp, "train", args.seed),
        head_train=_train_config(cp, "head_train", args.seed),
    )
    report = run_scenario(spec, samples, corpus[0].engines, progress=log)
    write_report(report, _out(args), args.kind)


COMMANDS = {
    "gen-catalog": cmd_gen_catalog,
    "gen-workload": cmd_gen_workload,
    "label": cmd_label,
    "optimize": cmd_optimize,
    "encode": cmd_encode,
    "train": cmd_train,
    "finetune": cmd_finetune,
    "add-engine": cmd_add_engine,
    "predict": cmd_predict,
    "route": cmd_route,
    "evaluate": cmd_evaluate,
    "scenario": cmd_scenario,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="INI file with per-section overrides")
    common.add_argument("--out", default=".", help="output directory")

    p = argparse.ArgumentParser(prog="crossopt", description="Cross-engine SQL optimizer and learned cost model")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-catalog", parents=[common], help="generate a synthetic catalog")
    s.add_argument("--suite", action="store_true", help="write the five evaluation catalogs")
    s = sub.add_parser("gen-workload", parents=[common], help="generate SQL queries for a catalog")
    s.add_argument("--catalog", required=True)
    s.add_argument("--count", type=int)
    s = sub.add_parser("label", parents=[common], help="optimize, execute and time queries on the simulated fleet")
    s.add_argument("--catalog", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--fleet")
    s = sub.add_parser("optimize", parents=[common], help="SQL to annotated optimized plans")
    s.add_argument("--catalog", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--sql")
    g.add_argument("--queries")
    s = sub.add_parser("encode", parents=[common], help="plans to model input graphs")
    s.add_argument("--catalog", required=True)
    s.add_argument("--plans", required=True)
    for name, helptext in (("train", "train a cost model"), ("finetune", "fine-tune predictor heads"), ("add-engine", "add a head for a new engine")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--data", nargs=2, action="append", metavar=("CATALOG", "LABELED"))
        if name == "train":
            s.add_argument("--fleet")
            s.add_argument("--val-fraction", type=float, default=0.2)
        else:
            s.add_argument("--model", required=True)
        if name == "add-engine":
            s.add_argument("--name", required=True)
    for name in ("predict", "route"):
        s = sub.add_parser(name, parents=[common], help=f"{name} queries with a trained model")
        s.add_argument("--model", required=True)
        s.add_argument("--catalog", required=True)
        s.add_argument("--queries", required=True)
    s = sub.add_parser("evaluate", parents=[common], help="metrics and routing totals on labeled data")
    s.add_argument("--model", required=True)
    s.add_argument("--data", nargs=2, action="append", metavar=("CATALOG", "LABELED"))
    s = sub.add_parser("scenario", parents=[common], help="run an evaluation scenario on the built-in catalogs")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--count", type=int, help="queries per catalog")
    s.add_argument("--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = load_config(args.config)
        COMMANDS[args.command](args, cp)
    except (CliError, OSError, ValueError, KeyError, SqlSyntaxError, BindError) as exc:
        print(f"crossopt {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
