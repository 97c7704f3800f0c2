"""Simulated engine fleet and workload labeling.

Runtime of a query on an engine is

    t = (startup + sum_k w_k * work_k / workers ** p) * exp(sigma * z)

where ``work_k`` is derived from the reference executor's true per-operator
row counts, ``w_k`` is the engine's per-row cost for the operator kind and
``z`` a standard normal draw from the query's own seeded substream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .executor import DEFAULT_MAX_ROWS, ExecProfile, NodeProfile, ResourceLimitExceeded, execute
from .optimizer import optimize
from .plan import KINDS, LogicalPlan, plan_from_json, plan_to_json
from .sql import sql_to_plan

DEFAULT_TIMEOUT = 60.0

# Presto single-worker seconds per unit of work, by operator kind.
PRESTO_COST = {
    "TableScan": 1.0e-4,
    "Filter": 4.0e-5,
    "Project": 4.0e-5,
    "Join": 6.0e-4,
    "Aggregate": 4.0e-4,
    "Sort": 2.0e-4,
    "Limit": 1.0e-5,
}
SPARK_FACTOR = 0.7


@dataclass(frozen=True)
class EngineSpec:
    name: str
    workers: int
    startup: float
    per_row_cost: dict = field(default_factory=lambda: dict(PRESTO_COST))
    parallel_exponent: float = 0.8
    noise_sigma: float = 0.05

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError(f"engine {self.name}: workers must be >= 1")
        if self.startup < 0 or self.noise_sigma < 0:
            raise ValueError(f"engine {self.name}: startup and noise must be non-negative")
        if not 0 < self.parallel_exponent <= 1:
            raise ValueError(f"engine {self.name}: parallel exponent must be in (0, 1]")
        for k, v in self.per_row_cost.items():
            if k not in KINDS:
                raise ValueError(f"engine {self.name}: unknown operator kind {k!r}")
            if not v >= 0:
                raise ValueError(f"engine {self.name}: negative cost for {k}")


def _scaled(factor: float) -> dict:
    return {k: v * factor for k, v in PRESTO_COST.items()}


def default_fleet(noise_sigma: float = 0.05, with_w8: bool = False) -> list[EngineSpec]:
    fleet = [
        EngineSpec("presto_w1", 1, 0.4, _scaled(1.0), 0.8, noise_sigma),
        EngineSpec("presto_w4", 4, 0.6, _scaled(1.0), 0.8, noise_sigma),
        EngineSpec("spark_w1", 1, 5.0, _scaled(SPARK_FACTOR), 0.8, noise_sigma),
        EngineSpec("spark_w4", 4, 6.0, _scaled(SPARK_FACTOR), 0.8, noise_sigma),
    ]
    if with_w8:
        fleet.append(EngineSpec("presto_w8", 8, 0.9, _scaled(1.0), 0.8, noise_sigma))
    return fleet


def node_work(n: NodeProfile) -> float:
    k = n.kind
    if k == "TableScan":
        return float(n.table_rows)
    if k in ("Filter", "Project"):
        return float(n.rows_in[0])
    if k == "Join":
        return float(n.rows_in[0] + n.rows_in[1] + n.rows_out)
    if k == "Aggregate":
        return float(n.rows_in[0] + n.rows_out)
    if k == "Sort":
        r = n.rows_in[0]
        return r * math.log2(r + 2)
    if k == "Limit":
        return float(n.rows_out)
    raise ValueError(f"unknown kind {k}")


def work_seconds(profile: ExecProfile, engine: EngineSpec) -> float:
    """Single-worker variable cost: sum of per-row cost times work."""
    return math.fsum(engine.per_row_cost.get(n.kind, 0.0) * node_work(n) for n in profile.nodes)


def simulate_time(profile: ExecProfile, engine: EngineSpec, z: float = 0.0) -> float:
    base = engine.startup + work_seconds(profile, engine) / engine.workers**engine.parallel_exponent
    return base * math.exp(engine.noise_sigma * z)


@dataclass(frozen=True)
class LabeledQuery:
    sql: str
    plan: LogicalPlan
    y: tuple

    def to_json(self) -> dict:
        return {"sql": self.sql, "plan": plan_to_json(self.plan), "y": list(self.y)}

    @staticmethod
    def from_json(doc: dict) -> "LabeledQuery":
        return LabeledQuery(doc["sql"], plan_from_json(doc["plan"]), tuple(float(v) for v in doc["y"]))


@dataclass(frozen=True)
class LabelStats:
    kept: int
    dropped_timeout: int
    dropped_resource: int


def noise_draws(seed: int, index: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, index]).standard_normal(n)


def label_workload(
    queries: Sequence[str],
    catalog,
    fleet: Sequence[EngineSpec],
    seed: int,
    timeout: float = DEFAULT_TIMEOUT,
    max_rows: int = DEFAULT_MAX_ROWS,
    stats: list | None = None,
    timeout_fleet: Sequence[EngineSpec] | None = None,
) -> list[LabeledQuery]:
    """Execute each optimized query once and simulate every engine's runtime.

    A query is dropped when its noise-free time exceeds ``timeout`` on every
    engine of ``timeout_fleet`` (default: ``fleet``) or when execution hits the
    intermediate row cap.
    """
    if not fleet:
        raise ValueError("fleet is empty")
    judges = list(timeout_fleet) if timeout_fleet is not None else list(fleet)
    out = []
    n_timeout = n_resource = 0
    for i, sql in enumerate(queries):
        plan = optimize(sql_to_plan(sql, catalog), catalog)
        try:
            _, profile = execute(plan, catalog, max_rows)
        except ResourceLimitExceeded:
            n_resource += 1
            continue
        if all(simulate_time(profile, e) > timeout for e in judges):
            n_timeout += 1
            continue
        z = noise_draws(seed, i, len(fleet))
        y = tuple(simulate_time(profile, e, float(zi)) for e, zi in zip(fleet, z))
        out.append(LabeledQuery(sql, plan, y))
    if stats is not None:
        stats.append(LabelStats(len(out), n_timeout, n_resource))
    return out


# ---------------------------------------------------------------------------
# files


def fleet_to_json(fleet: Iterable[EngineSpec]) -> list:
    return [
        {
            "name": e.name,
            "workers": e.workers,
            "startupSeconds": e.startup,
            "perRowCost": {k: e.per_row_cost[k] for k in KINDS if k in e.per_row_cost},
            "parallelExponent": e.parallel_exponent,
            "noiseSigma": e.noise_sigma,
        }
        for e in fleet
    ]


def fleet_from_json(doc) -> list[EngineSpec]:
    if not isinstance(doc, list):
        raise ValueError("fleet file must contain a JSON list")
    out = []
    for i, d in enumerate(doc):
        try:
            out.append(
                EngineSpec(
                    d["name"],
                    int(d["workers"]),
                    float(d["startupSeconds"]),
                    {str(k): float(v) for k, v in d["perRowCost"].items()},
                    float(d["parallelExponent"]),
                    float(d["noiseSigma"]),
                )
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"fleet entry {i}: missing or malformed field {exc}") from None
    names = [e.name for e in out]
    if len(set(names)) != len(names):
        raise ValueError("duplicate engine names in fleet")
    return out


def save_fleet(fleet, path) -> None:
    Path(path).write_text(json.dumps(fleet_to_json(fleet), indent=1) + "\n")


def load_fleet(path) -> list[EngineSpec]:
    return fleet_from_json(json.loads(Path(path).read_text()))


def save_labeled(items: Iterable[LabeledQuery], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in items:
            fh.write(json.dumps(q.to_json(), separators=(",", ":"), allow_nan=False) + "\n")


def load_labeled(path) -> list[LabeledQuery]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(LabeledQuery.from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{ln}: {exc}") from None
    return out
