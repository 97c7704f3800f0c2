"""Q-error aggregates and routing totals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Non-positive estimates are scored as if they were this many seconds.
PRED_FLOOR = 1e-9


def qerrors(preds, truths) -> np.ndarray:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} does not match truth shape {t.shape}")
    if np.any(~(t > 0)):
        raise ValueError("true runtimes must be positive")
    p = np.maximum(p, PRED_FLOOR)
    return np.maximum(p / t, t / p)


def nearest_rank(sorted_vals: np.ndarray, q: float) -> float:
    n = len(sorted_vals)
    return float(sorted_vals[max(1, math.ceil(q * n)) - 1])


@dataclass(frozen=True)
class Metrics:
    q_med: float
    q_mean: float
    q_p95: float
    per_engine: dict  # engine -> {"q_med", "q_mean", "q_p95"}

    def to_json(self) -> dict:
        return {"q_med": self.q_med, "q_mean": self.q_mean, "q_p95": self.q_p95, "per_engine": self.per_engine}


def compute_metrics(preds, truths, engines=None) -> Metrics:
    """Median, mean and nearest-rank p95 Q-error per engine, then averaged over engines."""
    q = qerrors(preds, truths)
    if q.ndim != 2 or q.shape[0] == 0:
        raise ValueError("expected a non-empty (queries x engines) matrix")
    engines = list(engines) if engines is not None else [f"engine{i}" for i in range(q.shape[1])]
    if len(engines) != q.shape[1]:
        raise ValueError("engine name count does not match the matrix")
    per = {}
    for i, e in enumerate(engines):
        col = np.sort(q[:, i])
        per[e] = {"q_med": float(np.median(col)), "q_mean": float(col.mean()), "q_p95": nearest_rank(col, 0.95)}
    avg = lambda k: float(np.mean([per[e][k] for e in engines]))
    return Metrics(avg("q_med"), avg("q_mean"), avg("q_p95"), per)


def q_mean(preds, truths) -> float:
    return float(np.mean(qerrors(preds, truths).mean(axis=0)))
