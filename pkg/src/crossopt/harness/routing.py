"""Engine routing and workload totals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

RANDOM_DRAWS = 100


def route(y_hat) -> int:
    """Index of the smallest estimate; ties go to the lowest index."""
    y = np.asarray(y_hat, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("expected a non-empty estimate vector")
    return int(np.argmin(y))


@dataclass(frozen=True)
class RoutingTotals:
    lcm: float
    random_mean: float
    random_std: float
    static: float
    static_engine: int
    oracle: float

    def gap_captured(self) -> float:
        """Share of the random-to-oracle gap recovered by model routing."""
        gap = self.random_mean - self.oracle
        return (self.random_mean - self.lcm) / gap if gap > 0 else 1.0

    def to_json(self, engines=None) -> dict:
        d = {
            "lcm": self.lcm,
            "random": self.random_mean,
            "random_std": self.random_std,
            "static": self.static,
            "static_engine": self.static_engine,
            "oracle": self.oracle,
        }
        if engines is not None:
            d["static_engine"] = engines[self.static_engine]
        return d


def evaluate_routing(labels, y_hat, seed: int = 0, draws: int = RANDOM_DRAWS) -> RoutingTotals:
    """Totals in seconds of routing by ``y_hat`` against the random, static and oracle strategies."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(y_hat, dtype=np.float64)
    if y.ndim != 2 or y.shape != p.shape or y.shape[0] == 0:
        raise ValueError("labels and estimates must be equal-shape non-empty matrices")
    if np.any(~(y > 0)):
        raise ValueError("labels must be positive")
    n, e = y.shape
    rows = np.arange(n)
    choice = np.array([route(r) for r in p])
    lcm = math.fsum(y[rows, choice])
    rng = np.random.default_rng([seed, 0x2A7D])
    rand = np.array([math.fsum(y[rows, rng.integers(e, size=n)]) for _ in range(draws)])
    per_engine = [math.fsum(y[:, k]) for k in range(e)]
    static_engine = int(np.argmin(per_engine))
    oracle = math.fsum(y.min(axis=1))
    # identical draws (a single engine) keep their exact value rather than a rounded mean
    if np.all(rand == rand[0]):
        mean, std = float(rand[0]), 0.0
    else:
        mean, std = float(rand.mean()), float(rand.std())
    return RoutingTotals(lcm, mean, std, per_engine[static_engine], static_engine, oracle)
