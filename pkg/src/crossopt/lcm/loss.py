"""Q-error loss with a linear penalty for non-positive predictions."""

from __future__ import annotations

import numpy as np

P0 = 100.0
P1 = 100.0


def _check_true(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if np.any(~(t > 0)):
        raise ValueError("true runtimes must be positive")
    return t


def qerror_loss(pred, true):
    """max(p/t, t/p) for p > 0, else P0 + P1 * (1 + |p|/t). Elementwise."""
    t = _check_true(true)
    p = np.asarray(pred, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    ratio = np.maximum(safe / t, t / safe)
    out = np.where(p > 0, ratio, P0 + P1 * (1.0 + np.abs(p) / t))
    return out if out.ndim else float(out)


def qerror_grad(pred, true) -> np.ndarray:
    """d loss / d pred; at p == t the p >= t branch, at p <= 0 the penalty slope."""
    t = _check_true(true)
    p = np.asarray(pred, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    pos = np.where(p >= t, 1.0 / t, -t / (safe * safe))
    return np.where(p > 0, pos, -P1 / t)


def batch_loss_from_preds(preds, truths) -> float:
    """Mean over engines of the per-engine loss, then mean over batch items."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape or preds.ndim != 2:
        raise ValueError(f"prediction shape {preds.shape} does not match labels {truths.shape}")
    return float(np.mean(np.mean(qerror_loss(preds, truths), axis=1)))


def batch_loss_grad(preds, truths) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64)
    b, e = preds.shape
    return qerror_grad(preds, truths) / (b * e)
