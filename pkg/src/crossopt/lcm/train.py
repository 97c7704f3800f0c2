"""Loss evaluation, AdamW training with early stopping, and head-only training."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..harness.metrics import q_mean
from .loss import batch_loss_from_preds, batch_loss_grad
from .model import CostModel, ModelError, backward, new_head, predict_batch
from .mlp import mlp_apply, mlp_backward, mlp_forward


class TrainingDiverged(ModelError):
    def __init__(self, history):
        super().__init__(f"validation metric became non-finite at epoch {history[-1].epoch}")
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    min_epochs: int = 200
    patience: int = 25
    max_epochs: int = 400
    batch_size: int = 64
    weight_decay: float = 1e-4
    clip_norm: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for k in ("learning_rate", "min_epochs", "patience", "max_epochs", "batch_size", "weight_decay", "clip_norm", "eps"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.max_epochs < self.min_epochs:
            raise ValueError("max_epochs must be at least min_epochs")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_qmean: float


def save_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "trainLoss", "valQmean"])
        for r in history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_qmean)])


class FlatParams:
    """Rebinds the selected parameter groups as views of one contiguous vector."""

    def __init__(self, model: CostModel, groups):
        self.groups = list(groups)
        arrays = model.arrays(self.groups)
        self.vector = np.concatenate([a.ravel() for a in arrays])
        self.shapes = {g: [(W.shape, b.shape) for W, b in model.params[g]] for g in self.groups}
        views = self._views(self.vector)
        for g in self.groups:
            model.params[g] = [(W, b) for W, b in views[g]]

    def _views(self, flat: np.ndarray) -> dict:
        out, off = {}, 0
        for g in self.groups:
            ls = []
            for ws, bs in self.shapes[g]:
                nw, nb = int(np.prod(ws)), int(np.prod(bs))
                ls.append([flat[off : off + nw].reshape(ws), flat[off + nw : off + nw + nb].reshape(bs)])
                off += nw + nb
            out[g] = ls
        return out

    def new_grads(self) -> tuple[np.ndarray, dict]:
        flat = np.zeros_like(self.vector)
        return flat, self._views(flat)


class AdamW:
    """Adam with decoupled weight decay and global-norm clipping on a flat vector."""

    def __init__(self, params: np.ndarray, cfg: TrainConfig):
        self.p = params
        self.cfg = cfg
        self.m = np.zeros_like(params)
        self.v = np.zeros_like(params)
        self.tmp = np.empty_like(params)
        self.t = 0

    def step(self, g: np.ndarray) -> float:
        c = self.cfg
        norm = math.sqrt(float(np.dot(g, g)))
        if not math.isfinite(norm):
            raise ModelError("non-finite gradient")
        if norm > c.clip_norm:
            g = g * g.dtype.type(c.clip_norm / norm)
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        tmp = self.tmp
        self.m *= c.beta1
        np.multiply(g, 1 - c.beta1, out=tmp)
        self.m += tmp
        self.v *= c.beta2
        np.multiply(g, g, out=tmp)
        tmp *= 1 - c.beta2
        self.v += tmp
        np.sqrt(self.v, out=tmp)
        tmp *= 1.0 / math.sqrt(bc2)
        tmp += c.eps
        np.divide(self.m, tmp, out=tmp)
        tmp *= c.learning_rate / bc1
        self.p *= 1.0 - c.learning_rate * c.weight_decay
        self.p -= tmp
        return norm


def _labels(items) -> np.ndarray:
    return np.asarray([np.asarray(y, dtype=np.float64) for _, y in items], dtype=np.float64)


def batch_loss(model: CostModel, items) -> float:
    """Mean over engines, then over items, of the Q-error loss."""
    graphs = [g for g, _ in items]
    y = _labels(items)
    if y.ndim != 2 or y.shape[1] != len(model.engines):
        raise ModelError(f"labels have shape {y.shape}; the model has {len(model.engines)} heads")
    return batch_loss_from_preds(model.predict(graphs), y)


def loss_and_grads(model: CostModel, items, batch=None, grads=None):
    """(batch loss, predictions, gradient dict) for one batch of (graph, y).

    ``grads`` may be a preallocated zeroed gradient dict to accumulate into.
    """
    y = _labels(items)
    if y.ndim != 2 or y.shape[1] != len(model.engines):
        raise ModelError(f"labels have shape {y.shape}; the model has {len(model.engines)} heads")
    if batch is None:
        batch = model.compile([g for g, _ in items])
    _, Y, cache, hc = predict_batch(model, batch)
    Yd = Y.astype(np.float64)
    if not np.isfinite(Yd).all():
        bad = int(np.nonzero(~np.isfinite(Yd).all(axis=1))[0][0])
        raise ModelError(f"non-finite prediction for batch item {bad}")
    loss = batch_loss_from_preds(Yd, y)
    if grads is None:
        grads = model.zero_grads()
    backward(model, batch, cache, hc, batch_loss_grad(Yd, y), grads)
    return loss, Yd, grads


def _early_stopping(cfg: TrainConfig, run_epoch, evaluate, snapshot, baseline=None, progress=None):
    """Generic loop; returns (best snapshot, history). ``baseline`` is an epoch-0 candidate."""
    history = []
    best = math.inf
    best_state = None
    if baseline is not None:
        best, best_state = baseline, snapshot()
    bad = 0
    for epoch in range(1, cfg.max_epochs + 1):
        tl = run_epoch(epoch)
        vq = evaluate()
        history.append(EpochRecord(epoch, tl, vq))
        if progress is not None:
            progress(history[-1])
        if not math.isfinite(vq) or not math.isfinite(tl):
            raise TrainingDiverged(history)
        if vq < best:
            best, best_state, bad = vq, snapshot(), 0
        else:
            bad += 1
        if epoch >= cfg.min_epochs and bad >= cfg.patience:
            break
    return best_state, history


def train(model: CostModel, train_set, val_set, config: TrainConfig, progress=None):
    """Train every parameter; returns (best-validation model, history). The input model is not modified."""
    if not train_set or not val_set:
        raise ModelError("training and validation sets must be non-empty")
    if set(map(id, (g for g, _ in train_set))) & set(map(id, (g for g, _ in val_set))):
        raise ModelError("validation set shares graphs with the training set")
    model = model.copy()
    space = FlatParams(model, model.groups())
    opt = AdamW(space.vector, config)
    rng = np.random.default_rng([config.seed, 0x7EA1])
    val_graphs = [g for g, _ in val_set]
    val_y = _labels(val_set)
    bs = config.batch_size
    val_batches = [model.compile(val_graphs[i : i + 256]) for i in range(0, len(val_graphs), 256)]

    def run_epoch(_epoch):
        order = rng.permutation(len(train_set))
        total = 0.0
        for s in range(0, len(order), bs):
            items = [train_set[k] for k in order[s : s + bs]]
            flat, grads = space.new_grads()
            loss, _, _ = loss_and_grads(model, items, grads=grads)
            opt.step(flat)
            total += loss * len(items)
        return total / len(train_set)

    def evaluate():
        preds = np.concatenate([model.heads(model.embed_batch(b)) for b in val_batches]).astype(np.float64)
        if not np.isfinite(preds).all():
            return math.nan
        return q_mean(preds, val_y)

    def snapshot():
        return {g: [(W.copy(), b.copy()) for W, b in ls] for g, ls in model.params.items()}

    best, history = _early_stopping(config, run_epoch, evaluate, snapshot, progress=progress)
    model.params = best
    return model, history


def split_half(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded 50/50 split of ``range(n)``: n // 2 training indices, the rest validation."""
    perm = np.random.default_rng([seed, 0xF1]).permutation(n)
    return np.sort(perm[: n // 2]), np.sort(perm[n // 2 :])


def _train_heads(model: CostModel, names, E_tr, y_tr, E_va, y_va, config, progress=None, baseline=True):
    """Head-only training on fixed embeddings; mutates and returns the selected heads."""
    groups = [f"head/{e}" for e in names]
    space = FlatParams(model, groups)
    opt = AdamW(space.vector, config)
    rng = np.random.default_rng([config.seed, 0x4EAD])
    bs = config.batch_size
    dt = model.dtype

    def preds(E):
        return model.heads(E, names).astype(np.float64)

    def run_epoch(_epoch):
        order = rng.permutation(len(E_tr))
        total = 0.0
        for s in range(0, len(order), bs):
            idx = order[s : s + bs]
            flat, grads = space.new_grads()
            ys = []
            caches = []
            for g in groups:
                y, c = mlp_forward(model.params[g], E_tr[idx])
                ys.append(y[:, 0])
                caches.append(c)
            Y = np.column_stack(ys).astype(np.float64)
            dY = batch_loss_grad(Y, y_tr[idx]).astype(dt)
            for i, g in enumerate(groups):
                mlp_backward(model.params[g], caches[i], dY[:, i : i + 1], grads[g], need_dx=False)
            opt.step(flat)
            total += batch_loss_from_preds(Y, y_tr[idx]) * len(idx)
        return total / len(E_tr)

    def evaluate():
        p = preds(E_va)
        return q_mean(p, y_va) if np.isfinite(p).all() else math.nan

    def snapshot():
        return {g: [(W.copy(), b.copy()) for W, b in model.params[g]] for g in groups}

    start = evaluate() if baseline else None
    best, history = _early_stopping(config, run_epoch, evaluate, snapshot, baseline=start, progress=progress)
    for g in groups:
        model.params[g] = best[g]
    return history


def finetune_heads(model: CostModel, few_shot, config: TrainConfig, progress=None):
    """Head-only fine-tuning on a 50/50 split of ``few_shot``; returns (model, history).

    The embedding parameters of the returned model are the very same arrays'
    copies, untouched. The starting heads count as an epoch-0 candidate, so the
    selected heads never score worse on the validation half.
    """
    if len(few_shot) < 2:
        raise ModelError("few-shot set needs at least two queries")
    model = model.copy()
    tr, va = split_half(len(few_shot), config.seed)
    E = model.embed([g for g, _ in few_shot])
    y = _labels(few_shot)
    hist = _train_heads(model, model.engines, E[tr], y[tr], E[va], y[va], config, progress)
    return model, hist


def add_engine_head(model: CostModel, name: str, few_shot, config: TrainConfig, progress=None):
    """Append a freshly initialised head for ``name`` trained on (graph, seconds) pairs."""
    if name in model.engines:
        raise ModelError(f"engine {name!r} already has a head")
    if len(few_shot) < 2:
        raise ModelError("few-shot set needs at least two queries")
    model = model.copy()
    rng = np.random.default_rng([config.seed, 0xADD, len(model.engines)])
    model.params[f"head/{name}"] = new_head(model, rng)
    model.engines.append(name)
    tr, va = split_half(len(few_shot), config.seed)
    E = model.embed([g for g, _ in few_shot])
    y = np.asarray([float(np.ravel(t)[-1]) for _, t in few_shot], dtype=np.float64)[:, None]
    hist = _train_heads(model, [name], E[tr], y[tr], E[va], y[va], config, progress, baseline=False)
    return model, hist
