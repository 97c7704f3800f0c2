"""Bottom-up message-passing cost model and the per-type set baseline.

For a batch of graphs, structurally identical sub-DAGs are computed once:
nodes are hash-consed on (type, features, children), so shared tables,
fields and scans cost a single MLP evaluation. Message passing then runs
level by level (a node's level is one more than its deepest child), one
HiddenMLP call per (level, type) group.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from ..featurizer import NODE_TYPES, PlanGraph, feature_dims, schema_signature
from .mlp import count_params, init_mlp, mlp_apply, mlp_backward, mlp_forward


class ModelError(ValueError):
    pass


class SchemaMismatchError(ModelError):
    pass


class NonFiniteError(ModelError):
    def __init__(self, graph_index: int, node_id: int, node_type: str):
        super().__init__(f"non-finite activation at node {node_id} ({node_type}) of batch graph {graph_index}")
        self.graph_index = graph_index
        self.node_id = node_id
        self.node_type = node_type


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "gnn"  # "gnn" or "set"
    encoder_widths: tuple = (64, 96, 144, 216, 256)
    hidden_widths: tuple = (384, 384, 384, 256)
    head_widths: tuple = (174, 121, 85, 59, 1)
    set_types: tuple = NODE_TYPES

    def __post_init__(self):
        if self.kind not in ("gnn", "set"):
            raise ModelError(f"unknown model kind {self.kind!r}")
        d = self.encoder_widths[-1]
        if self.hidden_widths[-1] != d:
            raise ModelError("hidden MLP output width must equal the embedding width")
        if self.head_widths[-1] != 1:
            raise ModelError("predictor heads must end in a single output")
        if not self.set_types or any(t not in NODE_TYPES for t in self.set_types):
            raise ModelError(f"set_types must be a non-empty subset of {NODE_TYPES}")
        if any(w < 1 for w in self.encoder_widths + self.hidden_widths + self.head_widths):
            raise ModelError("layer widths must be positive")

    @property
    def dim(self) -> int:
        return self.encoder_widths[-1]

    @property
    def encoded_types(self) -> tuple:
        return NODE_TYPES if self.kind == "gnn" else tuple(t for t in NODE_TYPES if t in self.set_types)

    @property
    def head_input(self) -> int:
        return self.dim if self.kind == "gnn" else self.dim * len(self.encoded_types)

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @staticmethod
    def from_json(doc: dict) -> "ModelConfig":
        return ModelConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()})


SMALL_CONFIG = dict(encoder_widths=(5, 4), hidden_widths=(6, 4), head_widths=(3, 1))


@dataclass
class CostModel:
    config: ModelConfig
    engines: list
    dims: dict
    signature: str
    params: dict = field(default_factory=dict)  # group name -> list of (W, b)

    # -- parameter bookkeeping -------------------------------------------

    def groups(self) -> list[str]:
        out = [f"enc/{t}" for t in self.config.encoded_types]
        if self.config.kind == "gnn":
            out += [f"hid/{t}" for t in NODE_TYPES]
        out += [f"head/{e}" for e in self.engines]
        return out

    def head_groups(self) -> list[str]:
        return [f"head/{e}" for e in self.engines]

    def arrays(self, groups=None) -> list[np.ndarray]:
        out = []
        for g in groups or self.groups():
            for W, b in self.params[g]:
                out.extend((W, b))
        return out

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    @property
    def dtype(self):
        return self.params[self.groups()[0]][0][0].dtype

    def astype(self, dtype) -> "CostModel":
        m = self.copy()
        m.params = {g: [(W.astype(dtype), b.astype(dtype)) for W, b in ls] for g, ls in self.params.items()}
        return m

    def copy(self) -> "CostModel":
        m = copy.copy(self)
        m.engines = list(self.engines)
        m.dims = dict(self.dims)
        m.params = {g: [(W.copy(), b.copy()) for W, b in ls] for g, ls in self.params.items()}
        return m

    def zero_grads(self, groups=None) -> dict:
        return {g: [[np.zeros_like(W), np.zeros_like(b)] for W, b in self.params[g]] for g in groups or self.groups()}

    # -- inference ---------------------------------------------------------

    def check_graph(self, g: PlanGraph) -> None:
        for t, f in zip(g.types, g.features):
            if t not in self.dims or len(f) != self.dims[t]:
                raise SchemaMismatchError(f"graph node of type {t} with {len(f)} features does not match the model schema")

    def compile(self, graphs) -> "Batch":
        for g in graphs:
            self.check_graph(g)
        return compile_batch(graphs, self.config.kind, self.dtype)

    def embed_batch(self, batch: "Batch") -> np.ndarray:
        return forward(self, batch, keep=False)[0]

    def heads(self, E: np.ndarray, engines=None) -> np.ndarray:
        names = self.engines if engines is None else engines
        return np.column_stack([mlp_apply(self.params[f"head/{e}"], E)[:, 0] for e in names])

    def embed(self, graphs, chunk: int = 256) -> np.ndarray:
        """Head inputs (the query embedding, or the pooled type sets), one row per graph."""
        graphs = list(graphs)
        parts = [self.embed_batch(self.compile(graphs[i : i + chunk])) for i in range(0, len(graphs), chunk)]
        return np.concatenate(parts) if parts else np.zeros((0, self.config.head_input), self.dtype)

    def predict(self, graphs, chunk: int = 256) -> np.ndarray:
        """Per-engine runtime estimates in seconds, shape (n_graphs, n_engines), float64."""
        return self.heads(self.embed(graphs, chunk)).astype(np.float64)


def init_model(engines, seed: int, config: ModelConfig | None = None, dims: dict | None = None, dtype=np.float32) -> CostModel:
    """Fresh parameters; ``engines`` is an engine count or a list of names."""
    if isinstance(engines, int):
        if engines < 1:
            raise ModelError("engine count must be at least 1")
        engines = [f"engine{i}" for i in range(engines)]
    engines = list(engines)
    if not engines:
        raise ModelError("engine count must be at least 1")
    if len(set(engines)) != len(engines):
        raise ModelError("duplicate engine names")
    config = config or ModelConfig()
    dims = dict(dims or feature_dims())
    rng = np.random.default_rng([seed, 0x1C4])
    m = CostModel(config, engines, dims, schema_signature())
    d = config.dim
    for t in config.encoded_types:
        m.params[f"enc/{t}"] = init_mlp(rng, (dims[t],) + config.encoder_widths, dtype)
    if config.kind == "gnn":
        for t in NODE_TYPES:
            m.params[f"hid/{t}"] = init_mlp(rng, (2 * d,) + config.hidden_widths, dtype)
    for e in engines:
        m.params[f"head/{e}"] = init_mlp(rng, (config.head_input,) + config.head_widths, dtype)
    return m


def new_head(model: CostModel, rng: np.random.Generator):
    return init_mlp(rng, (model.config.head_input,) + model.config.head_widths, model.dtype)


def expected_param_count(config: ModelConfig, n_engines: int, dims: dict | None = None) -> int:
    dims = dims or feature_dims()
    n = sum(count_params((dims[t],) + config.encoder_widths) for t in config.encoded_types)
    if config.kind == "gnn":
        n += len(NODE_TYPES) * count_params((2 * config.dim,) + config.hidden_widths)
    return n + n_engines * count_params((config.head_input,) + config.head_widths)


# ---------------------------------------------------------------------------
# batch compilation


@dataclass
class _Group:
    type: str
    ids: np.ndarray  # unique node ids in this (level, type) group
    child_ids: np.ndarray  # distinct children of the group
    C: sp.csr_matrix | None  # len(ids) x len(child_ids) child multiplicities


@dataclass
class Batch:
    n_graphs: int
    n_nodes: int
    enc_ids: dict  # type -> unique ids
    X: dict  # type -> feature matrix
    groups: list  # _Group in dependency order (gnn)
    pool: object  # gnn: csr (B x N); set: dict type -> csr (B x n_type)
    origin: list  # unique id -> (graph index, node id, type)


def compile_batch(graphs, kind: str, dtype=np.float32) -> Batch:
    if kind == "set":
        return _compile_set(graphs, dtype)
    key_to_id: dict = {}
    types: list[str] = []
    feats: list[np.ndarray] = []
    kids: list[tuple] = []
    level: list[int] = []
    origin: list[tuple] = []
    rows, cols, vals = [], [], []
    for gi, g in enumerate(graphs):
        ch = [[] for _ in g.types]
        for u, v in g.edges:
            ch[v].append(u)
        local = [0] * len(g.types)
        for v in g.topo:
            ck = tuple(sorted(local[u] for u in ch[v]))
            f = g.features[v]
            key = (g.types[v], f.tobytes(), ck)
            uid = key_to_id.get(key)
            if uid is None:
                uid = len(types)
                key_to_id[key] = uid
                types.append(g.types[v])
                feats.append(f)
                kids.append(ck)
                level.append(1 + max(level[c] for c in ck) if ck else 0)
                origin.append((gi, v, g.types[v]))
            local[v] = uid
        rels = g.relation_ids
        if not rels:
            raise ModelError(f"graph {gi} has no relation nodes")
        for r in rels:
            rows.append(gi)
            cols.append(local[r])
            vals.append(1.0 / len(rels))
    n = len(types)
    enc_ids, X = _encoder_inputs(types, feats, dtype)
    by_group: dict = {}
    for uid in range(n):
        by_group.setdefault((level[uid], NODE_TYPES.index(types[uid])), []).append(uid)
    groups = []
    for (lv, ti) in sorted(by_group):
        ids = np.asarray(by_group[(lv, ti)], dtype=np.int64)
        if lv == 0:
            groups.append(_Group(NODE_TYPES[ti], ids, np.zeros(0, np.int64), None))
            continue
        child_ids = np.unique(np.concatenate([np.asarray(kids[u], np.int64) for u in ids]))
        pos = {c: k for k, c in enumerate(child_ids.tolist())}
        r, c = [], []
        for k, u in enumerate(ids.tolist()):
            for ch_ in kids[u]:
                r.append(k)
                c.append(pos[ch_])
        C = sp.csr_matrix((np.ones(len(r), dtype), (r, c)), shape=(len(ids), len(child_ids)))
        C.sum_duplicates()
        groups.append(_Group(NODE_TYPES[ti], ids, child_ids, C))
    pool = sp.csr_matrix((np.asarray(vals, dtype), (rows, cols)), shape=(len(graphs), n))
    pool.sum_duplicates()
    return Batch(len(graphs), n, enc_ids, X, groups, pool, origin)


def _encoder_inputs(types, feats, dtype):
    enc_ids, X = {}, {}
    for t in NODE_TYPES:
        ids = [i for i, x in enumerate(types) if x == t]
        if ids:
            enc_ids[t] = np.asarray(ids, dtype=np.int64)
            X[t] = np.stack([feats[i] for i in ids]).astype(dtype)
    return enc_ids, X


def _compile_set(graphs, dtype) -> Batch:
    # unique ids follow the sorted (type, features) key, so pooled sums do not
    # depend on node order within a graph
    first: dict = {}
    for gi, g in enumerate(graphs):
        for v, (t, f) in enumerate(zip(g.types, g.features)):
            first.setdefault((NODE_TYPES.index(t), f.tobytes()), (gi, v, t, f))
    keys = sorted(first)
    key_to_id = {k: i for i, k in enumerate(keys)}
    types = [first[k][2] for k in keys]
    feats = [first[k][3] for k in keys]
    origin = [first[k][:3] for k in keys]
    members: dict = {t: ([], [], []) for t in NODE_TYPES}
    for gi, g in enumerate(graphs):
        counts = {t: 0 for t in NODE_TYPES}
        for t in g.types:
            counts[t] += 1
        for t, f in zip(g.types, g.features):
            r, c, w = members[t]
            r.append(gi)
            c.append(key_to_id[(NODE_TYPES.index(t), f.tobytes())])
            w.append(1.0 / counts[t])
    enc_ids, X = _encoder_inputs(types, feats, dtype)
    pool = {}
    for t, ids in enc_ids.items():
        local = np.full(len(types), -1, np.int64)
        local[ids] = np.arange(len(ids))
        r, c, w = members[t]
        P = sp.csr_matrix((np.asarray(w, dtype), (r, local[np.asarray(c, np.int64)])), shape=(len(graphs), len(ids)))
        P.sum_duplicates()
        pool[t] = P
    return Batch(len(graphs), len(types), enc_ids, X, [], pool, origin)


# ---------------------------------------------------------------------------
# forward / backward


def _check_finite(a: np.ndarray, ids, batch: Batch) -> None:
    if not np.isfinite(a).all():
        bad = int(np.nonzero(~np.isfinite(a).all(axis=1))[0][0])
        gi, v, t = batch.origin[int(ids[bad])]
        raise NonFiniteError(gi, v, t)


def forward(model: CostModel, batch: Batch, keep: bool = True):
    """Returns (head inputs E, cache); the cache feeds :func:`backward`."""
    cfg = model.config
    d = cfg.dim
    dt = model.dtype
    enc_out, enc_cache = {}, {}
    for t, ids in batch.enc_ids.items():
        if f"enc/{t}" not in model.params:
            continue
        h, c = mlp_forward(model.params[f"enc/{t}"], batch.X[t])
        _check_finite(h, ids, batch)
        enc_out[t] = h
        enc_cache[t] = c
    if cfg.kind == "set":
        parts = []
        for t in cfg.encoded_types:
            if t in enc_out:
                parts.append(batch.pool[t] @ enc_out[t])
            else:
                parts.append(np.zeros((batch.n_graphs, d), dt))
        E = np.concatenate(parts, axis=1)
        return E, {"enc": enc_cache} if keep else None

    H = np.zeros((batch.n_nodes, d), dt)
    for t, ids in batch.enc_ids.items():
        H[ids] = enc_out[t]
    Hp = np.zeros((batch.n_nodes, d), dt)
    hid_cache = []
    for grp in batch.groups:
        n = len(grp.ids)
        S = grp.C @ Hp[grp.child_ids] if grp.C is not None else np.zeros((n, d), dt)
        Z = np.concatenate([S, H[grp.ids]], axis=1)
        out, c = mlp_forward(model.params[f"hid/{grp.type}"], Z)
        _check_finite(out, grp.ids, batch)
        Hp[grp.ids] = out
        hid_cache.append(c if keep else None)
    E = batch.pool @ Hp
    return E, ({"enc": enc_cache, "hid": hid_cache} if keep else None)


def predict_batch(model: CostModel, batch: Batch):
    """(E, Y, head caches) with Y of shape (B, n_engines)."""
    E, cache = forward(model, batch)
    ys, hc = [], []
    for e in model.engines:
        y, c = mlp_forward(model.params[f"head/{e}"], E)
        ys.append(y[:, 0])
        hc.append(c)
    return E, np.column_stack(ys), cache, hc


def backward(model: CostModel, batch: Batch, cache, head_cache, dY: np.ndarray, grads: dict, dE_extra=None) -> None:
    """Accumulate d loss / d params into ``grads`` given d loss / d Y."""
    cfg = model.config
    d = cfg.dim
    dt = model.dtype
    dY = dY.astype(dt)
    dE = np.zeros((batch.n_graphs, cfg.head_input), dt)
    for i, e in enumerate(model.engines):
        g = f"head/{e}"
        dE += mlp_backward(model.params[g], head_cache[i], dY[:, i : i + 1], grads[g])
    if dE_extra is not None:
        dE += dE_extra
    enc_cache = cache["enc"]
    if cfg.kind == "set":
        for k, t in enumerate(cfg.encoded_types):
            if t in enc_cache and f"enc/{t}" in grads:
                dh = batch.pool[t].T @ dE[:, k * d : (k + 1) * d]
                mlp_backward(model.params[f"enc/{t}"], enc_cache[t], np.ascontiguousarray(dh, dtype=dt), grads[f"enc/{t}"], need_dx=False)
        return
    dHp = np.asarray(batch.pool.T @ dE, dtype=dt)
    dH = np.zeros((batch.n_nodes, d), dt)
    for grp, c in zip(reversed(batch.groups), reversed(cache["hid"])):
        g = f"hid/{grp.type}"
        dZ = mlp_backward(model.params[g], c, dHp[grp.ids], grads[g])
        dH[grp.ids] += dZ[:, d:]
        if grp.C is not None:
            dHp[grp.child_ids] += grp.C.T @ dZ[:, :d]
    for t, ids in batch.enc_ids.items():
        g = f"enc/{t}"
        if g in grads:
            mlp_backward(model.params[g], enc_cache[t], dH[ids], grads[g], need_dx=False)
