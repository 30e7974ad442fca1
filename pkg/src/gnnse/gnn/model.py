"""Heterogeneous attention GNN over (augmented) factor graphs.

Per layer, every receiver r aggregates messages from its neighbours u:

    m_r = sum_u alpha_ru * (W2 . relu(W1 [h_r, h_u] + b1) + b2)
    alpha_ru = softmax_u(leaky_relu(a . [h_r, h_u] + c))
    h_r <- GRU(m_r, h_r)

with one parameter set for variable->factor, factor->variable and
variable->variable messages. A variable node's softmax runs jointly over its
factor and variable neighbours. All nodes update from the previous layer's
embeddings. Weights are shared across the K layers.

The first message layer is split into receiver and sender halves so the
dense products run per node and only gathers happen per edge. The output
layer is applied after aggregation, which is exact because the attention
weights of a receiver sum to one (or zero when it has no neighbours).
"""
import enum
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import NumericError
from ..factor_graph import N_FACTOR_FEATURES
from . import autodiff as ad
from .autodiff import Segments, Tensor

EDGE_TYPES = ("vf", "fv", "vv")  # sender type, receiver type
LEAKY_SLOPE = 0.2
NORM_MOMENTUM = 0.1


class Normalization(enum.Enum):
    OFF = "off"
    MEAN_BATCH = "mean_batch"


@dataclass(frozen=True)
class Hyperparams:
    s: int = 64
    K: int = 4
    lr: float = 4e-4
    batch: int = 32
    clip: float = 0.5
    epochs: int = 100
    normalization: Normalization = Normalization.MEAN_BATCH
    dtype: str = "float32"

    def __post_init__(self):
        if isinstance(self.normalization, str):
            object.__setattr__(self, "normalization", Normalization(self.normalization))
        if min(self.s, self.K, self.batch) < 1:
            raise ValueError("s, K and batch must be >= 1")
        if not (self.lr >= 0 and self.clip > 0):
            raise ValueError("lr must be >= 0 and clip > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype}")

    def to_dict(self):
        d = asdict(self)
        d["normalization"] = self.normalization.value
        return d


def parameter_shapes(hyper, n_bus):
    s = hyper.s
    shapes = OrderedDict()
    shapes["embed_v.w"] = (2 * n_bus, s)
    shapes["embed_v.b"] = (s,)
    shapes["embed_f.w"] = (N_FACTOR_FEATURES, s)
    shapes["embed_f.b"] = (s,)
    for t in EDGE_TYPES:
        shapes[f"msg_{t}.w1"] = (2 * s, s)  # rows: receiver half, then sender half
        shapes[f"msg_{t}.b1"] = (s,)
        shapes[f"msg_{t}.w2"] = (s, s)
        shapes[f"msg_{t}.b2"] = (s,)
        shapes[f"att_{t}.w"] = (2 * s, 1)
        shapes[f"att_{t}.b"] = (1,)
    for node in ("v", "f"):
        # gate blocks [reset | update | candidate], input x and hidden h
        shapes[f"gru_{node}.wi"] = (s, 3 * s)
        shapes[f"gru_{node}.wh"] = (s, 3 * s)
        shapes[f"gru_{node}.bi"] = (3 * s,)
        shapes[f"gru_{node}.bh"] = (3 * s,)
    shapes["pred.w1"] = (s, s)
    shapes["pred.b1"] = (s,)
    shapes["pred.w2"] = (s, 1)
    shapes["pred.b2"] = (1,)
    return shapes


def buffer_shapes(hyper):
    if hyper.normalization is Normalization.OFF:
        return OrderedDict()
    return OrderedDict((f"norm_{t}.{k}", (hyper.s,)) for k in range(hyper.K) for t in EDGE_TYPES)


class GnnModel:
    def __init__(self, hyper, n_bus, params, buffers=None):
        self.hyper = hyper
        self.n_bus = int(n_bus)
        self.params = OrderedDict(params)
        self.buffers = OrderedDict(buffers or {})
        expected = parameter_shapes(hyper, n_bus)
        if list(self.params) != list(expected):
            raise ValueError("parameter names do not match the architecture")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: shape {self.params[name].shape}, expected {shape}")
        for name, shape in buffer_shapes(hyper).items():
            if name not in self.buffers:
                self.buffers[name] = np.zeros(shape, dtype=hyper.dtype)
            elif self.buffers[name].shape != shape:
                raise ValueError(f"{name}: shape {self.buffers[name].shape}, expected {shape}")

    @property
    def dtype(self):
        return np.dtype(self.hyper.dtype)

    def copy(self):
        return GnnModel(self.hyper, self.n_bus,
                        OrderedDict((k, v.copy()) for k, v in self.params.items()),
                        OrderedDict((k, v.copy()) for k, v in self.buffers.items()))

    def n_parameters(self):
        return sum(v.size for v in self.params.values())


def init_model(hyper, n_bus, rng=None):
    """Glorot-uniform weights, zero biases; deterministic given the rng seed."""
    rng = np.random.default_rng(rng)
    params = OrderedDict()
    for name, shape in parameter_shapes(hyper, n_bus).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=hyper.dtype)
            continue
        fan_in, fan_out = shape
        if name.startswith("gru_"):
            fan_out //= 3  # per gate
        a = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-a, a, size=shape).astype(hyper.dtype)
    return GnnModel(hyper, n_bus, params)


# --------------------------------------------------------------------------- batching

class GraphBatch:
    """Disjoint union of factor graphs with precomputed edge segments."""

    def __init__(self, graphs, dtype=np.float64):
        graphs = list(graphs)
        if not graphs:
            raise ValueError("batch is empty")
        n_state = graphs[0].n_state
        if any(g.n_state != n_state for g in graphs):
            raise ValueError("graphs in a batch must share the network")
        self.n_state = n_state
        self.n_graphs = len(graphs)
        nv = np.array([g.n_var for g in graphs])
        nf = np.array([g.n_factor for g in graphs])
        voff = np.concatenate([[0], np.cumsum(nv)])
        foff = np.concatenate([[0], np.cumsum(nf)])
        self.n_var, self.n_factor = int(voff[-1]), int(foff[-1])
        self.var_offsets = voff
        self.factor_counts = nf
        self.var_graph = np.repeat(np.arange(len(graphs)), nv)
        self.var_ids = np.concatenate([g.var_ids for g in graphs])
        self.factor_features = np.concatenate(
            [g.factor_features for g in graphs]).reshape(-1, N_FACTOR_FEATURES).astype(dtype)
        fv = np.concatenate([g.fv_edges + [foff[i], voff[i]] for i, g in enumerate(graphs)])
        vv = np.concatenate([g.vv_edges + voff[i] for i, g in enumerate(graphs)])
        fv = fv.reshape(-1, 2).astype(np.int64)
        vv = vv.reshape(-1, 2).astype(np.int64)
        vv_send = np.concatenate([vv[:, 0], vv[:, 1]])
        vv_recv = np.concatenate([vv[:, 1], vv[:, 0]])
        self.has_vv = len(vv) > 0
        self.seg_var_embed = Segments(self.var_ids, n_state)
        self.seg_fv_f = Segments(fv[:, 0], self.n_factor)
        self.seg_fv_v = Segments(fv[:, 1], self.n_var)
        self.seg_vv_send = Segments(vv_send, self.n_var)
        self.seg_vv_recv = Segments(vv_recv, self.n_var)
        self.seg_var_softmax = Segments(np.concatenate([fv[:, 1], vv_recv]), self.n_var)
        self.n_fv = len(fv)
        if all(g.labels is not None for g in graphs):
            self.labels = np.concatenate([g.labels for g in graphs]).astype(dtype)
        else:
            self.labels = None


def as_batch(graphs, dtype=np.float64):
    if isinstance(graphs, GraphBatch):
        return graphs
    if hasattr(graphs, "fv_edges"):
        graphs = [graphs]
    return GraphBatch(graphs, dtype)


# --------------------------------------------------------------------------- forward

@dataclass
class Prediction:
    x_pred: np.ndarray
    var_embeddings: list = None  # per layer, (n_var, s)
    factor_embeddings: list = None
    attention: list = None  # per layer, {edge type: weights}


class _Trace:
    """Forward-pass bookkeeping: arrays kept for inspection and statistics."""

    def __init__(self):
        self.hv, self.hf, self.attention = [], [], []
        self.batch_means = {}


def _projection_weights(P, s, types_v, types_f):
    """Stack receiver/sender halves of message and attention weights per node type."""
    def half(name, side):
        return ad.rows(P[name], 0, s) if side == "r" else ad.rows(P[name], s, 2 * s)
    wv = ad.concat([half(f"{kind}_{t}.w" if kind == "att" else f"msg_{t}.w1", side)
                    for kind in ("msg", "att") for t, side in types_v], axis=1)
    wf = ad.concat([half(f"{kind}_{t}.w" if kind == "att" else f"msg_{t}.w1", side)
                    for kind in ("msg", "att") for t, side in types_f], axis=1)
    return wv, wf


def _edges(P, t, recv, send, seg_recv, seg_send):
    """Hidden message activations (E, s) and attention scores (E,) for edge type ``t``."""
    (m_r, a_r), (m_s, a_s) = recv, send
    hidden = ad.gather_add(m_r, m_s, P[f"msg_{t}.b1"], seg_recv, seg_send, slope=0.0)
    score = ad.gather_add(a_r, a_s, P[f"att_{t}.b"], seg_recv, seg_send, slope=LEAKY_SLOPE)
    return hidden, ad.reshape(score, (-1,))


def _aggregate(P, t, k, hidden, alpha, seg_recv, model, training, trace):
    """``sum_u alpha_u (W2 (hidden_u - mu) + b2)`` per receiver, evaluated as
    ``A W2 + S b2`` with ``A`` the attention-weighted centred hidden sum and
    ``S`` the receiver's attention mass."""
    center = None
    if model.hyper.normalization is Normalization.MEAN_BATCH:
        center = "batch" if training else model.buffers[f"norm_{t}.{k}"]
    agg, mu = ad.centered_segment_sum(alpha, hidden, seg_recv, center)
    if training and center is not None:
        trace.batch_means[f"norm_{t}.{k}"] = mu
    weight_sum = ad.segment_sum(alpha, seg_recv)
    return ad.add_outer(ad.matmul(agg, P[f"msg_{t}.w2"]), weight_sum, P[f"msg_{t}.b2"])


def _gru(P, node, x, h):
    gi = ad.linear(x, P[f"gru_{node}.wi"], P[f"gru_{node}.bi"])
    gh = ad.linear(h, P[f"gru_{node}.wh"], P[f"gru_{node}.bh"])
    return ad.gru_cell(gi, gh, h)


def _forward(model, B, P, training=False, record=False):
    s = model.hyper.s
    trace = _Trace()
    # (edge type, side) of each projection computed on variable / factor embeddings
    types_v = [("fv", "r"), ("vf", "s")] + ([("vv", "r"), ("vv", "s")] if B.has_vv else [])
    types_f = [("fv", "s"), ("vf", "r")]
    wv, wf = _projection_weights(P, s, types_v, types_f)
    feats = Tensor(B.factor_features)
    hv = ad.add(ad.take(P["embed_v.w"], B.seg_var_embed), P["embed_v.b"])
    hf = ad.linear(feats, P["embed_f.w"], P["embed_f.b"])
    for k in range(model.hyper.K):
        pv = ad.split_cols(ad.matmul(hv, wv), [s] * len(types_v) + [1] * len(types_v))
        pf = ad.split_cols(ad.matmul(hf, wf), [s] * len(types_f) + [1] * len(types_f))
        nv, nf = len(types_v), len(types_f)
        proj_v = {types_v[i]: (pv[i], pv[nv + i]) for i in range(nv)}
        proj_f = {types_f[i]: (pf[i], pf[nf + i]) for i in range(nf)}

        # factor receivers; the last factor update cannot reach the prediction
        # and is only computed when embeddings are recorded
        update_f = record or k < model.hyper.K - 1
        if update_f:
            hid_vf, sc_vf = _edges(P, "vf", proj_f["vf", "r"], proj_v["vf", "s"],
                                   B.seg_fv_f, B.seg_fv_v)
            alpha_vf = ad.segment_softmax(sc_vf, B.seg_fv_f)
            m_f = _aggregate(P, "vf", k, hid_vf, alpha_vf, B.seg_fv_f, model, training, trace)

        # variable receivers: one softmax over factor and variable neighbours
        hid_fv, sc_fv = _edges(P, "fv", proj_v["fv", "r"], proj_f["fv", "s"], B.seg_fv_v, B.seg_fv_f)
        if B.has_vv:
            hid_vv, sc_vv = _edges(P, "vv", proj_v["vv", "r"], proj_v["vv", "s"],
                                   B.seg_vv_recv, B.seg_vv_send)
            alpha_v = ad.segment_softmax(ad.concat([sc_fv, sc_vv]), B.seg_var_softmax)
            alpha_fv = ad.rows(alpha_v, 0, B.n_fv)
            alpha_vv = ad.rows(alpha_v, B.n_fv, alpha_v.shape[0])
        else:
            alpha_fv = ad.segment_softmax(sc_fv, B.seg_fv_v)
        m_v = _aggregate(P, "fv", k, hid_fv, alpha_fv, B.seg_fv_v, model, training, trace)
        if B.has_vv:
            m_v = ad.add(m_v, _aggregate(P, "vv", k, hid_vv, alpha_vv, B.seg_vv_recv,
                                         model, training, trace))

        hv, hf = _gru(P, "v", m_v, hv), (_gru(P, "f", m_f, hf) if update_f else None)
        if record:
            trace.hv.append(hv.data)
            trace.hf.append(hf.data)
            att = {"vf": alpha_vf.data, "fv": alpha_fv.data}
            if B.has_vv:
                att["vv"] = alpha_vv.data
            trace.attention.append(att)

    hidden = ad.relu(ad.linear(hv, P["pred.w1"], P["pred.b1"]))
    out = ad.linear(hidden, P["pred.w2"], P["pred.b2"])
    return ad.reshape(out, (-1,)), trace


def _check_batch(model, B):
    if B.n_state != 2 * model.n_bus:
        raise ValueError(f"graph has {B.n_state} state variables, model expects {2 * model.n_bus}")


def forward(model, graphs, record=False, training=False):
    """Predictions for every variable node (inference mode uses running means)."""
    B = as_batch(graphs, model.dtype)
    _check_batch(model, B)
    P = {k: Tensor(v) for k, v in model.params.items()}
    out, trace = _forward(model, B, P, training=training, record=record)
    pred = Prediction(out.data)
    if record:
        pred.var_embeddings = trace.hv
        pred.factor_embeddings = trace.hf
        pred.attention = trace.attention
    return pred


def predict(model, graphs, batch_size=64):
    """Per-graph prediction arrays, evaluated in chunks."""
    graphs = list(graphs)
    out = []
    for lo in range(0, len(graphs), batch_size):
        B = GraphBatch(graphs[lo:lo + batch_size], model.dtype)
        x = forward(model, B).x_pred
        out.extend(np.split(x, B.var_offsets[1:-1]))
    return out


def loss(pred, labels):
    """Mean squared error over all variable nodes of all graphs."""
    pred = np.asarray(pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if pred.shape != labels.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {labels.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction")
    return float(np.mean((pred - labels) ** 2))


def gradients(model, graphs, training=True, update_stats=False):
    """``(loss, {name: grad})`` of the batch MSE by reverse-mode differentiation.

    With ``update_stats`` the normalization running means are moved towards
    the batch means.
    """
    B = as_batch(graphs, model.dtype)
    _check_batch(model, B)
    if B.labels is None:
        raise ValueError("graphs need labels")
    P = OrderedDict((k, Tensor(v, requires_grad=True, name=k)) for k, v in model.params.items())
    out, trace = _forward(model, B, P, training=training)
    L = ad.mse(out, B.labels)
    value = float(L.data)
    if not np.isfinite(value):
        # blame a graph with non-finite inputs first: batch statistics spread
        # one bad input over the whole batch
        foff = np.repeat(np.arange(B.n_graphs), B.factor_counts)
        bad_in = np.zeros(B.n_graphs, bool)
        np.logical_or.at(bad_in, foff, ~np.isfinite(B.factor_features).all(axis=1))
        np.logical_or.at(bad_in, B.var_graph, ~np.isfinite(B.labels))
        per_graph = np.bincount(B.var_graph, weights=(out.data - B.labels) ** 2)
        bad = np.flatnonzero(bad_in if bad_in.any() else ~np.isfinite(per_graph))
        raise NumericError("non-finite loss", graph_index=int(bad[0]) if bad.size else 0)
    L.backward()
    grads = OrderedDict()
    for k, t in P.items():
        grads[k] = t.grad if t.grad is not None else np.zeros_like(t.data)
    if update_stats:
        for name, mu in trace.batch_means.items():
            buf = model.buffers[name]
            buf *= 1 - NORM_MOMENTUM
            buf += NORM_MOMENTUM * mu
    return value, grads
