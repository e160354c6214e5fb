"""Gated graph convolutional network over the superpixel graph.

Architecture: linear node/edge embeddings, L gated message-passing layers
(each: per-edge sigmoid gates from edge + endpoint representations, gate-
weighted neighbor mean with epsilon-stabilized denominator, then per stream
ReLU -> BatchNorm -> residual -> dropout), and a sigmoid readout giving one
foreground probability per node. The edge residual stream carries the
pre-sigmoid gate logits. Gradients come from the reverse-mode tape in
`autodiff`; training uses adaptive-moment updates with gradient clipping.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    BadMagic,
    EmptyLabelSet,
    NonFiniteActivation,
    NonFiniteLoss,
    ShapeMismatch,
    TruncatedFile,
)

CHECKPOINT_MAGIC = b"VSGN"


@dataclass
class GnnConfig:
    layers: int = 12
    hidden: int = 20
    node_dim: int = 14
    edge_dim: int = 9
    dropout_p: float = 0.1
    epsilon_gate: float = 1e-6
    epsilon_bn: float = 1e-5
    bn_momentum: float = 0.1

    def validate(self):
        if self.layers < 1 or self.hidden < 1:
            raise ShapeMismatch("layers and hidden size must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ShapeMismatch("dropout_p must be in [0, 1)")
        return self


def _layer_names(i):
    p = f"layer{i:02d}_"
    return p


def parameter_spec(config):
    """Ordered (name, shape, trainable) triples for the parameter set."""
    h, n, e = config.hidden, config.node_dim, config.edge_dim
    spec = [
        ("embed_node_w", (n, h), True),
        ("embed_node_b", (h,), True),
        ("embed_edge_w", (e, h), True),
        ("embed_edge_b", (h,), True),
    ]
    for i in range(config.layers):
        p = _layer_names(i)
        spec += [
            (p + "self", (h, h), True),       # A
            (p + "neigh", (h, h), True),      # B
            (p + "gate_edge", (h, h), True),  # C
            (p + "gate_src", (h, h), True),   # D
            (p + "gate_dst", (h, h), True),   # F
            (p + "bn_node_scale", (h,), True),
            (p + "bn_node_shift", (h,), True),
            (p + "bn_edge_scale", (h,), True),
            (p + "bn_edge_shift", (h,), True),
            (p + "bn_node_mean", (h,), False),
            (p + "bn_node_var", (h,), False),
            (p + "bn_edge_mean", (h,), False),
            (p + "bn_edge_var", (h,), False),
        ]
    spec += [("readout_w", (h, 1), True), ("readout_b", (1,), True)]
    return spec


class GnnParams:
    """Named tensor store; kept ordered for checkpoints and optimizers."""

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = tensors  # dict name -> float64 ndarray

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def trainable_names(self):
        return [n for n, _, t in parameter_spec(self.config) if t]

    def copy(self):
        return GnnParams(self.config,
                         {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype):
        return GnnParams(self.config,
                         {k: v.astype(dtype) for k, v in self.tensors.items()})

    @property
    def dtype(self):
        return self.tensors["embed_node_w"].dtype

    def count_trainable(self):
        return int(sum(self.tensors[n].size for n in self.trainable_names()))


def expected_parameter_count(config):
    """Trainable scalar count from the config algebra."""
    h, n, e, l = config.hidden, config.node_dim, config.edge_dim, config.layers
    return (n + 1) * h + (e + 1) * h + l * (5 * h * h + 4 * h) + h + 1


def init_params(config, seed=0, dtype=np.float64):
    """Uniform fan-in init for matrices, zeros for biases, identity BN."""
    config.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape, _ in parameter_spec(config):
        if name.endswith(("_b", "_shift", "_mean", "readout_b")):
            tensors[name] = np.zeros(shape, dtype=dtype)
        elif name.endswith(("_scale", "_var")):
            tensors[name] = np.ones(shape, dtype=dtype)
        else:
            fan_in = shape[0]
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return GnnParams(config, tensors)


def _batchnorm(x, scale, shift, run_mean, run_var, eps, momentum, train):
    """BN over the leading (node/edge) axis. In train mode the running
    statistics arrays are updated in place as a side effect."""
    if train:
        mu = ad.mean0(x)
        xc = x - mu
        var = ad.mean0(xc * xc)
        inv = ad.power(var + eps, -0.5)
        out = xc * inv * scale + shift
        run_mean *= 1.0 - momentum
        run_mean += momentum * mu.value
        run_var *= 1.0 - momentum
        run_var += momentum * var.value
        return out
    inv = 1.0 / np.sqrt(run_var + eps)
    return (x - run_mean) * inv * scale + shift


def _graph_plans(graph):
    """Per-graph cached ScatterPlans for the src and dst index vectors."""
    plans = getattr(graph, "_gnn_plans", None)
    if plans is None:
        plans = (ad.ScatterPlan(graph.src, graph.num_nodes),
                 ad.ScatterPlan(graph.dst, graph.num_nodes))
        graph._gnn_plans = plans
    return plans


def _forward_core(params, config, graph, x, z, train, rng):
    """Shared forward pass; returns the readout Var (V, 1)."""
    t = params.tensors
    v = graph.num_nodes

    dtype = params.dtype
    xv = ad.Var(np.asarray(x, dtype=dtype))
    zv = ad.Var(np.asarray(z, dtype=dtype))
    if xv.value.ndim != 2 or zv.value.ndim != 2:
        raise ShapeMismatch("node/edge features must be 2-D arrays")
    if xv.shape[1] != config.node_dim or zv.shape[1] != config.edge_dim:
        raise ShapeMismatch(
            f"feature dims {xv.shape[1]}/{zv.shape[1]} do not match config "
            f"{config.node_dim}/{config.edge_dim}")
    if len(graph.src) != zv.shape[0] or v != xv.shape[0]:
        raise ShapeMismatch("graph and feature row counts differ")

    param_vars = {}

    def pv(name):
        if name not in param_vars:
            param_vars[name] = ad.Var(t[name])
        return param_vars[name]

    h = ad.matmul(xv, pv("embed_node_w")) + pv("embed_node_b")
    e = ad.matmul(zv, pv("embed_edge_w")) + pv("embed_edge_b")
    src, dst = graph.src, graph.dst
    src_plan, dst_plan = _graph_plans(graph)

    for i in range(config.layers):
        pfx = _layer_names(i)
        # per-node linear maps, then gathered per edge (matmul commutes
        # with row selection; this keeps the big matmuls at node level)
        h_gate_src = ad.gather(ad.matmul(h, pv(pfx + "gate_src")), src, src_plan)
        h_gate_dst = ad.gather(ad.matmul(h, pv(pfx + "gate_dst")), dst, dst_plan)
        gate_logits = (ad.matmul(e, pv(pfx + "gate_edge"))
                       + h_gate_src + h_gate_dst)
        gate = ad.sigmoid(gate_logits)
        msg = gate * ad.gather(ad.matmul(h, pv(pfx + "neigh")), src, src_plan)
        num = ad.scatter_sum(msg, dst, v, dst_plan)
        den = ad.scatter_sum(gate, dst, v, dst_plan) + config.epsilon_gate
        h_tilde = ad.matmul(h, pv(pfx + "self")) + num / den

        hn = _batchnorm(ad.relu(h_tilde), pv(pfx + "bn_node_scale"),
                        pv(pfx + "bn_node_shift"), t[pfx + "bn_node_mean"],
                        t[pfx + "bn_node_var"], config.epsilon_bn,
                        config.bn_momentum, train)
        en = _batchnorm(ad.relu(gate_logits), pv(pfx + "bn_edge_scale"),
                        pv(pfx + "bn_edge_shift"), t[pfx + "bn_edge_mean"],
                        t[pfx + "bn_edge_var"], config.epsilon_bn,
                        config.bn_momentum, train)
        h = hn + h
        e = en + e
        if train and config.dropout_p > 0.0:
            keep = 1.0 - config.dropout_p
            h = h * ((rng.random(h.shape) < keep).astype(dtype) / keep)
            e = e * ((rng.random(e.shape) < keep).astype(dtype) / keep)

    yhat = ad.sigmoid(ad.matmul(h, pv("readout_w")) + pv("readout_b"))
    return yhat, param_vars


def forward(params, config, graph, x, z, mode="eval", rng_seed=0):
    """Per-node foreground probabilities in (0, 1). Eval mode uses running
    BN statistics and no dropout; train mode is deterministic per rng_seed."""
    train = mode == "train"
    rng = np.random.default_rng(rng_seed)
    yhat, _ = _forward_core(params, config, graph, x, z, train, rng)
    out = yhat.value[:, 0]
    if not np.all(np.isfinite(out)):
        raise NonFiniteActivation("non-finite network output")
    return out


def loss_and_grads(params, config, graph, x, z, targets, rng_seed=0):
    """Mean binary cross-entropy and reverse-mode gradients (train mode)."""
    targets = np.asarray(targets, dtype=params.dtype).reshape(-1, 1)
    if len(targets) != graph.num_nodes:
        raise ShapeMismatch("targets length != node count")
    rng = np.random.default_rng(rng_seed)
    yhat, param_vars = _forward_core(params, config, graph, x, z, True, rng)
    p = ad.clip(yhat, 1e-7, 1.0 - 1e-7)
    tv = ad.Var(targets)
    loss = -ad.total_mean(tv * ad.log(p) + (1.0 - tv) * ad.log(1.0 - p))
    ad.backward(loss)
    grads = {}
    for name in params.trainable_names():
        g = param_vars[name].grad if name in param_vars else None
        # params not reachable from the loss (e.g. the last layer's edge
        # stream feeds nothing) have zero gradient
        grads[name] = g if g is not None else np.zeros_like(params[name])
    return float(loss.value), grads


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0


def train_step(params, opt_state, batch, lr=1e-3, rng_seed=0):
    """One adaptive-moment update on a (graph, x, z, targets) batch.

    Returns the pre-update loss. On a non-finite loss the step aborts with
    NonFiniteLoss and the parameters are left untouched.
    """
    graph, x, z, targets = batch
    loss, grads = loss_and_grads(params, params.config, graph, x, z, targets,
                                 rng_seed=rng_seed)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss}")
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    scale = opt_state.clip_norm / total if total > opt_state.clip_norm else 1.0
    opt_state.step += 1
    t = opt_state.step
    for name in params.trainable_names():
        g = grads[name] * scale
        m = opt_state.m.get(name)
        v = opt_state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = opt_state.beta1 * m + (1 - opt_state.beta1) * g
        v = opt_state.beta2 * v + (1 - opt_state.beta2) * g * g
        opt_state.m[name] = m
        opt_state.v[name] = v
        mhat = m / (1 - opt_state.beta1**t)
        vhat = v / (1 - opt_state.beta2**t)
        params[name] = params[name] - lr * mhat / (np.sqrt(vhat) + opt_state.eps)
    return loss


def predict_multiclass(params, config, graph, x_builder, z, categories):
    """One-versus-rest multiclass prediction.

    `x_builder(category)` must return the node features with that category
    mapped to foreground. Returns (probs (V, k+1), labels (V,)); class 0 is
    background, classes 1..k follow `categories` order. Ties in the argmax
    resolve to the lowest class id.
    """
    categories = list(categories)
    if not categories:
        raise EmptyLabelSet("no categories to predict")
    k = len(categories)
    per_cat = np.stack(
        [forward(params, config, graph, x_builder(c), z, mode="eval")
         for c in categories], axis=1)  # (V, k)
    bg = (1.0 - per_cat).mean(axis=1, keepdims=True)
    raw = np.concatenate([bg, per_cat], axis=1)
    probs = raw / raw.sum(axis=1, keepdims=True)
    return probs, probs.argmax(axis=1)


# --- checkpoints -----------------------------------------------------------------

def save_checkpoint(path, params):
    """Write magic, JSON config block, then named float32 tensors."""
    cfg = params.config
    blob = json.dumps({
        "layers": cfg.layers, "hidden": cfg.hidden, "node_dim": cfg.node_dim,
        "edge_dim": cfg.edge_dim, "dropout_p": cfg.dropout_p,
        "epsilon_gate": cfg.epsilon_gate, "epsilon_bn": cfg.epsilon_bn,
        "bn_momentum": cfg.bn_momentum,
    }, sort_keys=True).encode()
    names = [n for n, _, _ in parameter_spec(cfg)]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            data = np.ascontiguousarray(params[name], dtype="<f4")
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path, dtype=np.float64):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")

        def read_exact(n):
            b = fh.read(n)
            if len(b) != n:
                raise TruncatedFile(f"{path}: truncated")
            return b

        (blob_len,) = struct.unpack("<I", read_exact(4))
        cfg = GnnConfig(**json.loads(read_exact(blob_len).decode()))
        (count,) = struct.unpack("<I", read_exact(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", read_exact(4))
            name = read_exact(name_len).decode()
            (ndim,) = struct.unpack("<I", read_exact(4))
            shape = struct.unpack(f"<{ndim}I", read_exact(4 * ndim))
            n_values = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(read_exact(4 * n_values), dtype="<f4")
            tensors[name] = data.reshape(shape).astype(dtype)
    return GnnParams(cfg, tensors)
