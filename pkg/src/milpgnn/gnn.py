"""Message-passing GNN on MILP graphs, written directly in numpy.

Every learnable map is an MLP ``in -> d -> d -> out`` with ReLU on the two
hidden layers. Two-argument maps take the concatenation of their inputs.

Graphs of equal shape are stacked into dense tensors (``E`` is ``(B, m, n)``),
which is the same arithmetic as looping over instances. Weight gradients are
formed per instance and then summed over the batch axis in instance order, so
a batch holding one instance twice yields exactly twice its gradient.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .instance import MilpGraph

CHECKPOINT_VERSION = 1
# Initialization schemes, all uniform(-sqrt(gain/fan_in), +sqrt(gain/fan_in)):
#   "plain": gain 1 everywhere. The signal shrinks ~0.4x per ReLU layer and is
#            numerically gone after the dozen layers between input and readout.
#   "he":    gain 6 (the He bound for ReLU layers); the readout's last layer
#            starts small (gain 0.01, zero bias) so initial outputs sit near zero.
INIT_SCHEMES = {"plain": (1.0, None), "he": (6.0, 0.01)}
V_WIDTH = 4
W_WIDTH = 6


class Readout(str, enum.Enum):
    GRAPH = "graph"
    NODE = "node"


class Task(str, enum.Enum):
    FEAS = "feas"
    OBJ = "obj"
    SOLU = "solu"


def encode_features(g: MilpGraph) -> Tuple[np.ndarray, np.ndarray]:
    """Numeric vertex features: ``(m, 4)`` and ``(n, 6)``, one more column each with random features."""
    hv = np.zeros((g.m, V_WIDTH))
    for i, f in enumerate(g.v_features):
        hv[i, 0] = f.b
        hv[i, 1 + int(f.sense) + 1] = 1.0  # one-hot in order LE, EQ, GE
    hw = np.zeros((g.n, W_WIDTH))
    for j, f in enumerate(g.w_features):
        hw[j, 0] = f.c
        if f.lower is not None:
            hw[j, 1], hw[j, 2] = f.lower, 1.0
        if f.upper is not None:
            hw[j, 3], hw[j, 4] = f.upper, 1.0
        hw[j, 5] = f.tau
    if g.random_features is not None:
        rv, rw = g.random_features
        hv = np.hstack([hv, np.asarray(rv)[:, None]])
        hw = np.hstack([hw, np.asarray(rw)[:, None]])
    return hv, hw


@dataclass
class GraphBatch:
    """Equal-shape graphs stacked along a leading batch axis."""

    hv: np.ndarray  # (B, m, dv)
    hw: np.ndarray  # (B, n, dw)
    e: np.ndarray  # (B, m, n)

    @classmethod
    def from_graphs(cls, graphs: Sequence[MilpGraph]) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty batch")
        shapes = {(g.m, g.n) for g in graphs}
        if len(shapes) != 1:
            raise ValueError(f"batch mixes graph shapes {sorted(shapes)}")
        feats = [encode_features(g) for g in graphs]
        return cls(np.stack([f[0] for f in feats]), np.stack([f[1] for f in feats]),
                   np.stack([g.dense() for g in graphs]))

    def __len__(self):
        return self.e.shape[0]

    def take(self, idx) -> "GraphBatch":
        return GraphBatch(self.hv[idx], self.hw[idx], self.e[idx])


# -- MLPs ---------------------------------------------------------------------

def _init_mlp(rng, din, d, dout, gain=1.0, out_gain=None) -> List[np.ndarray]:
    """Uniform(+-sqrt(gain / fan_in)) weights and biases; ``out_gain`` rescales the last layer."""
    out = []
    for k, (fan_in, fan_out) in enumerate(((din, d), (d, d), (d, dout))):
        bound = np.sqrt(gain / fan_in)
        w = rng.uniform(-bound, bound, (fan_in, fan_out))
        b = rng.uniform(-bound, bound, fan_out)
        if k == 2 and out_gain is not None:
            w *= np.sqrt(out_gain / gain)
            b[:] = 0.0
        out += [w, b]
    return out


def _dense(x, w):
    # stacked products keep every instance's arithmetic independent of the batch:
    # a single 2-D product over all rows lets BLAS change kernels with the row count
    return np.matmul(x, w)


def _mlp_forward(p, x):
    h1 = _dense(x, p[0]) + p[1]
    a1 = np.maximum(h1, 0.0)
    h2 = _dense(a1, p[2]) + p[3]
    a2 = np.maximum(h2, 0.0)
    return _dense(a2, p[4]) + p[5], (x, h1, a1, h2, a2)


def _weight_grad(x, g):
    # per-instance products, then an ordered sum over the batch axis
    return np.matmul(np.swapaxes(x, 1, 2), g).sum(axis=0)


def _mlp_backward(p, cache, gy, need_input=True):
    x, h1, a1, h2, a2 = cache
    grads = [None] * 6
    grads[4] = _weight_grad(a2, gy)
    grads[5] = gy.sum(axis=1).sum(axis=0)
    g = _dense(gy, p[4].T) * (h2 > 0)
    grads[2] = _weight_grad(a1, g)
    grads[3] = g.sum(axis=1).sum(axis=0)
    g = _dense(g, p[2].T) * (h1 > 0)
    grads[0] = _weight_grad(x, g)
    grads[1] = g.sum(axis=1).sum(axis=0)
    gx = _dense(g, p[0].T) if need_input else None
    return gx, grads


# -- model ----------------------------------------------------------------------

class GnnModel:
    """Parameters of an L-layer GNN with a graph-level or node-level readout."""

    def __init__(self, d: int, L: int = 2, readout: Readout = Readout.GRAPH,
                 uses_random_feature: bool = False, seed: int = 0, init: str = "he"):
        if d < 1 or L < 0:
            raise ValueError("need d >= 1 and L >= 0")
        self.d, self.L = int(d), int(L)
        self.readout = Readout(readout)
        self.uses_random_feature = bool(uses_random_feature)
        self.seed = int(seed)
        if init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {init!r}")
        self.init = init
        gain, out_gain = INIT_SCHEMES[init]
        self.target_shift = 0.0
        self.target_scale = 1.0
        rng = np.random.default_rng(seed)
        extra = 1 if uses_random_feature else 0

        def mlp(din, dout):
            return _init_mlp(rng, din, d, dout, gain)

        self.mlps: Dict[str, List[np.ndarray]] = {"p0": mlp(V_WIDTH + extra, d), "q0": mlp(W_WIDTH + extra, d)}
        for l in range(1, L + 1):
            self.mlps[f"f{l}"] = mlp(d, d)
            self.mlps[f"g{l}"] = mlp(d, d)
            self.mlps[f"p{l}"] = mlp(2 * d, d)
            self.mlps[f"q{l}"] = mlp(2 * d, d)
        if self.readout is Readout.GRAPH:
            self.mlps["rG"] = _init_mlp(rng, 2 * d, d, 1, gain, out_gain)
        else:
            self.mlps["rW"] = _init_mlp(rng, 3 * d, d, 1, gain, out_gain)

    @property
    def input_widths(self) -> Tuple[int, int]:
        extra = 1 if self.uses_random_feature else 0
        return V_WIDTH + extra, W_WIDTH + extra

    @property
    def n_params(self) -> int:
        return sum(a.size for p in self.mlps.values() for a in p)

    def named_parameters(self):
        for name, p in self.mlps.items():
            for k, a in enumerate(p):
                yield f"{name}.{'Wb'[k % 2]}{k // 2}", a

    def zeros_like(self) -> Dict[str, List[np.ndarray]]:
        return {name: [np.zeros_like(a) for a in p] for name, p in self.mlps.items()}

    def meta(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION, "d": self.d, "L": self.L, "readout": self.readout.value,
            "uses_random_feature": self.uses_random_feature, "seed": self.seed,
            "init": self.init, "target_shift": self.target_shift, "target_scale": self.target_scale,
        }

    def save(self, path) -> None:
        """Write an ``.npz`` holding every parameter tensor plus JSON metadata."""
        arrays = dict(self.named_parameters())
        arrays["__meta__"] = np.frombuffer(json.dumps(self.meta()).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "GnnModel":
        with np.load(path) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            model = cls(meta["d"], meta["L"], meta["readout"], meta["uses_random_feature"], meta["seed"],
                        meta["init"])
            for name, a in model.named_parameters():
                stored = z[name]
                if stored.shape != a.shape:
                    raise ValueError(f"parameter {name} has shape {stored.shape}, expected {a.shape}")
                a[...] = stored
        model.target_shift, model.target_scale = meta["target_shift"], meta["target_scale"]
        return model


def _check_batch(model: GnnModel, batch: GraphBatch):
    dv, dw = model.input_widths
    if batch.hv.shape[2] != dv or batch.hw.shape[2] != dw:
        raise ValueError(
            f"feature widths ({batch.hv.shape[2]}, {batch.hw.shape[2]}) do not match the model ({dv}, {dw})"
        )


def forward(model: GnnModel, batch: GraphBatch):
    """Raw outputs, shape ``(B,)`` for graph readout or ``(B, n)`` for node readout, and a cache."""
    _check_batch(model, batch)
    mlps, d = model.mlps, model.d
    e, et = batch.e, np.swapaxes(batch.e, 1, 2)
    s, c_p0 = _mlp_forward(mlps["p0"], batch.hv)
    t, c_q0 = _mlp_forward(mlps["q0"], batch.hw)
    layers = []
    for l in range(1, model.L + 1):
        ft, c_f = _mlp_forward(mlps[f"f{l}"], t)
        gs, c_g = _mlp_forward(mlps[f"g{l}"], s)
        s_new, c_p = _mlp_forward(mlps[f"p{l}"], np.concatenate([s, e @ ft], axis=2))
        t_new, c_q = _mlp_forward(mlps[f"q{l}"], np.concatenate([t, et @ gs], axis=2))
        layers.append((c_f, c_g, c_p, c_q))
        s, t = s_new, t_new
    s_bar, t_bar = s.sum(axis=1), t.sum(axis=1)
    if model.readout is Readout.GRAPH:
        z = np.concatenate([s_bar, t_bar], axis=1)[:, None, :]
        y, c_r = _mlp_forward(mlps["rG"], z)
        y = y[:, 0, 0]
    else:
        n = t.shape[1]
        z = np.concatenate([np.repeat(s_bar[:, None, :], n, axis=1),
                            np.repeat(t_bar[:, None, :], n, axis=1), t], axis=2)
        y, c_r = _mlp_forward(mlps["rW"], z)
        y = y[:, :, 0]
    cache = (batch, c_p0, c_q0, layers, c_r, s.shape[1], t.shape[1], d)
    return y, cache


def backward(model: GnnModel, cache, grad_y) -> Dict[str, List[np.ndarray]]:
    """Reverse-mode gradients of ``sum(grad_y * y)`` with respect to every parameter."""
    batch, c_p0, c_q0, layers, c_r, m, n, d = cache
    mlps = model.mlps
    grads = {}
    e, et = batch.e, np.swapaxes(batch.e, 1, 2)
    if model.readout is Readout.GRAPH:
        gz, grads["rG"] = _mlp_backward(mlps["rG"], c_r, grad_y[:, None, None])
        gz = gz[:, 0, :]
        gs = np.repeat(gz[:, None, :d], m, axis=1)
        gt = np.repeat(gz[:, None, d:], n, axis=1)
    else:
        gz, grads["rW"] = _mlp_backward(mlps["rW"], c_r, grad_y[:, :, None])
        gs = np.repeat(gz[:, :, :d].sum(axis=1)[:, None, :], m, axis=1)
        gt = np.repeat(gz[:, :, d:2 * d].sum(axis=1)[:, None, :], n, axis=1) + gz[:, :, 2 * d:]
    for l in range(model.L, 0, -1):
        c_f, c_g, c_p, c_q = layers[l - 1]
        gcat_s, grads[f"p{l}"] = _mlp_backward(mlps[f"p{l}"], c_p, gs)
        gcat_t, grads[f"q{l}"] = _mlp_backward(mlps[f"q{l}"], c_q, gt)
        g_ft = et @ gcat_s[:, :, d:]
        g_gs = e @ gcat_t[:, :, d:]
        g_t_from_f, grads[f"f{l}"] = _mlp_backward(mlps[f"f{l}"], c_f, g_ft)
        g_s_from_g, grads[f"g{l}"] = _mlp_backward(mlps[f"g{l}"], c_g, g_gs)
        gs = gcat_s[:, :, :d] + g_s_from_g
        gt = gcat_t[:, :, :d] + g_t_from_f
    _, grads["p0"] = _mlp_backward(mlps["p0"], c_p0, gs, need_input=False)
    _, grads["q0"] = _mlp_backward(mlps["q0"], c_q0, gt, need_input=False)
    return {name: grads[name] for name in mlps}


def loss_and_grad(model: GnnModel, batch: GraphBatch, targets, reduction: str = "mean"):
    """Squared-error loss of raw outputs against ``targets`` and its gradient.

    ``reduction="mean"`` averages over every output entry; ``"sum"`` adds them.
    """
    y, cache = forward(model, batch)
    targets = np.asarray(targets, dtype=float).reshape(y.shape)
    r = y - targets
    if reduction == "mean":
        scale = 1.0 / r.size
    elif reduction == "sum":
        scale = 1.0
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    loss = float(np.sum(r * r)) * scale
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss; step aborted")
    return loss, backward(model, cache, 2.0 * scale * r)


def _single(model: GnnModel, g: MilpGraph, readout: Readout):
    if model.readout is not readout:
        raise ValueError(f"model has a {model.readout.value}-level readout")
    y, _ = forward(model, GraphBatch.from_graphs([g]))
    return y[0]


def forward_graph(model: GnnModel, g: MilpGraph) -> float:
    return float(_single(model, g, Readout.GRAPH))


def forward_nodes(model: GnnModel, g: MilpGraph) -> np.ndarray:
    return _single(model, g, Readout.NODE).copy()


# -- optimizer and training -------------------------------------------------------

class Adam:
    def __init__(self, model: GnnModel, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = model.zeros_like()
        self.v = model.zeros_like()
        self.t = 0

    def step(self, model: GnnModel, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, params in model.mlps.items():
            for p, g, m, v in zip(params, grads[name], self.m[name], self.v[name]):
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    task: Task = Task.FEAS
    stop_at_error: Optional[float] = None  # end training once the epoch's task error is at most this

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("learning_rate and batch_size must be positive, epochs non-negative")


@dataclass
class TrainLog:
    rows: List[Tuple[int, float, float, float]] = field(default_factory=list)

    HEADER = ("epoch", "loss", "task_error", "wall_ms")

    @property
    def final_error(self) -> float:
        return self.rows[-1][2] if self.rows else float("nan")

    def write_csv(self, path) -> None:
        lines = [",".join(self.HEADER)]
        lines += [f"{e},{loss!r},{err!r},{ms:.3f}" for e, loss, err, ms in self.rows]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def task_error(task: Task, pred, target) -> float:
    """Feasibility: misclassification rate of ``pred > 1/2``. Otherwise mean squared error."""
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    if Task(task) is Task.FEAS:
        return float(np.mean((pred > 0.5) != (target > 0.5)))
    return float(np.mean((pred - target) ** 2))


class _Data:
    """Graphs grouped by shape, so any index subset can be cut into dense batches."""

    def __init__(self, graphs: Sequence[MilpGraph]):
        self.size = len(graphs)
        order: Dict[Tuple[int, int], List[int]] = {}
        for k, g in enumerate(graphs):
            order.setdefault((g.m, g.n), []).append(k)
        self.groups = []
        self.where = np.empty((self.size, 2), dtype=int)
        for gi, idx in enumerate(order.values()):
            self.groups.append(GraphBatch.from_graphs([graphs[k] for k in idx]))
            for pos, k in enumerate(idx):
                self.where[k] = gi, pos

    def split(self, idx):
        """Yield ``(positions in idx, batch)`` per shape group, in group order."""
        idx = np.asarray(idx)
        gid = self.where[idx, 0]
        for gi in range(len(self.groups)):
            sel = np.flatnonzero(gid == gi)
            if sel.size:
                yield sel, self.groups[gi].take(self.where[idx[sel], 1])


def predict(model: GnnModel, graphs: Sequence[MilpGraph], data: Optional[_Data] = None):
    """Model outputs in target units (graph readout: ``(N,)``; node readout: list of arrays)."""
    data = data or _Data(graphs)
    out: List = [None] * data.size
    for sel, batch in data.split(np.arange(data.size)):
        y, _ = forward(model, batch)
        y = y * model.target_scale + model.target_shift
        for k, row in zip(sel, y):
            out[k] = row
    if model.readout is Readout.GRAPH:
        return np.array(out, dtype=float)
    return out


def _stack_targets(task: Task, targets):
    if task is Task.SOLU:
        return [np.asarray(t, dtype=float) for t in targets]
    return np.asarray(targets, dtype=float)


def _flat(task, targets):
    return np.concatenate(targets) if task is Task.SOLU else targets


def evaluate(model: GnnModel, task: Task, graphs, targets, data: Optional[_Data] = None) -> float:
    pred = predict(model, graphs, data)
    targets = _stack_targets(Task(task), targets)
    return task_error(task, _flat(task, pred), _flat(task, targets))


def train(model: GnnModel, graphs: Sequence[MilpGraph], targets, cfg: TrainConfig,
          log_path=None, on_epoch=None) -> TrainLog:
    """Adam on squared error. OBJ and SOLU targets are standardized by a train-set shift/scale.

    For SOLU the shift and scale are single scalars over all entries, which keeps
    the node-level map permutation-equivariant. The task error in the log is
    always in the original target units. ``on_epoch(row, model)`` is called after
    every epoch.
    """
    task = cfg.task
    if (task is Task.SOLU) != (model.readout is Readout.NODE):
        raise ValueError("SOLU needs a node-level readout; FEAS and OBJ need a graph-level one")
    if len(graphs) != len(targets) or not graphs:
        raise ValueError("need one target per graph and at least one graph")
    targets = _stack_targets(task, targets)
    flat = _flat(task, targets)
    if task is Task.FEAS:
        model.target_shift, model.target_scale = 0.0, 1.0
    else:
        std = float(np.std(flat))
        model.target_shift, model.target_scale = float(np.mean(flat)), std if std > 0 else 1.0
    if task is Task.SOLU:
        scaled = [(t - model.target_shift) / model.target_scale for t in targets]
    else:
        scaled = (targets - model.target_shift) / model.target_scale

    data = _Data(graphs)
    opt = Adam(model, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    log = TrainLog()
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        perm = rng.permutation(data.size)
        total, count = 0.0, 0
        for lo in range(0, data.size, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            entries = sum(np.size(scaled[k]) for k in idx)
            grads = None
            for sel, batch in data.split(idx):
                tgt = np.stack([scaled[k] for k in idx[sel]])
                loss, g = loss_and_grad(model, batch, tgt, reduction="sum")
                total += loss
                if grads is None:
                    grads = g
                else:
                    for name in grads:
                        for acc, part in zip(grads[name], g[name]):
                            acc += part
            for name in grads:
                for acc in grads[name]:
                    acc /= entries
            count += entries
            opt.step(model, grads)
        err = evaluate(model, task, graphs, targets, data)
        log.rows.append((epoch, total / count, err, (time.perf_counter() - start) * 1e3))
        if on_epoch is not None:
            on_epoch(log.rows[-1], model)
        if cfg.stop_at_error is not None and err <= cfg.stop_at_error:
            break
    if log_path is not None:
        log.write_csv(log_path)
    return log
