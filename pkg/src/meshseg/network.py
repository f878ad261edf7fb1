"""Encode-message-decode graph network predicting per-sample thickness values.

Node features summarize a sample and its full-resolution neighborhood; the
messenger exchanges MLP messages along sample-pair edges for K shared-weight
rounds, each incoming message scaled by the sender's density rho and the sum
normalized by the total incoming rho (a weighted mean, so update magnitude
does not grow with mesh resolution); the decoder emits one value per node,
squashed to [0, 1]. Gradients are exact reverse-mode, checked against finite
differences in the tests.
"""

from __future__ import annotations

import io
import logging
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh, face_geometry
from .sampling import SampleSet, sample_mesh
from .shdf import ScalarField

_LOGGER = logging.getLogger(__name__)

NODE_FEATURE_DIM = 8
EDGE_FEATURE_DIM = 4
MODEL_MAGIC = b"EMDM"
MODEL_VERSION = 1

_ACTIVATIONS = ("tanh", "relu", "elu")


class GraphError(Exception):
    pass


class NumericError(Exception):
    """A non-finite value appeared during forward/backward."""


class TrainingError(Exception):
    def __init__(self, message, checkpoint=None, history=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


class InferenceError(Exception):
    pass


# ---------------------------------------------------------------------------
# Graph input


@dataclass
class GraphInput:
    """Featurized sample graph: translation-centered, bbox-scale-normalized."""

    node_features: np.ndarray   # (n, NODE_FEATURE_DIM)
    edge_src: np.ndarray        # (e,) sender node ids
    edge_dst: np.ndarray        # (e,) receiver node ids
    edge_features: np.ndarray   # (e, EDGE_FEATURE_DIM)
    rho: np.ndarray             # (n,) sender densities used as message scales

    @property
    def n_nodes(self):
        return len(self.node_features)

    @property
    def n_edges(self):
        return len(self.edge_src)

    def to_json_dict(self):
        return {
            "version": 1,
            "node_features": self.node_features.tolist(),
            "edge_src": self.edge_src.tolist(),
            "edge_dst": self.edge_dst.tolist(),
            "edge_features": self.edge_features.tolist(),
            "rho": self.rho.tolist(),
        }

    @classmethod
    def from_json_dict(cls, doc):
        if doc.get("version") != 1:
            raise GraphError(f"unsupported graph version {doc.get('version')!r}")
        return cls(
            node_features=np.array(doc["node_features"], dtype=np.float64),
            edge_src=np.array(doc["edge_src"], dtype=np.int64),
            edge_dst=np.array(doc["edge_dst"], dtype=np.int64),
            edge_features=np.array(doc["edge_features"], dtype=np.float64),
            rho=np.array(doc["rho"], dtype=np.float64),
        )


def scale_reference(mesh: Mesh) -> float:
    """Rotation-invariant length scale: bounding-sphere-style diameter
    around the vertex centroid. Plays the role of the bounding-box diagonal
    but is stable under rigid motion.
    """
    center = mesh.vertices.mean(axis=0)
    return 2.0 * float(np.linalg.norm(mesh.vertices - center, axis=1).max())


def build_graph_input(samples: SampleSet, mesh: Mesh) -> GraphInput:
    """Node/edge features from a sampled mesh.

    Every feature is invariant to rigid motion and, after division by the
    mesh scale reference, to uniform scale: positional content enters as the
    radial distance from the sample centroid and as projections onto
    host-face normals rather than raw coordinates, so a moved or rotated
    mesh yields the same graph.

    Node features: radial distance from the sample centroid (1), rho (1),
    neighbor count over the mean count (1), mean and max neighbor distance
    (2), mean neighbor offset projected on the host-face normal (1), its
    tangential magnitude (1), and the host normal's alignment with the
    radial direction (1). Lengths are over the scale reference.
    Edges connect samples within 2r, two directed entries each; edge
    features are the offset length, its projections on the sender and
    receiver host normals, and the normals' mutual alignment.
    """
    if samples.n_samples < 2:
        raise GraphError(f"need at least 2 samples, got {samples.n_samples}")
    if samples.neighbors is None or samples.rho is None:
        raise GraphError("samples must carry neighborhoods and densities")

    diag = scale_reference(mesh)
    pos = samples.positions
    center = pos.mean(axis=0)
    rel = pos - center
    radial_dist = np.linalg.norm(rel, axis=1)
    radial_dir = rel / np.maximum(radial_dist, 1e-12 * diag)[:, None]

    _, face_normals, _ = face_geometry(mesh)
    host_normals = face_normals[samples.host_faces]
    counts = np.array([len(ns) for ns in samples.neighbors], dtype=np.float64)
    mean_d = np.empty(samples.n_samples)
    max_d = np.empty(samples.n_samples)
    proj_n = np.empty(samples.n_samples)
    proj_t = np.empty(samples.n_samples)
    for i, ns in enumerate(samples.neighbors):
        offsets = mesh.vertices[np.asarray(ns, dtype=np.int64)] - pos[i]
        dists = np.linalg.norm(offsets, axis=1)
        mean_d[i] = dists.mean()
        max_d[i] = dists.max()
        mean_offset = offsets.mean(axis=0)
        n = host_normals[i]
        proj_n[i] = float(mean_offset @ n)
        proj_t[i] = float(np.linalg.norm(mean_offset - proj_n[i] * n))

    feats = np.column_stack([
        radial_dist / diag,
        samples.rho,
        counts / counts.mean(),
        mean_d / diag,
        max_d / diag,
        proj_n / diag,
        proj_t / diag,
        np.einsum("ij,ij->i", host_normals, radial_dir),
    ])

    tree = cKDTree(pos)
    pairs = tree.query_pairs(2.0 * samples.radius, output_type="ndarray")
    if len(pairs):
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    else:
        src = np.zeros(0, dtype=np.int64)
        dst = np.zeros(0, dtype=np.int64)
    offset = pos[dst] - pos[src]
    length = np.linalg.norm(offset, axis=1)
    if len(src):
        efeats = np.column_stack([
            length / diag,
            np.einsum("ij,ij->i", offset, host_normals[src]) / diag,
            np.einsum("ij,ij->i", offset, host_normals[dst]) / diag,
            np.einsum("ij,ij->i", host_normals[src], host_normals[dst]),
        ])
    else:
        efeats = np.zeros((0, EDGE_FEATURE_DIM))

    gi = GraphInput(feats, src.astype(np.int64), dst.astype(np.int64),
                    efeats, np.asarray(samples.rho, dtype=np.float64))
    if not np.isfinite(gi.node_features).all() or not np.isfinite(gi.edge_features).all():
        raise GraphError("non-finite graph features")
    return gi


# ---------------------------------------------------------------------------
# Model


@dataclass
class EmdModel:
    """Weights and hyperparameters of the encode-message-decode network.

    Weight keys (in serialization order): enc_W0/b0/W1/b1/W2/b2 (two hidden
    layers then a linear 128-out), msg_W0..W2/b0..b2 (same template over
    [h_src, h_dst, edge] concat), dec_W0/b0/W1/b1 (one hidden layer then a
    linear scalar out). The decoder output passes through a sigmoid squash.
    """

    weights: dict
    rounds: int = 4
    activation: str = "tanh"
    width: int = 128
    input_dim: int = NODE_FEATURE_DIM
    edge_dim: int = EDGE_FEATURE_DIM
    version: int = MODEL_VERSION

    WEIGHT_KEYS = (
        "enc_W0", "enc_b0", "enc_W1", "enc_b1", "enc_W2", "enc_b2",
        "msg_W0", "msg_b0", "msg_W1", "msg_b1", "msg_W2", "msg_b2",
        "dec_W0", "dec_b0", "dec_W1", "dec_b1",
    )

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        self.validate_shapes()

    def validate_shapes(self):
        w, d, fin, fe = self.width, self.weights, self.input_dim, self.edge_dim
        expect = {
            "enc_W0": (fin, w), "enc_b0": (w,),
            "enc_W1": (w, w), "enc_b1": (w,),
            "enc_W2": (w, w), "enc_b2": (w,),
            "msg_W0": (2 * w + fe, w), "msg_b0": (w,),
            "msg_W1": (w, w), "msg_b1": (w,),
            "msg_W2": (w, w), "msg_b2": (w,),
            "dec_W0": (w, w), "dec_b0": (w,),
            "dec_W1": (w, 1), "dec_b1": (1,),
        }
        for key in self.WEIGHT_KEYS:
            if key not in d:
                raise ValueError(f"missing weight {key}")
            if d[key].shape != expect[key]:
                raise ValueError(
                    f"{key}: expected shape {expect[key]}, got {d[key].shape}"
                )
            if not np.isfinite(d[key]).all():
                raise NumericError(f"non-finite values in {key}")

    def copy(self):
        return EmdModel({k: v.copy() for k, v in self.weights.items()},
                        self.rounds, self.activation, self.width,
                        self.input_dim, self.edge_dim, self.version)


def new_model(input_dim: int = NODE_FEATURE_DIM, edge_dim: int = EDGE_FEATURE_DIM,
              rounds: int = 4, width: int = 128, activation: str = "tanh",
              seed: int = 0) -> EmdModel:
    """Glorot-initialized model. Weights are float64 on an exact float32
    grid so that serialization (32-bit) round-trips losslessly until trained.
    """
    rng = np.random.default_rng(seed)

    def glorot(nin, nout):
        lim = np.sqrt(6.0 / (nin + nout))
        w = rng.uniform(-lim, lim, size=(nin, nout))
        return w.astype(np.float32).astype(np.float64)

    w = width
    weights = {
        "enc_W0": glorot(input_dim, w), "enc_b0": np.zeros(w),
        "enc_W1": glorot(w, w), "enc_b1": np.zeros(w),
        "enc_W2": glorot(w, w), "enc_b2": np.zeros(w),
        "msg_W0": glorot(2 * w + edge_dim, w), "msg_b0": np.zeros(w),
        "msg_W1": glorot(w, w), "msg_b1": np.zeros(w),
        "msg_W2": glorot(w, w), "msg_b2": np.zeros(w),
        "dec_W0": glorot(w, w), "dec_b0": np.zeros(w),
        "dec_W1": glorot(w, 1), "dec_b1": np.zeros(1),
    }
    return EmdModel(weights, rounds, activation, w, input_dim, edge_dim)


def zero_model(like: EmdModel) -> EmdModel:
    return EmdModel({k: np.zeros_like(v) for k, v in like.weights.items()},
                    like.rounds, like.activation, like.width,
                    like.input_dim, like.edge_dim, like.version)


def _act(x, kind):
    if kind == "tanh":
        return np.tanh(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    return np.where(x > 0.0, x, np.expm1(x))  # elu


def _act_grad(x, y, kind):
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "relu":
        return (x > 0.0).astype(x.dtype)
    return np.where(x > 0.0, 1.0, y + 1.0)  # elu'

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class _EdgeIndex:
    """Precomputed receiver-sorted edge order for deterministic segment sums."""

    def __init__(self, edge_dst, n_nodes):
        self.order = np.argsort(edge_dst, kind="stable")
        sorted_dst = edge_dst[self.order]
        self.uniq, self.starts = np.unique(sorted_dst, return_index=True)
        self.n_nodes = n_nodes

    def segment_sum(self, per_edge):
        """Sum rows of ``per_edge`` grouped by receiver node."""
        out_shape = (self.n_nodes,) + per_edge.shape[1:]
        out = np.zeros(out_shape, dtype=per_edge.dtype)
        if len(self.order) == 0:
            return out
        sums = np.add.reduceat(per_edge[self.order], self.starts, axis=0)
        out[self.uniq] = sums
        return out


def _mlp3(x, w, prefix, act):
    z0 = x @ w[prefix + "_W0"] + w[prefix + "_b0"]
    a0 = _act(z0, act)
    z1 = a0 @ w[prefix + "_W1"] + w[prefix + "_b1"]
    a1 = _act(z1, act)
    out = a1 @ w[prefix + "_W2"] + w[prefix + "_b2"]
    return out, (x, z0, a0, z1, a1)


def _mlp3_backward(grad_out, cache, w, prefix, act, grads):
    x, z0, a0, z1, a1 = cache
    grads[prefix + "_W2"] += a1.T @ grad_out
    grads[prefix + "_b2"] += grad_out.sum(axis=0)
    g1 = (grad_out @ w[prefix + "_W2"].T) * _act_grad(z1, a1, act)
    grads[prefix + "_W1"] += a0.T @ g1
    grads[prefix + "_b1"] += g1.sum(axis=0)
    g0 = (g1 @ w[prefix + "_W1"].T) * _act_grad(z0, a0, act)
    grads[prefix + "_W0"] += x.T @ g0
    grads[prefix + "_b0"] += g0.sum(axis=0)
    return g0 @ w[prefix + "_W0"].T


def forward(model: EmdModel, graph: GraphInput, _cache_out=None):
    """Predicted values in [0, 1], one per node."""
    w = model.weights
    act = model.activation
    src, dst = graph.edge_src, graph.edge_dst
    n = graph.n_nodes

    h, enc_cache = _mlp3(graph.node_features, w, "enc", act)

    index = _EdgeIndex(dst, n)
    edge_w = graph.rho[src]                       # sender densities
    sum_w = index.segment_sum(edge_w)
    inv_sum_w = np.where(sum_w > 0.0, 1.0 / np.where(sum_w > 0, sum_w, 1.0), 0.0)

    round_caches = []
    for _ in range(model.rounds):
        concat = np.concatenate([h[src], h[dst], graph.edge_features], axis=1)
        msg, msg_cache = _mlp3(concat, w, "msg", act)
        weighted = msg * edge_w[:, None]
        agg = index.segment_sum(weighted) * inv_sum_w[:, None]
        round_caches.append((h, msg_cache))
        h = h + agg                                # residual update

    z_dec0 = h @ w["dec_W0"] + w["dec_b0"]
    a_dec0 = _act(z_dec0, act)
    z_out = (a_dec0 @ w["dec_W1"] + w["dec_b1"]).ravel()
    pred = _sigmoid(z_out)

    if not np.isfinite(pred).all():
        stage = "decoder" if np.isfinite(h).all() else "messenger"
        raise NumericError(f"non-finite prediction after {stage}")
    if _cache_out is not None:
        _cache_out.update(
            enc_cache=enc_cache, round_caches=round_caches, h_final=h,
            z_dec0=z_dec0, a_dec0=a_dec0, z_out=z_out, pred=pred,
            index=index, edge_w=edge_w, inv_sum_w=inv_sum_w,
        )
    return pred


def loss(predicted, reference, alpha: float = 1.0) -> float:
    """Mean alpha-weighted absolute deviation between predictions and
    reference values (the per-element L2 norm of a scalar residual).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if predicted.shape != reference.shape:
        raise ValueError(
            f"length mismatch: {predicted.shape} vs {reference.shape}"
        )
    if predicted.size == 0:
        raise ValueError("empty loss input")
    return float(np.mean(alpha * np.abs(reference - predicted)))


def backward(model: EmdModel, graph: GraphInput, reference, alpha: float = 1.0):
    """Loss value and exact gradients for every weight.

    The absolute-value residual uses the subgradient 0 at exactly zero.
    """
    cache = {}
    pred = forward(model, graph, _cache_out=cache)
    reference = np.asarray(reference, dtype=np.float64)
    if reference.shape != pred.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {reference.shape}")
    n = len(pred)
    value = float(np.mean(alpha * np.abs(reference - pred)))

    w = model.weights
    act = model.activation
    grads = {k: np.zeros_like(v) for k, v in w.items()}

    # d mean(alpha |ref - pred|) / d pred, then through the sigmoid
    g_pred = (alpha / n) * -np.sign(reference - pred)
    g_zout = g_pred * cache["pred"] * (1.0 - cache["pred"])

    a_dec0 = cache["a_dec0"]
    grads["dec_W1"] += a_dec0.T @ g_zout[:, None]
    grads["dec_b1"] += g_zout.sum(keepdims=True)
    g_adec0 = g_zout[:, None] @ w["dec_W1"].T
    g_zdec0 = g_adec0 * _act_grad(cache["z_dec0"], a_dec0, act)
    grads["dec_W0"] += cache["h_final"].T @ g_zdec0
    grads["dec_b0"] += g_zdec0.sum(axis=0)
    g_h = g_zdec0 @ w["dec_W0"].T

    src, dst = graph.edge_src, graph.edge_dst
    edge_w = cache["edge_w"]
    inv_sum_w = cache["inv_sum_w"]
    width = model.width
    for h_in, msg_cache in reversed(cache["round_caches"]):
        # h_out = h_in + segsum(rho * msg) / sum_rho
        g_agg = g_h                                     # residual: g_h also flows to h_in
        g_weighted = g_agg[dst] * inv_sum_w[dst][:, None]
        g_msg = g_weighted * edge_w[:, None]
        g_concat = _mlp3_backward(g_msg, msg_cache, w, "msg", act, grads)
        g_h_in = g_h.copy()
        # scatter concat gradients back to sender/receiver node states
        g_h_in += _segment_sum_by(g_concat[:, :width], src, graph.n_nodes)
        g_h_in += _segment_sum_by(g_concat[:, width:2 * width], dst, graph.n_nodes)
        g_h = g_h_in

    _mlp3_backward(g_h, cache["enc_cache"], w, "enc", act, grads)
    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {key}")
    return value, grads


def _segment_sum_by(per_edge, ids, n_nodes):
    out = np.zeros((n_nodes,) + per_edge.shape[1:], dtype=per_edge.dtype)
    if len(ids) == 0:
        return out
    order = np.argsort(ids, kind="stable")
    uniq, starts = np.unique(ids[order], return_index=True)
    out[uniq] = np.add.reduceat(per_edge[order], starts, axis=0)
    return out


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainSchedule:
    """Adam schedule: constant lr until decay_start_step, then exponential
    interpolation from lr_initial down to lr_final at total_steps.
    """

    total_steps: int = 50_000
    decay_start_step: int = 30_000
    lr_initial: float = 1e-3
    lr_final: float = 1e-5
    batch_size: int = 1
    alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.decay_start_step < self.total_steps):
            raise ValueError("need 0 <= decay_start_step < total_steps")
        if not (0 < self.lr_final < self.lr_initial):
            raise ValueError("need 0 < lr_final < lr_initial")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def learning_rate(schedule: TrainSchedule, step: int) -> float:
    if step <= schedule.decay_start_step:
        return schedule.lr_initial
    frac = (step - schedule.decay_start_step) / (
        schedule.total_steps - schedule.decay_start_step
    )
    ratio = schedule.lr_final / schedule.lr_initial
    return float(schedule.lr_initial * ratio ** min(frac, 1.0))


def train(model: EmdModel, dataset, schedule: TrainSchedule,
          history_interval: int = 100, checkpoint_interval: int = 0,
          checkpoint_dir=None, dtype=np.float64):
    """Adam over (GraphInput, reference) pairs. Deterministic per seed.

    Returns (trained model, history) where history rows are
    (step, learning_rate, loss). Aborts with TrainingError carrying the last
    good checkpoint if the loss turns non-finite.
    """
    if not dataset:
        raise TrainingError("dataset is empty")
    rng = np.random.default_rng(schedule.seed)
    weights = {k: v.astype(dtype) for k, v in model.weights.items()}
    graphs = []
    for gi, ref in dataset:
        g = GraphInput(
            gi.node_features.astype(dtype), gi.edge_src, gi.edge_dst,
            gi.edge_features.astype(dtype), gi.rho.astype(dtype),
        )
        graphs.append((g, np.asarray(ref, dtype=dtype)))

    m1 = {k: np.zeros_like(v) for k, v in weights.items()}
    m2 = {k: np.zeros_like(v) for k, v in weights.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    work = EmdModel({k: v for k, v in weights.items()}, model.rounds,
                    model.activation, model.width, model.input_dim,
                    model.edge_dim, model.version)

    history = []
    last_good = None
    for step in range(schedule.total_steps):
        lr = learning_rate(schedule, step)
        idx = rng.integers(0, len(graphs), size=schedule.batch_size)
        total = 0.0
        grads = None
        for j in idx:
            g, ref = graphs[j]
            value, gj = backward(work, g, ref, schedule.alpha)
            total += value
            if grads is None:
                grads = gj
            else:
                for k in grads:
                    grads[k] += gj[k]
        batch_loss = total / schedule.batch_size
        if not np.isfinite(batch_loss):
            raise TrainingError(
                f"non-finite loss at step {step}", checkpoint=last_good,
                history=history,
            )
        t = step + 1
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for k in weights:
            g = grads[k] / schedule.batch_size
            m1[k] = beta1 * m1[k] + (1.0 - beta1) * g
            m2[k] = beta2 * m2[k] + (1.0 - beta2) * (g * g)
            weights[k] -= lr * (m1[k] / bc1) / (np.sqrt(m2[k] / bc2) + eps)

        if step % history_interval == 0 or step == schedule.total_steps - 1:
            history.append((step, lr, batch_loss))
        if checkpoint_interval and step % checkpoint_interval == 0:
            last_good = _finalize(work, weights)
            if checkpoint_dir is not None:
                from pathlib import Path
                path = Path(checkpoint_dir) / f"checkpoint_{step:08d}.emd"
                path.write_bytes(save_model(last_good))

    return _finalize(work, weights), history


def _finalize(template, weights):
    return EmdModel({k: v.astype(np.float64) for k, v in weights.items()},
                    template.rounds, template.activation, template.width,
                    template.input_dim, template.edge_dim, template.version)


# ---------------------------------------------------------------------------
# Inference


def infer_field(model: EmdModel, mesh: Mesh, radius: float = None,
                seed: int = 0) -> ScalarField:
    """Per-face predicted field: sample, featurize, forward, then
    inverse-distance interpolation from the 3 nearest samples per centroid.
    """
    samples = sample_mesh(mesh, radius, seed)
    if samples.n_samples < 2:
        raise InferenceError(
            f"only {samples.n_samples} sample(s) at radius {radius}; "
            "use a smaller sampling radius"
        )
    graph = build_graph_input(samples, mesh)
    pred = forward(model, graph)
    centroids, _, _ = face_geometry(mesh)
    values = interpolate_to_faces(samples.positions, pred, centroids)
    return ScalarField("per_face", values, normalized=True, provenance="predicted")


def interpolate_to_faces(sample_positions, sample_values, centroids, k: int = 3):
    """Inverse-distance weighting from the k nearest samples per point."""
    k = min(k, len(sample_positions))
    tree = cKDTree(sample_positions)
    dist, idx = tree.query(centroids, k=k)
    dist = np.atleast_2d(dist.T).T.reshape(len(centroids), k)
    idx = np.atleast_2d(idx.T).T.reshape(len(centroids), k)
    w = 1.0 / np.maximum(dist, 1e-12)
    vals = np.asarray(sample_values)[idx]
    return (vals * w).sum(axis=1) / w.sum(axis=1)


# ---------------------------------------------------------------------------
# Serialization

_ACT_CODES = {name: i for i, name in enumerate(_ACTIVATIONS)}


def save_model(model: EmdModel) -> bytes:
    """Versioned binary: header then float32 little-endian weight arrays."""
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<IIBII", MODEL_VERSION, model.rounds,
                          _ACT_CODES[model.activation], model.width,
                          len(model.WEIGHT_KEYS)))
    buf.write(struct.pack("<II", model.input_dim, model.edge_dim))
    for key in model.WEIGHT_KEYS:
        arr = model.weights[key]
        name = key.encode("ascii")
        buf.write(struct.pack("<H", len(name)))
        buf.write(name)
        buf.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(arr.astype("<f4").tobytes())
    return buf.getvalue()


def load_model(data: bytes) -> EmdModel:
    buf = io.BytesIO(data)
    magic = buf.read(4)
    if magic != MODEL_MAGIC:
        raise ValueError(f"not a model file (magic {magic!r})")
    version, rounds, act_code, width, n_arrays = struct.unpack(
        "<IIBII", buf.read(17)
    )
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version}")
    input_dim, edge_dim = struct.unpack("<II", buf.read(8))
    activation = _ACTIVATIONS[act_code]
    weights = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<H", buf.read(2))
        name = buf.read(name_len).decode("ascii")
        (ndim,) = struct.unpack("<B", buf.read(1))
        shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf.read(4 * count), dtype="<f4").reshape(shape)
        weights[name] = arr.astype(np.float64)
    return EmdModel(weights, rounds, activation, width, input_dim, edge_dim)
