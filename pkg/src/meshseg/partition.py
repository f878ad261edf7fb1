"""Two-stage mesh partitioning over a scalar field.

Stage one soft-clusters face values with a 1-D Gaussian mixture; stage two
minimizes a data + boundary energy over the face dual graph by
alpha-expansion, each binary move solved exactly as an s-t min cut. Boundary
costs damp toward zero across concave creases, so cuts prefer them. A final
connectivity pass splits disconnected labels and merges undersized parts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .maxflow import MinCutSolver
from .mesh import Adjacency, Mesh, interior_dihedrals
from .shdf import ScalarField

_LOGGER = logging.getLogger(__name__)

P_FLOOR = 1e-6
VARIANCE_FLOOR = 1e-6
ENERGY_SLACK = 1e-9           # tolerated float noise in monotonicity checks
SMOOTH_BAND_HOPS = 3          # dual-graph hops around boundaries to re-solve
SMOOTH_ANCHOR_FACTOR = 0.5    # anchor cost vs lambda * mean edge weight


class PartitionError(Exception):
    pass


@dataclass
class PartitionParams:
    k: int = 3
    lambda_smooth: float = 1.0
    concavity_bias: float = 2.0
    max_expansion_cycles: int = 10
    min_part_faces: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise PartitionError("k must be >= 1")
        if self.lambda_smooth < 0:
            raise PartitionError("lambda_smooth must be >= 0")
        if self.min_part_faces < 1:
            raise PartitionError("min_part_faces must be >= 1")

    def to_dict(self):
        return {
            "k": self.k,
            "lambda_smooth": self.lambda_smooth,
            "concavity_bias": self.concavity_bias,
            "max_expansion_cycles": self.max_expansion_cycles,
            "min_part_faces": self.min_part_faces,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# Gaussian mixture over field values


@dataclass
class Gmm1D:
    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    log_likelihood_history: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.means)


def _kmeanspp_centers(values, k, rng):
    centers = [values[rng.integers(len(values))]]
    for _ in range(k - 1):
        d2 = np.min([(values - c) ** 2 for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(values[rng.integers(len(values))])
            continue
        centers.append(values[np.searchsorted(np.cumsum(d2 / total),
                                              rng.uniform())])
    return np.array(centers, dtype=np.float64)


def fit_gmm(values, k: int, max_iter: int = 100, tol: float = 1e-6,
            seed: int = 0, fit_subsample: int = 20_000) -> Gmm1D:
    """EM fit of a k-component 1-D Gaussian mixture, k-means++ initialized.

    The log-likelihood is non-decreasing across iterations (asserted) and
    iteration stops when the per-point gain drops below ``tol`` nats;
    components are floored at VARIANCE_FLOOR. If the data has fewer distinct
    values than k, k is reduced with a warning. Inputs larger than
    ``fit_subsample`` are fitted on a deterministic subsample (posteriors
    over the full data come from :func:`soft_assign`).
    """
    if isinstance(values, ScalarField):
        values = values.values
    values = np.asarray(values, dtype=np.float64).ravel()
    if len(values) == 0:
        raise PartitionError("cannot fit a mixture to an empty field")
    rng = np.random.default_rng(seed)
    if fit_subsample and len(values) > fit_subsample:
        values = values[rng.choice(len(values), fit_subsample, replace=False)]
    distinct = len(np.unique(values))
    if k > distinct:
        _LOGGER.warning("k=%d exceeds %d distinct values; reducing", k, distinct)
        k = distinct

    means = np.sort(_kmeanspp_centers(values, k, rng))
    variances = np.full(k, max(values.var(), VARIANCE_FLOOR))
    weights = np.full(k, 1.0 / k)

    history = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        log_resp, ll = _e_step(values, means, variances, weights)
        assert ll >= prev_ll - ENERGY_SLACK * len(values), \
            "EM log-likelihood decreased"
        history.append(ll)
        if (ll - prev_ll) / len(values) < tol and len(history) > 1:
            break
        prev_ll = ll
        resp = np.exp(log_resp)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        means = (resp * values[:, None]).sum(axis=0) / nk
        variances = (resp * (values[:, None] - means) ** 2).sum(axis=0) / nk
        variances = np.maximum(variances, VARIANCE_FLOOR)
        weights = nk / len(values)

    return Gmm1D(means, variances, weights, history)


def _e_step(values, means, variances, weights):
    log_p = (
        -0.5 * np.log(2.0 * np.pi * variances)[None, :]
        - 0.5 * (values[:, None] - means[None, :]) ** 2 / variances[None, :]
        + np.log(weights)[None, :]
    )
    norm = _logsumexp_rows(log_p)
    return log_p - norm[:, None], float(norm.sum())


def _logsumexp_rows(a):
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def soft_assign(gmm: Gmm1D, values) -> np.ndarray:
    """Posterior responsibilities, one row per value, rows sum to 1."""
    if isinstance(values, ScalarField):
        values = values.values
    values = np.asarray(values, dtype=np.float64).ravel()
    log_resp, _ = _e_step(values, gmm.means, gmm.variances, gmm.weights)
    return np.exp(log_resp)


# ---------------------------------------------------------------------------
# Dual graph


@dataclass
class DualGraph:
    n_nodes: int
    edge_faces: np.ndarray     # (e, 2) face pairs
    edge_weights: np.ndarray   # (e,) non-negative

    def face_adjacency(self):
        """Neighbor lists (face -> [(other_face, edge_index)])."""
        adj = [[] for _ in range(self.n_nodes)]
        for ei, (a, b) in enumerate(self.edge_faces):
            adj[a].append((int(b), ei))
            adj[b].append((int(a), ei))
        return adj


def build_dual_graph(mesh: Mesh, adjacency: Adjacency,
                     concavity_bias: float = 2.0) -> DualGraph:
    """One node per face, one edge per interior mesh edge.

    Edge weight = (edge length / mean edge length) * f(theta) with f = 1 for
    convex or flat edges and exp(-concavity_bias * (theta - pi)) beyond pi,
    so concave creases are cheap to cut and flat area is not.
    """
    _, pairs, lengths, angles = interior_dihedrals(mesh, adjacency)
    if len(pairs) == 0:
        return DualGraph(mesh.n_faces, pairs.reshape(0, 2), np.zeros(0))
    mean_len = lengths.mean()
    f = np.where(angles > np.pi,
                 np.exp(-concavity_bias * (angles - np.pi)), 1.0)
    weights = (lengths / mean_len) * f
    if not np.isfinite(weights).all() or (weights < 0).any():
        raise PartitionError("invalid dual edge weights")
    return DualGraph(mesh.n_faces, pairs, weights)


# ---------------------------------------------------------------------------
# Segmentation


@dataclass
class Segmentation:
    """Per-face part labels plus the field cluster each face belongs to.

    ``labels`` are dense part ids (each part connected in the dual graph);
    ``clusters`` is the mixture component per face, which the data term of
    the energy refers to (several parts may share a cluster after splitting).
    """

    labels: np.ndarray
    part_count: int
    params: dict
    energy: float
    clusters: np.ndarray = None
    parent_part: int = None
    parent: "Segmentation" = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.clusters is not None:
            self.clusters = np.asarray(self.clusters, dtype=np.int64)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "labels": self.labels.tolist(),
                "part_count": int(self.part_count),
                "params": self.params,
                "energy": self.energy,
                "clusters": None if self.clusters is None
                else self.clusters.tolist(),
                "parent_part": self.parent_part,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text) -> "Segmentation":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise PartitionError(f"unsupported segmentation version "
                                 f"{doc.get('version')!r}")
        clusters = doc.get("clusters")
        return cls(
            labels=np.array(doc["labels"], dtype=np.int64),
            part_count=doc["part_count"],
            params=doc["params"],
            energy=doc["energy"],
            clusters=None if clusters is None else np.array(clusters,
                                                            dtype=np.int64),
            parent_part=doc.get("parent_part"),
        )

    def part_faces(self, part: int):
        return np.where(self.labels == part)[0]


def segmentation_energy(labels, data_cost, dual: DualGraph,
                        lambda_smooth: float, clusters=None) -> float:
    """E = sum_f data_cost[f, cluster_f] + lambda * sum_{cut edges} w.

    The cut runs over ``labels``; the data term indexes ``clusters`` when
    given (post-split part ids can exceed the data-cost column count).
    """
    labels = np.asarray(labels)
    cl = labels if clusters is None else np.asarray(clusters)
    data = data_cost[np.arange(len(labels)), cl].sum()
    if len(dual.edge_faces):
        la = labels[dual.edge_faces[:, 0]]
        lb = labels[dual.edge_faces[:, 1]]
        smooth = dual.edge_weights[la != lb].sum()
    else:
        smooth = 0.0
    return float(data + lambda_smooth * smooth)


def _expansion_move(labels, a, data_cost, dual, lambda_smooth):
    """One alpha-expansion move: optimal binary relabeling toward label a.

    Variables are faces not already labeled a; sink side means "switch".
    Pairs with differing current labels go through an auxiliary node
    (exact for this metric boundary cost).
    """
    n = len(labels)
    var = labels != a
    var_ids = np.where(var)[0]
    if len(var_ids) == 0:
        return labels
    index = np.full(n, -1, dtype=np.int64)
    index[var_ids] = np.arange(len(var_ids))

    ef = dual.edge_faces
    w = dual.edge_weights * lambda_smooth
    fa, fb = ef[:, 0], ef[:, 1]
    both = var[fa] & var[fb]
    same = both & (labels[fa] == labels[fb])
    diff = both & ~same
    mixed_a = var[fa] & ~var[fb]   # fb fixed at label a
    mixed_b = ~var[fa] & var[fb]

    n_aux = int(diff.sum())
    n_nodes = len(var_ids) + n_aux + 2
    s = n_nodes - 2
    t = n_nodes - 1
    solver = MinCutSolver(n_nodes)

    # t-links: cut s->f when f switches (pays D(a)); f->t when it keeps
    keep_cost = data_cost[var_ids, labels[var_ids]].astype(np.float64)
    switch_cost = data_cost[var_ids, a].astype(np.float64)
    # boundary against fixed-a neighbors is paid only when keeping
    if mixed_a.any():
        np.add.at(keep_cost, index[fa[mixed_a]], w[mixed_a])
    if mixed_b.any():
        np.add.at(keep_cost, index[fb[mixed_b]], w[mixed_b])
    solver.add_edges(np.full(len(var_ids), s), np.arange(len(var_ids)),
                     switch_cost, np.zeros(len(var_ids)))
    solver.add_edges(np.arange(len(var_ids)), np.full(len(var_ids), t),
                     keep_cost, np.zeros(len(var_ids)))

    if same.any():
        solver.add_edges(index[fa[same]], index[fb[same]], w[same], w[same])
    if n_aux:
        aux = len(var_ids) + np.arange(n_aux)
        wa = w[diff]
        solver.add_edges(index[fa[diff]], aux, wa, wa)
        solver.add_edges(aux, index[fb[diff]], wa, wa)
        solver.add_edges(aux, np.full(n_aux, t), wa, np.zeros(n_aux))

    _, source_side = solver.solve(s, t)
    out = labels.copy()
    switched = var_ids[~source_side[:len(var_ids)]]
    out[switched] = a
    return out


def kway_cut(dual: DualGraph, probs: np.ndarray,
             params: PartitionParams) -> Segmentation:
    """Alpha-expansion minimization of the soft-assignment + boundary energy.

    Starts from the per-face argmax labeling, cycles over labels until no
    move improves the energy or max_expansion_cycles is reached (energy is
    non-increasing, asserted each cycle), then enforces connectivity and a
    minimum part size.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] != dual.n_nodes:
        raise PartitionError(
            f"probs must be (n_faces, k), got {probs.shape} for "
            f"{dual.n_nodes} faces"
        )
    k = probs.shape[1]
    data_cost = -np.log(np.maximum(probs, P_FLOOR))
    labels = np.argmax(probs, axis=1).astype(np.int64)

    energy = segmentation_energy(labels, data_cost, dual, params.lambda_smooth)
    if k > 1 and params.lambda_smooth > 0:
        for _ in range(params.max_expansion_cycles):
            cycle_start = energy
            for a in range(k):
                candidate = _expansion_move(labels, a, data_cost, dual,
                                            params.lambda_smooth)
                cand_energy = segmentation_energy(candidate, data_cost, dual,
                                                  params.lambda_smooth)
                assert cand_energy <= energy + ENERGY_SLACK, \
                    "expansion move increased the energy"
                if cand_energy < energy - ENERGY_SLACK:
                    labels = candidate
                    energy = cand_energy
            assert energy <= cycle_start + ENERGY_SLACK
            if energy >= cycle_start - ENERGY_SLACK:
                break

    adj = dual.face_adjacency()
    labels, clusters, part_count = _connectivity_pass(
        labels, labels.copy(), adj, dual, data_cost, params.lambda_smooth,
        params.min_part_faces,
    )
    energy = segmentation_energy(labels, data_cost, dual,
                                 params.lambda_smooth, clusters)
    return Segmentation(labels, part_count, params.to_dict(), energy,
                        clusters=clusters)


def _connected_components(labels, adj):
    """Per-label connected components; returns (component id per face, count)."""
    n = len(labels)
    comp = np.full(n, -1, dtype=np.int64)
    n_comp = 0
    for start in range(n):
        if comp[start] >= 0:
            continue
        comp[start] = n_comp
        stack = [start]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if comp[v] < 0 and labels[v] == labels[u]:
                    comp[v] = n_comp
                    stack.append(v)
        n_comp += 1
    return comp, n_comp


def _connectivity_pass(part_labels, clusters, adj, dual, data_cost,
                       lambda_smooth, min_faces, max_parts=None):
    """Split labels into connected components, then merge undersized parts
    into the neighboring part with the lowest resulting energy. ``clusters``
    tracks the data-term column per face; merged faces adopt the target
    part's cluster. Merging can leave two adjacent parts with the same
    cluster; those coalesce (strictly lowering the energy)."""
    labels, count = _connected_components(part_labels, adj)
    labels, clusters, count = _merge_small_parts(
        labels, clusters, adj, dual, data_cost, lambda_smooth, min_faces,
        max_parts)
    # maximal same-cluster regions: merged faces adopted their target's
    # cluster, so components of the cluster labeling are the final parts
    labels, count = _connected_components(clusters, adj)
    return labels, clusters, count


def _merge_small_parts(labels, clusters, adj, dual, data_cost, lambda_smooth,
                       min_faces, max_parts=None):
    labels = labels.copy()
    clusters = clusters.copy()
    while True:
        sizes = np.bincount(labels, minlength=labels.max() + 1)
        order = np.argsort(sizes, kind="stable")
        target = None
        for part in order:
            if sizes[part] == 0:
                continue
            too_small = sizes[part] < min_faces
            too_many = max_parts is not None and _live_parts(sizes) > max_parts
            if (too_small or too_many) and _live_parts(sizes) > 1:
                target = int(part)
                break
        if target is None:
            break
        merged = _merge_one(labels, clusters, target, adj, dual, data_cost,
                            lambda_smooth)
        if not merged:
            break  # isolated undersized component: keep it as its own part
    labels, count = _relabel_dense(labels)
    return labels, clusters, count


def _live_parts(sizes):
    return int((sizes > 0).sum())


def _merge_one(labels, clusters, part, adj, dual, data_cost, lambda_smooth):
    faces = np.where(labels == part)[0]
    # candidate neighbor parts and the boundary weight shared with each
    shared = {}
    part_cluster = {}
    for f in faces:
        for g, ei in adj[f]:
            other = int(labels[g])
            if other != part:
                shared[other] = shared.get(other, 0.0) + dual.edge_weights[ei]
                part_cluster[other] = int(clusters[g])
    if not shared:
        return False
    best_label, best_delta = None, np.inf
    current_data = data_cost[faces, clusters[faces]].sum()
    for other in sorted(shared):
        delta = (data_cost[faces, part_cluster[other]].sum() - current_data
                 - lambda_smooth * shared[other])
        if delta < best_delta - ENERGY_SLACK:
            best_label, best_delta = other, delta
    labels[faces] = best_label
    clusters[faces] = part_cluster[best_label]
    return True


def _relabel_dense(labels):
    uniq = np.unique(labels)
    remap = np.zeros(labels.max() + 1, dtype=np.int64)
    remap[uniq] = np.arange(len(uniq))
    return remap[labels], len(uniq)


def smooth_boundaries(mesh: Mesh, adjacency: Adjacency, seg: Segmentation,
                      params: PartitionParams, probs=None) -> Segmentation:
    """Alpha-expansion restricted to a band around part boundaries.

    Faces within SMOOTH_BAND_HOPS dual hops of a boundary may relabel; they
    pay a small anchor cost for leaving their current label while boundary
    terms are as in kway_cut, so jagged boundaries straighten but boundaries
    resting on concave creases stay. Part count does not increase; the
    restricted energy does not increase.
    """
    if seg.part_count <= 1:
        return Segmentation(seg.labels.copy(), seg.part_count, seg.params,
                            seg.energy,
                            clusters=None if seg.clusters is None
                            else seg.clusters.copy(),
                            parent_part=seg.parent_part, parent=seg.parent)
    dual = build_dual_graph(mesh, adjacency,
                            params.concavity_bias)
    adj = dual.face_adjacency()
    labels = seg.labels.copy()

    boundary = set()
    for (a, b), w in zip(dual.edge_faces, dual.edge_weights):
        if labels[a] != labels[b]:
            boundary.add(int(a))
            boundary.add(int(b))
    band = set(boundary)
    frontier = set(boundary)
    for _ in range(SMOOTH_BAND_HOPS - 1):
        nxt = set()
        for f in frontier:
            for g, _ in adj[f]:
                if g not in band:
                    nxt.add(g)
        band |= nxt
        frontier = nxt
    if not band:
        return Segmentation(labels, seg.part_count, seg.params, seg.energy,
                            clusters=None if seg.clusters is None
                            else seg.clusters.copy(),
                            parent_part=seg.parent_part, parent=seg.parent)

    k = int(labels.max()) + 1
    mean_w = dual.edge_weights.mean() if len(dual.edge_weights) else 1.0
    anchor = SMOOTH_ANCHOR_FACTOR * params.lambda_smooth * mean_w
    band_mask = np.zeros(len(labels), dtype=bool)
    band_mask[list(band)] = True
    # anchor data term: free to keep the current label, pay to leave; faces
    # outside the band are immovable
    data_cost = np.full((len(labels), k), anchor)
    data_cost[np.arange(len(labels)), labels] = 0.0
    data_cost[~band_mask] = 1e9
    data_cost[~band_mask, labels[~band_mask]] = 0.0

    energy = segmentation_energy(labels, data_cost, dual, params.lambda_smooth)
    for _ in range(params.max_expansion_cycles):
        cycle_start = energy
        for a in range(k):
            candidate = _expansion_move(labels, a, data_cost, dual,
                                        params.lambda_smooth)
            candidate[~band_mask] = labels[~band_mask]  # safety net
            cand_energy = segmentation_energy(candidate, data_cost, dual,
                                              params.lambda_smooth)
            if cand_energy < energy - ENERGY_SLACK:
                labels = candidate
                energy = cand_energy
        assert energy <= cycle_start + ENERGY_SLACK
        if energy >= cycle_start - ENERGY_SLACK:
            break

    # faces follow their (possibly new) part's cluster; parts are
    # cluster-uniform so the mapping is well defined
    base_clusters = (seg.clusters if seg.clusters is not None else seg.labels)
    part_to_cluster = np.zeros(int(seg.labels.max()) + 1, dtype=np.int64)
    part_to_cluster[seg.labels] = base_clusters
    clusters = part_to_cluster[labels]
    if probs is not None:
        final_data = -np.log(np.maximum(np.asarray(probs, dtype=np.float64),
                                        P_FLOOR))
    else:
        final_data = np.zeros((len(labels), int(clusters.max()) + 1))
    labels, clusters, count = _connectivity_pass(
        labels, clusters, adj, dual, final_data, params.lambda_smooth,
        params.min_part_faces, max_parts=seg.part_count,
    )
    final_energy = segmentation_energy(
        labels, final_data, dual, params.lambda_smooth, clusters
    ) if probs is not None else energy
    return Segmentation(labels, count, seg.params, float(final_energy),
                        clusters=clusters, parent_part=seg.parent_part,
                        parent=seg.parent)


def export_colored_ply(mesh: Mesh, seg: Segmentation) -> bytes:
    """Binary PLY with one distinct color per part."""
    from .mesh import save_ply

    colors = part_colors(seg.part_count)[seg.labels]
    return save_ply(mesh, binary=True, face_colors=colors)


def part_colors(count: int) -> np.ndarray:
    """Deterministic distinct uint8 RGB per part id (golden-ratio hues)."""
    hues = (np.arange(count) * 0.61803398875) % 1.0
    out = np.empty((count, 3), dtype=np.uint8)
    for i, h in enumerate(hues):
        out[i] = _hsv_to_rgb(h, 0.65, 0.95)
    return out


def _hsv_to_rgb(h, s, v):
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array([int(c * 255) for c in rgb], dtype=np.uint8)
