"""End-to-end segmentation: field computation (ray-cast or learned), GMM +
k-way cut, boundary smoothing, recursive refinement and parameter search.

A session cache keys fields, dual graphs and segmentations by content and
parameter hashes, so re-partitioning with new (k, lambda) reuses the field:
the expensive stage runs once per (mesh, source, params).
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .mesh import Mesh, build_adjacency
from .network import infer_field, load_model
from .partition import (
    PartitionParams,
    Segmentation,
    build_dual_graph,
    fit_gmm,
    kway_cut,
    smooth_boundaries,
    soft_assign,
)
from .sampling import default_radius
from .shdf import (
    ScalarField,
    ShdfParams,
    build_accel,
    compute_shdf_field,
    normalize_log,
    smooth_anisotropic,
)

_LOGGER = logging.getLogger(__name__)


class PipelineError(Exception):
    def __init__(self, message, stage=None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage


class RefinementDeclined(PipelineError):
    pass


@dataclass
class PipelineConfig:
    shdf_source: str = "oracle"          # 'oracle' | 'model'
    model_path: str = None
    shdf: ShdfParams = dc_field(default_factory=ShdfParams)
    sampling_radius: float = None        # model source; None = default
    partition: PartitionParams = dc_field(default_factory=PartitionParams)
    smooth: bool = False                 # boundary smoothing post-process
    refine_depth_limit: int = 3
    refine_reuse_parent_field: bool = False

    def __post_init__(self):
        if self.shdf_source not in ("oracle", "model"):
            raise PipelineError(f"unknown shdf source {self.shdf_source!r}")
        if self.refine_depth_limit < 0:
            raise PipelineError("refine_depth_limit must be >= 0")
        if self.shdf_source == "model":
            if not self.model_path:
                raise PipelineError("model source requires model_path")
            from pathlib import Path
            if not Path(self.model_path).exists():
                raise PipelineError(f"model file not found: {self.model_path}")

    def to_dict(self):
        s = self.shdf
        return {
            "shdf_source": self.shdf_source,
            "model_path": self.model_path,
            "shdf": {
                "cone_half_angle": s.cone_half_angle,
                "rays_per_point": s.rays_per_point,
                "outlier_std_factor": s.outlier_std_factor,
                "normalization_alpha": s.normalization_alpha,
                "smoothing_iterations": s.smoothing_iterations,
                "seed": s.seed,
            },
            "sampling_radius": self.sampling_radius,
            "partition": self.partition.to_dict(),
            "smooth": self.smooth,
            "refine_depth_limit": self.refine_depth_limit,
            "refine_reuse_parent_field": self.refine_reuse_parent_field,
        }


def _stable_hash(obj) -> str:
    return hashlib.sha1(
        json.dumps(obj, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


class _CacheEntry:
    def __init__(self, mesh):
        self.mesh = mesh
        self.adjacency = None
        self.accel = None
        self.fields = {}
        self.duals = {}
        self.gmms = {}
        self.segmentations = {}
        self.models = {}
        self.stats = {"shdf_computations": 0, "partitions": 0,
                      "field_cache_hits": 0}


class SessionCache:
    """Per-mesh cache of adjacency, accelerators, fields and segmentations."""

    def __init__(self):
        self._entries = {}

    def register(self, mesh: Mesh, mesh_id: str = None) -> str:
        if mesh_id is None:
            digest = hashlib.sha1()
            digest.update(mesh.vertices.tobytes())
            digest.update(mesh.faces.tobytes())
            mesh_id = digest.hexdigest()[:16]
        if mesh_id not in self._entries:
            self._entries[mesh_id] = _CacheEntry(mesh)
        return mesh_id

    def entry(self, mesh_id) -> _CacheEntry:
        if mesh_id not in self._entries:
            raise PipelineError(f"unknown mesh id {mesh_id!r}", stage="cache")
        return self._entries[mesh_id]

    def drop(self, mesh_id):
        self._entries.pop(mesh_id, None)

    def __contains__(self, mesh_id):
        return mesh_id in self._entries

    def adjacency(self, mesh_id):
        entry = self.entry(mesh_id)
        if entry.adjacency is None:
            entry.adjacency = build_adjacency(entry.mesh, strict=False)
        return entry.adjacency

    def accel(self, mesh_id):
        entry = self.entry(mesh_id)
        if entry.accel is None:
            entry.accel = build_accel(entry.mesh)
        return entry.accel

    def dual_graph(self, mesh_id, concavity_bias):
        entry = self.entry(mesh_id)
        key = round(float(concavity_bias), 12)
        if key not in entry.duals:
            entry.duals[key] = build_dual_graph(
                entry.mesh, self.adjacency(mesh_id), concavity_bias)
        return entry.duals[key]

    def model(self, path):
        # model files are small; key per entry-independent path
        from pathlib import Path
        key = str(Path(path).resolve())
        if not hasattr(self, "_models"):
            self._models = {}
        if key not in self._models:
            self._models[key] = load_model(Path(path).read_bytes())
        return self._models[key]


def field_cache_key(config: PipelineConfig) -> str:
    s = config.shdf
    payload = {
        "source": config.shdf_source,
        "model": config.model_path,
        "radius": config.sampling_radius,
        "cone": s.cone_half_angle, "rays": s.rays_per_point,
        "outlier": s.outlier_std_factor, "alpha": s.normalization_alpha,
        "smooth_iters": s.smoothing_iterations, "seed": s.seed,
    }
    return _stable_hash(payload)


class Pipeline:
    """Stateful facade: owns a SessionCache and records per-run timings."""

    def __init__(self, cache: SessionCache = None):
        self.cache = cache or SessionCache()
        self.last_manifest = None

    # -- fields ------------------------------------------------------------

    def compute_field(self, mesh_id: str, config: PipelineConfig) -> ScalarField:
        """Normalized per-face field, cached by (source, params)."""
        entry = self.cache.entry(mesh_id)
        key = field_cache_key(config)
        if key in entry.fields:
            entry.stats["field_cache_hits"] += 1
            return entry.fields[key]
        try:
            fld = self._compute_field_uncached(mesh_id, entry.mesh, config)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(str(exc), stage="shdf") from exc
        entry.stats["shdf_computations"] += 1
        entry.fields[key] = fld
        return fld

    def _compute_field_uncached(self, mesh_id, mesh, config):
        s = config.shdf
        if config.shdf_source == "oracle":
            raw = compute_shdf_field(mesh, self.cache.accel(mesh_id), s,
                                     adjacency=self.cache.adjacency(mesh_id))
            fld = normalize_log(raw, s.normalization_alpha)
        else:
            model = self.cache.model(config.model_path)
            radius = config.sampling_radius or default_radius(mesh)
            fld = infer_field(model, mesh, radius, seed=s.seed)
        if s.smoothing_iterations > 0:
            fld = smooth_anisotropic(fld, mesh, self.cache.adjacency(mesh_id),
                                     s.smoothing_iterations)
        return fld

    # -- segmentation ------------------------------------------------------

    def segment(self, mesh: Mesh, config: PipelineConfig,
                mesh_id: str = None) -> Segmentation:
        """Field -> GMM -> k-way cut -> optional boundary smoothing.

        Records a manifest with the Table-2-style stage decomposition
        {shdf_ms, partition_ms, refine_ms, post_ms} in ``last_manifest``.
        """
        t_total = time.perf_counter()
        mesh_id = self.cache.register(mesh, mesh_id)
        entry = self.cache.entry(mesh_id)

        seg_key = _stable_hash({
            "field": field_cache_key(config),
            "partition": config.partition.to_dict(),
            "smooth": config.smooth,
        })
        if seg_key in entry.segmentations:
            seg = entry.segmentations[seg_key]
            self._record(config, seg, {"shdf_ms": 0.0, "partition_ms": 0.0,
                                       "refine_ms": 0.0, "post_ms": 0.0},
                         t_total, cache_hit=True)
            return seg

        t0 = time.perf_counter()
        fld = self.compute_field(mesh_id, config)
        shdf_ms = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        seg, probs = self._partition_field(mesh_id, fld, config,
                                           field_key=field_cache_key(config))
        partition_ms = (time.perf_counter() - t0) * 1000.0

        post_ms = 0.0
        if config.smooth and seg.part_count > 1:
            t0 = time.perf_counter()
            try:
                seg = smooth_boundaries(mesh, self.cache.adjacency(mesh_id),
                                        seg, config.partition, probs=probs)
            except Exception as exc:
                raise PipelineError(str(exc), stage="post") from exc
            post_ms = (time.perf_counter() - t0) * 1000.0

        seg.mesh_id = mesh_id
        seg.field_key = field_cache_key(config)
        seg.depth = 0
        entry.segmentations[seg_key] = seg
        entry.stats["partitions"] += 1
        self._record(config, seg,
                     {"shdf_ms": shdf_ms, "partition_ms": partition_ms,
                      "refine_ms": 0.0, "post_ms": post_ms}, t_total)
        return seg

    def _partition_field(self, mesh_id, fld, config, field_key=None):
        p = config.partition
        entry = self.cache.entry(mesh_id)
        try:
            gmm_key = (field_key, p.k, p.seed)
            if field_key is not None and gmm_key in entry.gmms:
                probs = entry.gmms[gmm_key]
            else:
                gmm = fit_gmm(fld, p.k, seed=p.seed)
                probs = soft_assign(gmm, fld.values)
                if field_key is not None:
                    entry.gmms[gmm_key] = probs
            dual = self.cache.dual_graph(mesh_id, p.concavity_bias)
            seg = kway_cut(dual, probs, p)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(str(exc), stage="partition") from exc
        return seg, probs

    def _record(self, config, seg, timings, t_total, cache_hit=False,
                extra=None):
        total_ms = (time.perf_counter() - t_total) * 1000.0
        manifest = {
            "config": config.to_dict(),
            "timings": dict(timings, total_ms=total_ms),
            "energy": seg.energy,
            "part_count": seg.part_count,
            "cache_hit": cache_hit,
            "artifact_paths": [],
        }
        if extra:
            manifest.update(extra)
        self.last_manifest = manifest
        return manifest

    def write_manifest(self, path):
        from pathlib import Path
        Path(path).write_text(json.dumps(self.last_manifest, sort_keys=True,
                                         indent=2))

    # -- refinement ----------------------------------------------------------

    def refine_part(self, seg: Segmentation, part_id: int,
                    config: PipelineConfig) -> Segmentation:
        """Re-segment one part and splice the child labels back in.

        The part keeps its label for the first child; further children get
        fresh ids, so a successful k-child refinement adds exactly k-1 parts.
        Faces outside the part are untouched.
        """
        t_total = time.perf_counter()
        mesh_id = getattr(seg, "mesh_id", None)
        if mesh_id is None or mesh_id not in self.cache:
            raise PipelineError("segmentation is not attached to a cached mesh",
                                stage="refine")
        depth = getattr(seg, "depth", 0)
        if depth >= config.refine_depth_limit:
            raise RefinementDeclined(
                f"depth limit {config.refine_depth_limit} reached",
                stage="refine")
        mesh = self.cache.entry(mesh_id).mesh
        faces = seg.part_faces(part_id)
        if len(faces) == 0:
            raise PipelineError(f"no such part {part_id}", stage="refine")
        need = config.partition.min_part_faces * config.partition.k
        if len(faces) < need:
            raise RefinementDeclined(
                f"part {part_id} has {len(faces)} faces; need at least "
                f"{need} (min_part_faces * k) to split into "
                f"{config.partition.k}", stage="refine")

        sub_mesh, _ = extract_submesh(mesh, faces)
        t0 = time.perf_counter()
        if config.refine_reuse_parent_field:
            parent_field = self.cache.entry(mesh_id).fields.get(
                getattr(seg, "field_key", None))
            if parent_field is None:
                raise PipelineError("parent field not cached; cannot reuse",
                                    stage="refine")
            sub_field = ScalarField("per_face", parent_field.values[faces],
                                    normalized=parent_field.normalized,
                                    provenance=parent_field.provenance)
            sub_id = self.cache.register(sub_mesh)
            sub_seg, _ = self._partition_field(sub_id, sub_field, config)
        else:
            sub_id = self.cache.register(sub_mesh)
            sub_seg = self.segment(sub_mesh, config, mesh_id=sub_id)
        refine_ms = (time.perf_counter() - t0) * 1000.0

        labels = seg.labels.copy()
        child = sub_seg.labels
        new_ids = np.empty(sub_seg.part_count, dtype=np.int64)
        new_ids[0] = part_id
        new_ids[1:] = seg.part_count + np.arange(sub_seg.part_count - 1)
        labels[faces] = new_ids[child]

        out = Segmentation(
            labels,
            seg.part_count + sub_seg.part_count - 1,
            dict(seg.params, refined_part=int(part_id),
                 refine_params=config.partition.to_dict()),
            float(seg.energy + sub_seg.energy),
            clusters=None,
            parent_part=int(part_id),
            parent=seg,
        )
        out.mesh_id = mesh_id
        out.depth = depth + 1
        out.field_key = getattr(seg, "field_key", None)
        self._record(config, out,
                     {"shdf_ms": 0.0, "partition_ms": 0.0,
                      "refine_ms": refine_ms, "post_ms": 0.0}, t_total)
        return out

    # -- parameter search ----------------------------------------------------

    def grid_search(self, mesh: Mesh, config: PipelineConfig, k_values,
                    lambda_values, metric: str = "energy",
                    mesh_id: str = None):
        """Exhaustive (k, lambda_smooth) sweep reusing one cached field.

        metric 'energy': normalized final energy E/|faces| (lower is
        better); 'silhouette': silhouette score of field values under the
        labeling (higher is better). Returns results sorted best-first.
        """
        if metric not in ("energy", "silhouette"):
            raise PipelineError(f"unknown metric {metric!r}", stage="grid")
        if not len(k_values) or not len(lambda_values):
            raise PipelineError("empty parameter grid", stage="grid")
        mesh_id = self.cache.register(mesh, mesh_id)
        fld = self.compute_field(mesh_id, config)  # the one field computation

        results = []
        for k in k_values:
            for lam in lambda_values:
                cfg = replace(config,
                              partition=replace(config.partition, k=int(k),
                                                lambda_smooth=float(lam)))
                t0 = time.perf_counter()
                seg = self.segment(mesh, cfg, mesh_id=mesh_id)
                elapsed = (time.perf_counter() - t0) * 1000.0
                if metric == "energy":
                    score = seg.energy / mesh.n_faces
                else:
                    score = silhouette_1d(fld.values, seg.labels)
                results.append({
                    "k": int(k),
                    "lambda_smooth": float(lam),
                    "metric": metric,
                    "score": float(score),
                    "energy": seg.energy,
                    "part_count": seg.part_count,
                    "partition_ms": elapsed,
                    "segmentation": seg,
                })
        reverse = metric == "silhouette"
        results.sort(key=lambda r: (-r["score"] if reverse else r["score"],
                                    r["k"], r["lambda_smooth"]))
        return results


def extract_submesh(mesh: Mesh, faces):
    """Sub-mesh of the given faces with reindexed vertices.

    Returns (submesh, vertex_map old->new).
    """
    faces = np.asarray(faces, dtype=np.int64)
    used = np.unique(mesh.faces[faces].ravel())
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    sub = Mesh(mesh.vertices[used], remap[mesh.faces[faces]],
               drop_degenerate=False)
    return sub, remap


def silhouette_1d(values, labels) -> float:
    """Mean silhouette of scalar values under a labeling, exact O(n k log n).

    Per-part sorted prefix sums make mean |v - x| over a part an O(log n)
    query. Singleton parts contribute 0 by convention.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    parts = np.unique(labels)
    if len(parts) < 2:
        return 0.0
    sorted_vals = {}
    prefix = {}
    for p in parts:
        sv = np.sort(values[labels == p])
        sorted_vals[p] = sv
        prefix[p] = np.concatenate([[0.0], np.cumsum(sv)])

    def mean_abs_dist(p, x):
        sv, pre = sorted_vals[p], prefix[p]
        n = len(sv)
        i = np.searchsorted(sv, x)
        left = x * i - pre[i]
        right = (pre[n] - pre[i]) - x * (n - i)
        return (left + right) / n

    score = 0.0
    for idx, x in enumerate(values):
        own = labels[idx]
        n_own = len(sorted_vals[own])
        if n_own <= 1:
            continue
        a = mean_abs_dist(own, x) * n_own / (n_own - 1)  # exclude self
        b = min(mean_abs_dist(p, x) for p in parts if p != own)
        denom = max(a, b)
        if denom > 0:
            score += (b - a) / denom
    return float(score / len(values))
