"""Reference shape-diameter field: inward cone ray casting over a BVH.

For every surface point a cone of rays is cast into the shape; hit distances
against far inside walls are filtered for outliers and averaged with
inverse-angle weights, giving a local thickness measure. The per-face field
is then log-normalized to [0, 1] and optionally smoothed edge-preservingly.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .mesh import Adjacency, Mesh, face_geometry

_LOGGER = logging.getLogger(__name__)

SURFACE_OFFSET_FACTOR = 1e-4   # origin offset, fraction of bbox diagonal
CENTRAL_ANGLE_EPS = 1e-4       # rad; keeps the axial ray weight finite
_LEAF_SIZE = 4


class FieldError(Exception):
    """A scalar field could not be computed or is malformed."""


@dataclass
class ShdfParams:
    """Parameters of the diameter measure.

    Defaults follow the usual convention for this measure: a 120 degree
    opening (half-angle 60 degrees), 30 rays, one-sigma outlier rejection
    and log-normalization strength 4.
    """

    cone_half_angle: float = np.deg2rad(60.0)
    rays_per_point: int = 30
    outlier_std_factor: float = 1.0
    normalization_alpha: float = 4.0
    smoothing_iterations: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.cone_half_angle < np.pi / 2):
            raise ValueError("cone_half_angle must be in (0, pi/2)")
        if self.rays_per_point < 1:
            raise ValueError("rays_per_point must be >= 1")
        if self.normalization_alpha <= 0:
            raise ValueError("normalization_alpha must be > 0")

    def with_seed(self, seed):
        return replace(self, seed=seed)


@dataclass
class ScalarField:
    """Per-element scalar values, raw or normalized to [0, 1]."""

    domain: str                      # 'per_face' | 'per_sample'
    values: np.ndarray
    normalized: bool = False
    provenance: str = "oracle"       # 'oracle' | 'predicted'
    constant: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.domain not in ("per_face", "per_sample"):
            raise FieldError(f"unknown field domain {self.domain!r}")
        if self.provenance not in ("oracle", "predicted"):
            raise FieldError(f"unknown provenance {self.provenance!r}")
        if self.normalized and self.values.size:
            lo, hi = self.values.min(), self.values.max()
            if lo < -1e-12 or hi > 1.0 + 1e-12:
                raise FieldError(f"normalized field outside [0,1]: [{lo}, {hi}]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "domain": self.domain,
                "provenance": self.provenance,
                "normalized": self.normalized,
                "constant": self.constant,
                "values": self.values.tolist(),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text) -> "ScalarField":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise FieldError(f"unsupported field version {doc.get('version')!r}")
        return cls(
            domain=doc["domain"],
            values=np.array(doc["values"], dtype=np.float64),
            normalized=doc["normalized"],
            provenance=doc["provenance"],
            constant=doc.get("constant", False),
        )


# ---------------------------------------------------------------------------
# BVH


@dataclass
class RayAccel:
    """Flattened axis-aligned BVH over triangles plus packed triangle data."""

    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray    # internal: left child id (right = left + 1); leaf: -1
    node_start: np.ndarray   # leaf: offset into tri_order
    node_count: np.ndarray   # leaf: triangle count; 0 for internal
    tri_order: np.ndarray
    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @property
    def n_triangles(self):
        return len(self.tri_order)


def build_accel(mesh: Mesh) -> RayAccel:
    """Median-split BVH; equivalent to brute force on intersection queries."""
    if mesh.n_faces == 0:
        raise FieldError("cannot build a ray accelerator for an empty mesh")
    v = mesh.vertices
    f = mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    tri_min = np.minimum(np.minimum(p0, p1), p2)
    tri_max = np.maximum(np.maximum(p0, p1), p2)
    centroids = (p0 + p1 + p2) / 3.0
    n = len(f)

    order = np.arange(n, dtype=np.int64)
    node_min, node_max, node_left, node_start, node_count = [], [], [], [], []

    def new_node():
        node_min.append(None)
        node_max.append(None)
        node_left.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_left) - 1

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        nid, lo, hi = stack.pop()
        ids = order[lo:hi]
        node_min[nid] = tri_min[ids].min(axis=0)
        node_max[nid] = tri_max[ids].max(axis=0)
        if hi - lo <= _LEAF_SIZE:
            node_start[nid] = lo
            node_count[nid] = hi - lo
            continue
        cen = centroids[ids]
        spread = cen.max(axis=0) - cen.min(axis=0)
        axis = int(np.argmax(spread))
        mid = (hi - lo) // 2
        if spread[axis] <= 0.0:
            pass  # identical centroids: arbitrary middle split
        else:
            part = np.argpartition(cen[:, axis], mid)
            order[lo:hi] = ids[part]
        left = new_node()
        right = new_node()
        node_left[nid] = left
        stack.append((left, lo, lo + mid))
        stack.append((right, lo + mid, hi))

    return RayAccel(
        node_min=np.array(node_min, dtype=np.float64),
        node_max=np.array(node_max, dtype=np.float64),
        node_left=np.array(node_left, dtype=np.int64),
        node_start=np.array(node_start, dtype=np.int64),
        node_count=np.array(node_count, dtype=np.int64),
        tri_order=order,
        v0=np.ascontiguousarray(p0),
        e1=np.ascontiguousarray(p1 - p0),
        e2=np.ascontiguousarray(p2 - p0),
    )


@njit(cache=True, nogil=True, error_model="numpy")
def _cast_batch(origins, dirs, t_min, node_min, node_max, node_left,
                node_start, node_count, tri_order, v0, e1, e2):
    """Nearest far-inside-wall hit per ray: only triangles hit on their back
    side count, so a ray cast into a shape measures to the opposite wall and
    skips grazing front-facing geometry near its origin.

    Moller-Trumbore with det < 0 acceptance: det = -dir . (e1 x e2), negative
    exactly when the ray direction has positive component along the face
    normal (a back-face hit). Returns hit distances (inf on miss) and hit
    triangle ids (-1 on miss).
    """
    n_rays = origins.shape[0]
    out_t = np.full(n_rays, np.inf)
    out_tri = np.full(n_rays, -1, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)

    for r in range(n_rays):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best_t = np.inf
        best_tri = -1
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            nid = stack[top]
            # slab test against the node box, pruned by the best hit so far
            tn = t_min
            tf = best_t
            ok = True
            for a in range(3):
                if a == 0:
                    o, d, lo, hi = ox, dx, node_min[nid, 0], node_max[nid, 0]
                elif a == 1:
                    o, d, lo, hi = oy, dy, node_min[nid, 1], node_max[nid, 1]
                else:
                    o, d, lo, hi = oz, dz, node_min[nid, 2], node_max[nid, 2]
                if d == 0.0:
                    if o < lo or o > hi:
                        ok = False
                        break
                else:
                    inv = 1.0 / d
                    t1 = (lo - o) * inv
                    t2 = (hi - o) * inv
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tn:
                        tn = t1
                    if t2 < tf:
                        tf = t2
                    if tn > tf:
                        ok = False
                        break
            if not ok:
                continue
            cnt = node_count[nid]
            if cnt > 0:
                s = node_start[nid]
                for k in range(s, s + cnt):
                    tri = tri_order[k]
                    e1x, e1y, e1z = e1[tri, 0], e1[tri, 1], e1[tri, 2]
                    e2x, e2y, e2z = e2[tri, 0], e2[tri, 1], e2[tri, 2]
                    px = dy * e2z - dz * e2y
                    py = dz * e2x - dx * e2z
                    pz = dx * e2y - dy * e2x
                    det = e1x * px + e1y * py + e1z * pz
                    if det >= -1e-14:  # parallel or front-facing: skip
                        continue
                    inv_det = 1.0 / det
                    tx = ox - v0[tri, 0]
                    ty = oy - v0[tri, 1]
                    tz = oz - v0[tri, 2]
                    u = (tx * px + ty * py + tz * pz) * inv_det
                    if u < 0.0 or u > 1.0:
                        continue
                    qx = ty * e1z - tz * e1y
                    qy = tz * e1x - tx * e1z
                    qz = tx * e1y - ty * e1x
                    vv = (dx * qx + dy * qy + dz * qz) * inv_det
                    if vv < 0.0 or u + vv > 1.0:
                        continue
                    t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                    if t_min < t < best_t:
                        best_t = t
                        best_tri = tri
            else:
                stack[top] = node_left[nid]
                stack[top + 1] = node_left[nid] + 1
                top += 2
        out_t[r] = best_t
        out_tri[r] = best_tri
    return out_t, out_tri


def cast_rays(accel: RayAccel, origins, dirs, t_min: float = 0.0):
    """Batch nearest-opposing-hit query. Returns (distances, triangle ids)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    return _cast_batch(
        origins, dirs, t_min,
        accel.node_min, accel.node_max, accel.node_left,
        accel.node_start, accel.node_count, accel.tri_order,
        accel.v0, accel.e1, accel.e2,
    )


def cast_rays_brute(mesh: Mesh, origins, dirs, t_min: float = 0.0):
    """Brute-force reference for cast_rays: test every triangle, vectorized."""
    v = mesh.vertices
    f = mesh.faces
    v0 = v[f[:, 0]]
    e1 = v[f[:, 1]] - v0
    e2 = v[f[:, 2]] - v0
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    out_t = np.full(len(origins), np.inf)
    out_tri = np.full(len(origins), -1, dtype=np.int64)
    for r, (o, d) in enumerate(zip(origins, dirs)):
        p = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, p)
        valid = det < -1e-14
        if not valid.any():
            continue
        inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
        tvec = o - v0
        u = np.einsum("ij,ij->i", tvec, p) * inv_det
        q = np.cross(tvec, e1)
        w = (d * q).sum(axis=1) * inv_det
        t = np.einsum("ij,ij->i", e2, q) * inv_det
        hit = valid & (u >= 0) & (u <= 1) & (w >= 0) & (u + w <= 1) & (t > t_min)
        if hit.any():
            idx = np.where(hit)[0]
            best = idx[np.argmin(t[idx])]
            out_t[r] = t[best]
            out_tri[r] = best
    return out_t, out_tri


# ---------------------------------------------------------------------------
# Cone sampling and aggregation


def _cone_basis(inward, tangent=None):
    """Orthonormal (u, w) spanning the plane orthogonal to ``inward``.

    With a tangent hint the basis is covariant with rigid motion of the
    surface, which keeps sampled ray fans attached to the geometry.
    """
    d = inward / np.linalg.norm(inward)
    if tangent is not None:
        u = tangent - d * np.dot(tangent, d)
        nu = np.linalg.norm(u)
        if nu > 1e-12:
            u = u / nu
        else:
            tangent = None
    if tangent is None:
        ref = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(d, ref)
        u /= np.linalg.norm(u)
    w = np.cross(d, u)
    return d, u, w


def _sample_cone(rng, inward, half_angle, count, tangent=None):
    """Uniform solid-angle directions in a cone around ``inward``.

    cos(theta) is drawn by jittered stratification, which keeps the marginal
    distribution uniform but makes the robust aggregate far less noisy for
    small ray counts. Returns (dirs (count,3), angles-from-axis (count,)).
    """
    d, u, w = _cone_basis(inward, tangent)
    cos_max = np.cos(half_angle)
    strata = (np.arange(count) + rng.uniform(0.0, 1.0, size=count)) / count
    cos_t = cos_max + (1.0 - cos_max) * strata
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
    dirs = (
        d[None, :] * cos_t[:, None]
        + (u[None, :] * np.cos(phi)[:, None] + w[None, :] * np.sin(phi)[:, None])
        * sin_t[:, None]
    )
    return dirs, np.arccos(np.clip(cos_t, -1.0, 1.0))


def aggregate_cone_lengths(lengths, angles, outlier_std_factor):
    """Robust aggregate of cone ray lengths: reject values farther than
    ``outlier_std_factor`` standard deviations from the median, then average
    survivors weighted by inverse angle from the cone axis.

    ``lengths`` may contain inf/nan for missed rays. Returns NaN when no ray
    survives (the "no measure" sentinel).
    """
    lengths = np.asarray(lengths, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    valid = np.isfinite(lengths)
    if not valid.any():
        return np.nan
    lv = lengths[valid]
    av = angles[valid]
    med = np.median(lv)
    std = lv.std()
    keep = np.abs(lv - med) <= outlier_std_factor * std + 1e-300
    if not keep.any():
        return np.nan
    wts = 1.0 / (av[keep] + CENTRAL_ANGLE_EPS)
    return float(np.sum(lv[keep] * wts) / np.sum(wts))


def shdf_at_point(mesh, accel, origin, inward_dir, params: ShdfParams,
                  rng=None, tangent=None, t_min=None):
    """Raw diameter measure at one surface point. NaN when nothing is hit."""
    if rng is None:
        rng = np.random.default_rng(params.seed)
    if t_min is None:
        t_min = SURFACE_OFFSET_FACTOR * mesh.bbox_diagonal()
    inward_dir = np.asarray(inward_dir, dtype=np.float64)
    dirs, angles = _sample_cone(
        rng, inward_dir, params.cone_half_angle, params.rays_per_point, tangent
    )
    origins = np.broadcast_to(np.asarray(origin, dtype=np.float64), dirs.shape)
    t, _ = cast_rays(accel, origins, dirs, t_min=t_min)
    return aggregate_cone_lengths(t, angles, params.outlier_std_factor)


def compute_shdf_field(mesh: Mesh, accel: RayAccel, params: ShdfParams,
                       adjacency: Adjacency = None) -> ScalarField:
    """Raw per-face diameter field evaluated at inward-offset centroids.

    Faces with no surviving ray are filled with the area-weighted mean of
    measured neighbor faces (requires ``adjacency``; built on demand).
    Per-face RNG streams derive from (seed, face index), so values do not
    depend on evaluation order.
    """
    centroids, normals, areas = face_geometry(mesh)
    n = mesh.n_faces
    if n == 0:
        raise FieldError("mesh has no faces")
    eps = SURFACE_OFFSET_FACTOR * mesh.bbox_diagonal()
    inward = -normals
    origins = centroids + inward * eps
    tangents = mesh.vertices[mesh.faces[:, 1]] - mesh.vertices[mesh.faces[:, 0]]

    R = params.rays_per_point
    all_dirs = np.empty((n, R, 3))
    all_angles = np.empty((n, R))
    for i in range(n):
        rng = np.random.default_rng([params.seed, i])
        all_dirs[i], all_angles[i] = _sample_cone(
            rng, inward[i], params.cone_half_angle, R, tangents[i]
        )

    ray_origins = np.repeat(origins, R, axis=0)
    t, _ = cast_rays(accel, ray_origins, all_dirs.reshape(-1, 3), t_min=eps)
    t = t.reshape(n, R)

    values = np.empty(n)
    for i in range(n):
        values[i] = aggregate_cone_lengths(t[i], all_angles[i], params.outlier_std_factor)

    missing = ~np.isfinite(values)
    if missing.all():
        raise FieldError("no face produced a diameter measure (open surface?)")
    if missing.any():
        values = _fill_missing(values, missing, areas, mesh, adjacency)
    return ScalarField("per_face", values, normalized=False, provenance="oracle")


def _fill_missing(values, missing, areas, mesh, adjacency):
    from .mesh import build_adjacency

    if adjacency is None:
        adjacency = build_adjacency(mesh, strict=False)
    values = values.copy()
    n_missing = int(missing.sum())
    _LOGGER.warning("filling %d unmeasured face(s) from neighbors", n_missing)
    for _ in range(len(values)):
        still = np.where(missing)[0]
        if len(still) == 0:
            break
        progressed = False
        for fidx in still:
            nbrs = [g for g in adjacency.face_neighbors[fidx] if not missing[g]]
            if not nbrs:
                continue
            w = areas[nbrs]
            values[fidx] = float(np.sum(values[nbrs] * w) / np.sum(w))
            missing[fidx] = False
            progressed = True
        if not progressed:
            # isolated unmeasured region: fall back to the global mean
            values[missing] = float(values[~missing].mean())
            _LOGGER.warning("unmeasured region disconnected from measured faces; "
                            "filled with the field mean")
            break
    return values


# ---------------------------------------------------------------------------
# Normalization and smoothing


def normalize_log(fld: ScalarField, alpha: float = None) -> ScalarField:
    """Map raw values to [0,1] via v -> log(u * alpha + 1) / log(alpha + 1)
    where u is the min-max rescaled value. Returns a constant-flagged zero
    field when max == min.
    """
    if alpha is None:
        alpha = 4.0
    if alpha <= 0:
        raise FieldError("alpha must be > 0")
    v = fld.values
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return ScalarField(fld.domain, np.zeros_like(v), normalized=True,
                           provenance=fld.provenance, constant=True)
    u = (v - lo) / (hi - lo)
    out = np.log(u * alpha + 1.0) / np.log(alpha + 1.0)
    return ScalarField(fld.domain, out, normalized=True, provenance=fld.provenance)


def smooth_bilateral_graph(values, neighbor_lists, iterations: int,
                           value_sigma: float):
    """Edge-preserving smoothing on an arbitrary neighbor graph.

    Each value is replaced by an average over itself and its neighbors with
    weights exp(-dv^2 / 2 sigma^2): similar values mix, steps survive. Always
    a convex combination, so output stays within the input range.
    """
    values = np.asarray(values, dtype=np.float64).copy()
    if iterations <= 0:
        return values
    inv = 1.0 / (2.0 * value_sigma * value_sigma)
    for _ in range(iterations):
        prev = values.copy()
        for i, nbrs in enumerate(neighbor_lists):
            if not len(nbrs):
                continue
            dv = prev[nbrs] - prev[i]
            w = np.exp(-(dv * dv) * inv)
            num = prev[i] + np.sum(w * prev[nbrs])
            den = 1.0 + np.sum(w)
            values[i] = num / den
    return values


def smooth_anisotropic(fld: ScalarField, mesh: Mesh, adjacency: Adjacency,
                       iterations: int, value_sigma: float = 0.1) -> ScalarField:
    """Bilateral smoothing of a per-face field over face adjacency."""
    if fld.domain != "per_face":
        raise FieldError("smooth_anisotropic expects a per-face field")
    if iterations <= 0:
        return ScalarField(fld.domain, fld.values.copy(), fld.normalized,
                           fld.provenance, fld.constant)
    out = smooth_bilateral_graph(fld.values, adjacency.face_neighbors,
                                 iterations, value_sigma)
    if fld.normalized:
        out = np.clip(out, 0.0, 1.0)
    return ScalarField(fld.domain, out, fld.normalized, fld.provenance, fld.constant)
