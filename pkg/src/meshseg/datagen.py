"""Synthetic training data: procedural deformation, tessellation, remeshing,
and (graph, reference-field) pair assembly.

Variants come from smooth radial-basis displacement handles plus an optional
regional bend, standing in for a blend-shape/pose pipeline; tessellation and
tangential remeshing perturbations make the learned mapping robust to how a
shape happens to be meshed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh, build_adjacency, face_geometry
from .network import GraphInput, build_graph_input
from .sampling import default_radius, sample_mesh
from .shdf import (
    ScalarField,
    ShdfParams,
    build_accel,
    normalize_log,
    shdf_at_point,
    smooth_bilateral_graph,
)

_LOGGER = logging.getLogger(__name__)

MAX_DISPLACEMENT_FACTOR = 0.3   # of bbox diagonal; keeps variants from folding
TARGET_SMOOTH_KNN = 8           # sample-graph degree for target smoothing


class DatasetError(Exception):
    pass


@dataclass
class DeformSpec:
    """Deformation recipe: RBF handles plus an optional regional bend.

    handle_count handles are drawn per variant: each has a center on the
    surface, an influence radius, a displacement vector and a falloff
    exponent. Displacements are clamped to MAX_DISPLACEMENT_FACTOR of the
    bounding-box diagonal.
    """

    handle_count: int = 4
    radius_range: tuple = (0.15, 0.4)        # fraction of bbox diagonal
    displacement_range: tuple = (0.02, 0.12)  # fraction of bbox diagonal
    falloff_exponent: float = 2.0
    bend_max_angle: float = 0.0               # radians; 0 disables the bend
    seed: int = 0


@dataclass
class TrainPair:
    graph: GraphInput
    reference: np.ndarray
    provenance: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": 1,
                "graph": self.graph.to_json_dict(),
                "reference": self.reference.tolist(),
                "provenance": self.provenance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text) -> "TrainPair":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise DatasetError(f"unsupported pair version {doc.get('version')!r}")
        return cls(
            graph=GraphInput.from_json_dict(doc["graph"]),
            reference=np.array(doc["reference"], dtype=np.float64),
            provenance=doc.get("provenance", ""),
        )


def _rbf_displacement(vertices, center, radius, vector, exponent):
    d = np.linalg.norm(vertices - center, axis=1) / radius
    w = np.clip(1.0 - d * d, 0.0, None) ** exponent
    return w[:, None] * vector


def _bend(vertices, axis, angle, center):
    """Rotate vertices about ``axis`` through ``center`` by an angle ramping
    linearly along the axis coordinate (a soft regional pose change)."""
    axis = axis / np.linalg.norm(axis)
    rel = vertices - center
    coord = rel @ axis
    lo, hi = coord.min(), coord.max()
    if hi <= lo:
        return vertices
    t = (coord - lo) / (hi - lo)
    out = np.empty_like(vertices)
    for i, (p, ti) in enumerate(zip(rel, t)):
        a = angle * ti
        c, s = np.cos(a), np.sin(a)
        out[i] = (p * c + np.cross(axis, p) * s + axis * (axis @ p) * (1 - c))
    return out + center


def deform(mesh: Mesh, spec: DeformSpec, rng) -> Mesh:
    """One deformed variant; connectivity is untouched."""
    v = mesh.vertices
    diag = mesh.bbox_diagonal()
    disp = np.zeros_like(v)
    for _ in range(spec.handle_count):
        center = v[rng.integers(0, len(v))]
        radius = rng.uniform(*spec.radius_range) * diag
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        magnitude = rng.uniform(*spec.displacement_range) * diag
        disp += _rbf_displacement(v, center, radius, direction * magnitude,
                                  spec.falloff_exponent)
    limit = MAX_DISPLACEMENT_FACTOR * diag
    norms = np.linalg.norm(disp, axis=1)
    over = norms > limit
    if over.any():
        disp[over] *= (limit / norms[over])[:, None]
    out = v + disp
    if spec.bend_max_angle > 0.0:
        axis = rng.normal(size=3)
        angle = rng.uniform(-spec.bend_max_angle, spec.bend_max_angle)
        out = _bend(out, axis, angle, out.mean(axis=0))
    return Mesh(out, mesh.faces.copy(), drop_degenerate=False)


def generate_variants(base: Mesh, spec: DeformSpec, count: int,
                      seed: int = None, redraw_budget: int = 5) -> list:
    """``count`` deformed copies of ``base`` with identical connectivity.

    A variant whose deformation created degenerate faces is redrawn (at most
    ``redraw_budget`` times each) before giving up on that slot.
    """
    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        for attempt in range(redraw_budget + 1):
            candidate = deform(base, spec, rng)
            if _face_areas_ok(candidate):
                out.append(candidate)
                break
            _LOGGER.warning("variant %d attempt %d degenerate; redrawing",
                            i, attempt)
        else:
            raise DatasetError(f"variant {i}: all redraws degenerate")
    return out


def _face_areas_ok(mesh):
    _, _, areas = face_geometry(mesh)
    return bool(len(areas) == mesh.n_faces and (areas > 1e-14).all())


def tessellate(mesh: Mesh, levels: int) -> Mesh:
    """Midpoint 4-to-1 subdivision ``levels`` times; the surface itself is
    unchanged (new vertices sit on existing faces)."""
    if levels < 0:
        raise ValueError("levels must be >= 0")
    v = mesh.vertices
    f = mesh.faces
    for _ in range(levels):
        verts = list(map(tuple, v))
        cache = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                verts.append(tuple((np.asarray(verts[a]) + np.asarray(verts[b])) / 2.0))
                cache[key] = len(verts) - 1
            return cache[key]

        out = []
        for a, b, c in f:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        v = np.array(verts, dtype=np.float64)
        f = np.array(out, dtype=np.int64)
    return Mesh(v, f, drop_degenerate=False)


def remesh_perturb(mesh: Mesh, jitter: float = 0.2, flip_fraction: float = 0.1,
                   seed: int = 0) -> Mesh:
    """Tangential vertex jitter plus random valid interior edge flips.

    ``jitter`` is a fraction of the local mean incident edge length, < 0.5.
    Flips are applied only when both resulting triangles are non-degenerate
    and the flipped edge does not already exist, preserving manifoldness.
    """
    if not (0.0 <= jitter < 0.5):
        raise ValueError("jitter must be in [0, 0.5)")
    rng = np.random.default_rng(seed)
    adjacency = build_adjacency(mesh)
    v = mesh.vertices.copy()
    f = mesh.faces.copy()

    if jitter > 0.0:
        edge_vec = v[adjacency.edges[:, 0]] - v[adjacency.edges[:, 1]]
        edge_len = np.linalg.norm(edge_vec, axis=1)
        local = np.zeros(len(v))
        degree = np.zeros(len(v))
        for (a, b), L in zip(adjacency.edges, edge_len):
            local[a] += L
            local[b] += L
            degree[a] += 1
            degree[b] += 1
        local = local / np.maximum(degree, 1)

        normals = _vertex_normals(mesh)
        rand = rng.normal(size=v.shape)
        rand -= normals * (rand * normals).sum(axis=1)[:, None]  # tangential
        norms = np.linalg.norm(rand, axis=1)
        rand /= np.maximum(norms, 1e-12)[:, None]
        amount = rng.uniform(0.0, jitter, size=len(v)) * local
        v = v + rand * amount[:, None]

    if flip_fraction > 0.0:
        f = _random_edge_flips(v, f, flip_fraction, rng)
    return Mesh(v, f, drop_degenerate=False)


def _vertex_normals(mesh):
    _, face_n, areas = face_geometry(mesh)
    out = np.zeros_like(mesh.vertices)
    for fi, (a, b, c) in enumerate(mesh.faces):
        w = face_n[fi] * areas[fi]
        out[a] += w
        out[b] += w
        out[c] += w
    norms = np.linalg.norm(out, axis=1)
    return out / np.maximum(norms, 1e-12)[:, None]


def _random_edge_flips(v, faces, fraction, rng):
    faces = faces.copy()
    adjacency = build_adjacency(Mesh(v, faces, drop_degenerate=False))
    interior = adjacency.interior_edges()
    n_try = int(len(interior) * fraction)
    if n_try == 0:
        return faces
    chosen = rng.choice(interior, size=n_try, replace=False)
    edge_set = {tuple(e) for e in adjacency.edges}
    flipped_faces = set()
    for eid in chosen:
        a, b = adjacency.edges[eid]
        fa, fb = adjacency.edge_faces[eid]
        if fa in flipped_faces or fb in flipped_faces:
            continue
        c = _third_vertex(faces[fa], a, b)
        d = _third_vertex(faces[fb], a, b)
        key = (min(c, d), max(c, d))
        if key in edge_set:
            continue
        # candidate triangles after flipping (a,b) -> (c,d)
        ta = _rewind(faces[fa], a, b, c, d, first=True)
        tb = _rewind(faces[fb], b, a, d, c, first=False)
        if _area2(v, ta) < 1e-14 or _area2(v, tb) < 1e-14:
            continue
        faces[fa] = ta
        faces[fb] = tb
        edge_set.discard((min(a, b), max(a, b)))
        edge_set.add(key)
        flipped_faces.update((fa, fb))
    return faces


def _third_vertex(face, a, b):
    for x in face:
        if x != a and x != b:
            return int(x)
    raise DatasetError("degenerate face in flip")


def _rewind(face, a, b, c, d, first):
    # keep the original winding: replace b (resp. a) with d in each triangle
    out = list(face)
    out[out.index(b if first else a)] = d if first else c
    return out


def _area2(v, tri):
    a, b, c = tri
    return np.linalg.norm(np.cross(v[b] - v[a], v[c] - v[a]))


# ---------------------------------------------------------------------------
# Pair assembly


def reference_values_at_samples(mesh: Mesh, samples, params: ShdfParams,
                                accel=None) -> np.ndarray:
    """Oracle diameter values at sample points, normalized and smoothed over
    the sample k-nearest-neighbor graph."""
    accel = build_accel(mesh) if accel is None else accel
    _, face_normals, _ = face_geometry(mesh)
    eps = 1e-4 * mesh.bbox_diagonal()
    raw = np.empty(samples.n_samples)
    for i, (p, host) in enumerate(zip(samples.positions, samples.host_faces)):
        n = face_normals[host]
        tangent = mesh.vertices[mesh.faces[host][1]] - mesh.vertices[mesh.faces[host][0]]
        rng = np.random.default_rng([params.seed, 1_000_003 + i])
        raw[i] = shdf_at_point(mesh, accel, p - n * eps, -n, params,
                               rng=rng, tangent=tangent, t_min=eps)
    missing = ~np.isfinite(raw)
    if missing.all():
        raise DatasetError("no sample produced a reference value")
    if missing.any():
        raw[missing] = raw[~missing].mean()
    fld = normalize_log(ScalarField("per_sample", raw), params.normalization_alpha)
    values = fld.values
    if params.smoothing_iterations > 0 and samples.n_samples > 1:
        k = min(TARGET_SMOOTH_KNN, samples.n_samples - 1)
        tree = cKDTree(samples.positions)
        _, idx = tree.query(samples.positions, k=k + 1)
        neighbor_lists = [row[1:].tolist() for row in np.atleast_2d(idx)]
        values = smooth_bilateral_graph(values, neighbor_lists,
                                        params.smoothing_iterations, 0.1)
        values = np.clip(values, 0.0, 1.0)
    return values


def build_training_pairs(meshes, radius: float = None,
                         params: ShdfParams = None, seed: int = 0) -> list:
    """(GraphInput, reference) pairs for a list of meshes, shuffled
    deterministically. Meshes whose stages fail are skipped with a log."""
    params = ShdfParams(smoothing_iterations=2) if params is None else params
    pairs = []
    for mi, mesh in enumerate(meshes):
        try:
            r = default_radius(mesh) if radius is None else radius
            samples = sample_mesh(mesh, r, seed=seed + mi)
            graph = build_graph_input(samples, mesh)
            ref = reference_values_at_samples(mesh, samples, params)
            if len(ref) != graph.n_nodes:
                raise DatasetError("reference/node count mismatch")
            if not np.isfinite(ref).all():
                raise DatasetError("non-finite reference values")
            pairs.append(TrainPair(graph, ref, provenance=f"mesh_{mi}"))
        except Exception as exc:  # per-mesh isolation
            _LOGGER.warning("skipping mesh %d: %s", mi, exc)
    rng = np.random.default_rng(seed)
    rng.shuffle(pairs)
    return pairs


def save_dataset(pairs, directory, manifest_extra=None):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, pair in enumerate(pairs):
        name = f"pair_{i:05d}.json"
        (directory / name).write_text(pair.to_json())
        names.append(name)
    manifest = {"version": 1, "pairs": names}
    if manifest_extra:
        manifest.update(manifest_extra)
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True))


def load_dataset(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("version") != 1:
        raise DatasetError("unsupported dataset version")
    pairs = [TrainPair.from_json((directory / name).read_text())
             for name in manifest["pairs"]]
    return [(p.graph, p.reference) for p in pairs]
