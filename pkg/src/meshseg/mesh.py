"""Triangle mesh container, OBJ/PLY I/O, adjacency and differential quantities."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

_LOGGER = logging.getLogger(__name__)


class MeshError(Exception):
    """Invalid mesh structure (bad indices, unsupported content)."""


class ParseError(MeshError):
    """Malformed OBJ/PLY input. Carries a line or byte offset when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonManifoldError(MeshError):
    """An edge is shared by more than two faces."""

    def __init__(self, edges):
        self.edges = list(edges)
        shown = ", ".join(str(e) for e in self.edges[:8])
        more = "" if len(self.edges) <= 8 else f" (+{len(self.edges) - 8} more)"
        super().__init__(f"non-manifold edges: {shown}{more}")


class Mesh:
    """Indexed triangle surface.

    Vertices are float64 (n, 3); faces are int64 (m, 3) vertex-index triples.
    Faces with repeated indices or zero area are dropped at construction with
    a warning, so downstream geometry never sees degenerate triangles.
    """

    def __init__(self, vertices, faces, normals=None, drop_degenerate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if faces.size and (faces.ndim != 2 or faces.shape[1] != 3):
            raise MeshError(f"faces must be (m, 3), got {faces.shape}")
        faces = faces.reshape(-1, 3)
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(self.vertices):
                bad = np.where((faces < 0) | (faces >= len(self.vertices)))[0][0]
                raise MeshError(
                    f"face {bad} references vertex outside [0, {len(self.vertices)})"
                )
        if drop_degenerate and faces.size:
            faces = self._drop_degenerate(faces)
        self.faces = faces
        self.vertex_normals = None
        if normals is not None:
            normals = np.asarray(normals, dtype=np.float64)
            if normals.shape == self.vertices.shape:
                self.vertex_normals = normals

    def _drop_degenerate(self, faces):
        distinct = (
            (faces[:, 0] != faces[:, 1])
            & (faces[:, 1] != faces[:, 2])
            & (faces[:, 0] != faces[:, 2])
        )
        v = self.vertices
        cross = np.cross(
            v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]]
        )
        area2 = np.linalg.norm(cross, axis=1)
        keep = distinct & (area2 > 0.0)
        dropped = int((~keep).sum())
        if dropped:
            _LOGGER.warning("dropped %d degenerate face(s)", dropped)
        return faces[keep]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def copy(self):
        return Mesh(self.vertices.copy(), self.faces.copy(), drop_degenerate=False)

    def __repr__(self):
        return f"Mesh(V={self.n_vertices}, F={self.n_faces})"


@dataclass
class Adjacency:
    """Edge table, face adjacency and vertex one-rings of a mesh.

    ``edge_faces[i]`` lists the faces incident to ``edges[i]`` (a sorted
    vertex pair). ``face_neighbors[f]`` lists faces sharing an edge with f.
    Immutable by convention once built; safe to share across workers.
    """

    edges: np.ndarray                  # (e, 2) sorted vertex pairs
    edge_faces: list                   # per edge: list of incident face ids
    edge_index: dict                   # (v0, v1) sorted tuple -> edge id
    face_neighbors: list               # per face: list of adjacent face ids
    vertex_rings: list                 # per vertex: sorted unique neighbors
    boundary_edges: np.ndarray = field(default=None)     # edge ids with 1 face
    non_manifold_edges: np.ndarray = field(default=None)  # edge ids with >2 faces

    @property
    def n_edges(self):
        return len(self.edges)

    def interior_edges(self):
        """Edge ids with exactly two incident faces."""
        return np.array(
            [i for i, fs in enumerate(self.edge_faces) if len(fs) == 2], dtype=np.int64
        )


def build_adjacency(mesh: Mesh, strict: bool = True) -> Adjacency:
    """Build the edge table, face adjacency and one-rings of a mesh.

    With ``strict`` (the default) an edge incident to more than two faces
    raises :class:`NonManifoldError`; pass ``strict=False`` to obtain an
    adjacency for diagnostics (see :func:`validate_manifold`).
    """
    F = mesh.faces
    if len(F) == 0:
        empty = np.zeros((0, 2), dtype=np.int64)
        return Adjacency(empty, [], {}, [], [[] for _ in range(mesh.n_vertices)],
                         np.zeros(0, np.int64), np.zeros(0, np.int64))

    halfedges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    owners = np.tile(np.arange(len(F), dtype=np.int64), 3)
    keys = np.sort(halfedges, axis=1)
    edges, inverse = np.unique(keys, axis=0, return_inverse=True)

    edge_faces = [[] for _ in range(len(edges))]
    for he, eid in enumerate(inverse):
        edge_faces[eid].append(int(owners[he]))

    bad = [i for i, fs in enumerate(edge_faces) if len(fs) > 2]
    if bad and strict:
        raise NonManifoldError([tuple(edges[i]) for i in bad])

    face_neighbors = [[] for _ in range(len(F))]
    for fs in edge_faces:
        if len(fs) == 2:
            a, b = fs
            face_neighbors[a].append(b)
            face_neighbors[b].append(a)

    rings = [set() for _ in range(mesh.n_vertices)]
    for a, b in edges:
        rings[a].add(int(b))
        rings[b].add(int(a))
    vertex_rings = [sorted(r) for r in rings]

    edge_index = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    boundary = np.array(
        [i for i, fs in enumerate(edge_faces) if len(fs) == 1], dtype=np.int64
    )
    return Adjacency(
        edges, edge_faces, edge_index, face_neighbors, vertex_rings,
        boundary, np.array(bad, dtype=np.int64),
    )


@dataclass
class ManifoldReport:
    is_closed: bool
    boundary_edge_count: int
    non_manifold_edge_count: int
    euler_characteristic: int

    @property
    def genus(self):
        """Genus of a closed surface; None when the mesh is not closed."""
        if not self.is_closed:
            return None
        return (2 - self.euler_characteristic) // 2


def validate_manifold(mesh: Mesh, adjacency: Adjacency) -> ManifoldReport:
    """Report closedness, boundary/non-manifold edge counts and Euler number."""
    nb = len(adjacency.boundary_edges) if adjacency.boundary_edges is not None else 0
    nm = (
        len(adjacency.non_manifold_edges)
        if adjacency.non_manifold_edges is not None
        else 0
    )
    used = np.zeros(mesh.n_vertices, dtype=bool)
    if mesh.n_faces:
        used[mesh.faces.ravel()] = True
    v = int(used.sum())
    euler = v - adjacency.n_edges + mesh.n_faces
    return ManifoldReport(
        is_closed=(nb == 0 and nm == 0 and mesh.n_faces > 0),
        boundary_edge_count=nb,
        non_manifold_edge_count=nm,
        euler_characteristic=euler,
    )


def face_geometry(mesh: Mesh):
    """Per-face centroids, unit normals (winding order) and areas.

    Returns (centroids, normals, areas). Construction already drops
    zero-area faces, so areas are strictly positive here.
    """
    v = mesh.vertices
    f = mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    centroids = (p0 + p1 + p2) / 3.0
    cross = np.cross(p1 - p0, p2 - p0)
    norms = np.linalg.norm(cross, axis=1)
    areas = 0.5 * norms
    normals = cross / np.maximum(norms, 1e-300)[:, None]
    return centroids, normals, areas


def dihedral_angle(mesh: Mesh, adjacency: Adjacency, edge) -> float:
    """Interior angle between the two faces at an edge, measured outside
    the surface: pi for coplanar, < pi for convex edges, > pi for concave.
    """
    key = (int(min(edge)), int(max(edge)))
    eid = adjacency.edge_index.get(key)
    if eid is None:
        raise MeshError(f"no such edge {key}")
    incident = adjacency.edge_faces[eid]
    if len(incident) != 2:
        raise MeshError(f"edge {key} has {len(incident)} incident face(s), need 2")
    fa, fb = incident
    _, normals, _ = _two_face_geometry(mesh, fa, fb)
    na, nb = normals
    cosv = float(np.clip(np.dot(na, nb), -1.0, 1.0))
    sinv = float(np.linalg.norm(np.cross(na, nb)))
    phi = np.arctan2(sinv, cosv)  # angle between normals, [0, pi]
    # Convex when the opposite face bends away from this face's outward normal.
    p_edge = mesh.vertices[key[0]]
    cb = mesh.vertices[mesh.faces[fb]].mean(axis=0)
    side = float(np.dot(na, cb - p_edge))
    if abs(side) < 1e-12:
        return float(np.pi)
    return float(np.pi - phi) if side < 0 else float(np.pi + phi)


def _two_face_geometry(mesh, fa, fb):
    v = mesh.vertices
    out = []
    for fi in (fa, fb):
        a, b, c = mesh.faces[fi]
        n = np.cross(v[b] - v[a], v[c] - v[a])
        out.append(n / np.linalg.norm(n))
    return (fa, fb), out, None


def interior_dihedrals(mesh: Mesh, adjacency: Adjacency):
    """Vectorized dihedral angles for every interior edge.

    Returns (edge_ids, face_pairs (e, 2), edge_lengths, angles) with the same
    convention as :func:`dihedral_angle`.
    """
    edge_ids = adjacency.interior_edges()
    if len(edge_ids) == 0:
        return edge_ids, np.zeros((0, 2), np.int64), np.zeros(0), np.zeros(0)
    pairs = np.array([adjacency.edge_faces[i] for i in edge_ids], dtype=np.int64)
    edges = adjacency.edges[edge_ids]
    v = mesh.vertices
    lengths = np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1)

    _, normals, _ = face_geometry(mesh)
    na = normals[pairs[:, 0]]
    nb = normals[pairs[:, 1]]
    cosv = np.clip(np.einsum("ij,ij->i", na, nb), -1.0, 1.0)
    sinv = np.linalg.norm(np.cross(na, nb), axis=1)
    phi = np.arctan2(sinv, cosv)

    centroids_b = v[mesh.faces[pairs[:, 1]]].mean(axis=1)
    p_edge = v[edges[:, 0]]
    side = np.einsum("ij,ij->i", na, centroids_b - p_edge)
    angles = np.where(side < 0, np.pi - phi, np.pi + phi)
    angles[np.abs(side) < 1e-12] = np.pi
    return edge_ids, pairs, lengths, angles


# ---------------------------------------------------------------------------
# OBJ


def load_obj(text) -> Mesh:
    """Parse ASCII OBJ (v/f records). Polygons are fan-triangulated."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    vertices = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError("vertex record needs 3 coordinates", lineno)
            try:
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError:
                raise ParseError(f"bad vertex coordinates {parts[1:4]}", lineno)
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face record needs at least 3 vertices", lineno)
            idx = []
            for tok in parts[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ParseError(f"bad face index {tok!r}", lineno)
                if i <= 0:
                    raise ParseError(f"face index must be positive, got {i}", lineno)
                idx.append(i - 1)
            for j in range(1, len(idx) - 1):  # fan triangulation
                faces.append([idx[0], idx[j], idx[j + 1]])
        # other records (vn, vt, usemtl, ...) are ignored
    if not vertices:
        raise ParseError("no vertex records found")
    mesh_faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if mesh_faces.size and mesh_faces.max() >= len(vertices):
        raise MeshError(
            f"face index {int(mesh_faces.max()) + 1} exceeds vertex count {len(vertices)}"
        )
    return Mesh(np.array(vertices, dtype=np.float64), mesh_faces)


def save_obj(mesh: Mesh) -> str:
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def load_ply(data) -> Mesh:
    """Parse PLY, ASCII or binary-little-endian: vertex x/y/z plus face lists.

    Extra vertex or face properties are skipped. Face colors, when present,
    are returned on the mesh as ``face_colors``.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    header_end = data.find(b"end_header")
    if header_end < 0:
        raise ParseError("missing end_header")
    newline = data.find(b"\n", header_end)
    body = data[newline + 1:]
    header_lines = data[:header_end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []  # (name, count, [(prop_type, prop_name) or ('list', ct, it, name)])
    for lineno, line in enumerate(header_lines, start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "ply":
            continue
        if parts[0] == "format":
            fmt = parts[1]
            if fmt not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported PLY format {fmt!r}", lineno)
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before any element", lineno)
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append((parts[1], parts[2]))
        elif parts[0] in ("comment", "obj_info"):
            continue
    if fmt is None:
        raise ParseError("missing format line")

    vertices, faces, face_colors = [], [], []
    if fmt == "ascii":
        tokens = body.decode("ascii", errors="replace").split()
        pos = 0

        def take(n):
            nonlocal pos
            out = tokens[pos:pos + n]
            if len(out) < n:
                raise ParseError("unexpected end of ASCII PLY body")
            pos += n
            return out

        for name, count, props in elements:
            for _ in range(count):
                row = {}
                for p in props:
                    if p[0] == "list":
                        n = int(float(take(1)[0]))
                        row[p[3]] = [int(float(t)) for t in take(n)]
                    else:
                        row[p[1]] = float(take(1)[0])
                _ply_collect(name, row, vertices, faces, face_colors)
    else:
        off = 0

        def unpack(code, size):
            nonlocal off
            if off + size > len(body):
                raise ParseError("unexpected end of binary PLY body")
            val = struct.unpack_from("<" + code, body, off)[0]
            off += size
            return val

        for name, count, props in elements:
            for _ in range(count):
                row = {}
                for p in props:
                    if p[0] == "list":
                        ccode, csize = _PLY_TYPES[p[1]]
                        icode, isize = _PLY_TYPES[p[2]]
                        n = int(unpack(ccode, csize))
                        row[p[3]] = [int(unpack(icode, isize)) for _ in range(n)]
                    else:
                        code, size = _PLY_TYPES[p[0]]
                        row[p[1]] = float(unpack(code, size))
                _ply_collect(name, row, vertices, faces, face_colors)

    if not vertices:
        raise ParseError("PLY contains no vertices")
    mesh = Mesh(
        np.array(vertices, dtype=np.float64),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
    )
    if face_colors and len(face_colors) == len(faces):
        mesh.face_colors = np.array(face_colors, dtype=np.uint8)
    return mesh


def _ply_collect(element, row, vertices, faces, face_colors):
    if element == "vertex":
        try:
            vertices.append([row["x"], row["y"], row["z"]])
        except KeyError:
            raise ParseError("vertex element lacks x/y/z properties")
    elif element == "face":
        idx = row.get("vertex_indices", row.get("vertex_index"))
        if idx is None:
            raise ParseError("face element lacks vertex_indices")
        for j in range(1, len(idx) - 1):
            faces.append([idx[0], idx[j], idx[j + 1]])
            if "red" in row:
                face_colors.append([row["red"], row["green"], row["blue"]])


def save_ply(mesh: Mesh, binary: bool = True, face_colors=None) -> bytes:
    """Serialize to PLY. Binary uses double precision so positions round-trip
    bit-exactly. ``face_colors`` is an optional (n_faces, 3) uint8 array.
    """
    has_color = face_colors is not None
    if has_color:
        face_colors = np.asarray(face_colors, dtype=np.uint8)
        if face_colors.shape != (mesh.n_faces, 3):
            raise MeshError("face_colors must be (n_faces, 3)")
    header = ["ply"]
    header.append(
        "format binary_little_endian 1.0" if binary else "format ascii 1.0"
    )
    vtype = "double" if binary else "float"
    header += [
        f"element vertex {mesh.n_vertices}",
        f"property {vtype} x",
        f"property {vtype} y",
        f"property {vtype} z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
    ]
    if has_color:
        header += [
            "property uchar red",
            "property uchar green",
            "property uchar blue",
        ]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    if binary:
        parts = [head, mesh.vertices.astype("<f8").tobytes()]
        for fi, (a, b, c) in enumerate(mesh.faces):
            parts.append(struct.pack("<Biii", 3, a, b, c))
            if has_color:
                parts.append(face_colors[fi].tobytes())
        return b"".join(parts)

    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"{x:.9g} {y:.9g} {z:.9g}")
    for fi, (a, b, c) in enumerate(mesh.faces):
        row = f"3 {a} {b} {c}"
        if has_color:
            r, g, bl = face_colors[fi]
            row += f" {r} {g} {bl}"
        lines.append(row)
    return head + ("\n".join(lines) + "\n").encode("ascii")


def load_mesh(data, fmt=None) -> Mesh:
    """Load OBJ or PLY from bytes/str. ``fmt`` in {'obj', 'ply'} or sniffed."""
    if fmt is None:
        probe = data[:3] if isinstance(data, bytes) else data[:3].encode()
        fmt = "ply" if probe == b"ply" else "obj"
    fmt = fmt.lower()
    if fmt == "obj":
        return load_obj(data)
    if fmt == "ply":
        return load_ply(data)
    raise ParseError(f"unknown mesh format {fmt!r}")
