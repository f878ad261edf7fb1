"""Procedural test geometry: cubes, icospheres, revolution solids, dumbbells."""

from __future__ import annotations

import numpy as np

from .mesh import Mesh


def cube(size: float = 1.0) -> Mesh:
    """Axis-aligned cube of edge ``size`` centered at the origin, 12 triangles."""
    s = size / 2.0
    v = np.array(
        [
            [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
            [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
        ]
    )
    quads = [
        [0, 3, 2, 1],  # bottom (-z)
        [4, 5, 6, 7],  # top (+z)
        [0, 1, 5, 4],  # -y
        [2, 3, 7, 6],  # +y
        [1, 2, 6, 5],  # +x
        [3, 0, 4, 7],  # -x
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return Mesh(v, np.array(faces))


def quad_strip(nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> Mesh:
    """Open planar grid in the z=0 plane, (nx*ny*2) triangles."""
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = (i + 1) * (ny + 1) + j
            faces.append([a, b, b + 1])
            faces.append([a, b + 1, a + 1])
    return Mesh(verts, np.array(faces))


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> Mesh:
    """Geodesic sphere from a subdivided icosahedron: 20 * 4**s faces."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        verts, faces = _subdivide_midpoint(verts, faces)
        verts /= np.linalg.norm(verts, axis=1)[:, None]
    return Mesh(verts * radius, faces)


def _subdivide_midpoint(verts, faces):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            va, vb = np.array(verts[a]), np.array(verts[b])
            verts.append(tuple((va + vb) / 2.0))
            cache[key] = len(verts) - 1
        return cache[key]

    out = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts, dtype=np.float64), np.array(out, dtype=np.int64)


def surface_of_revolution(profile_r, profile_z, segments: int = 48) -> Mesh:
    """Closed solid of revolution around the z axis.

    ``profile_r``/``profile_z`` trace the outline from the bottom pole to the
    top pole; the first and last radii must be ~0 (poles). Outward winding.
    """
    profile_r = np.asarray(profile_r, dtype=np.float64)
    profile_z = np.asarray(profile_z, dtype=np.float64)
    if profile_r[0] > 1e-12 or profile_r[-1] > 1e-12:
        raise ValueError("profile must start and end on the axis (r=0)")
    inner_r = profile_r[1:-1]
    inner_z = profile_z[1:-1]
    n_rows = len(inner_r)
    ang = 2.0 * np.pi * np.arange(segments) / segments
    cos_a, sin_a = np.cos(ang), np.sin(ang)

    verts = [np.array([0.0, 0.0, profile_z[0]])]  # bottom pole = vertex 0
    for r, z in zip(inner_r, inner_z):
        ring = np.column_stack([r * cos_a, r * sin_a, np.full(segments, z)])
        verts.extend(ring)
    verts.append(np.array([0.0, 0.0, profile_z[-1]]))  # top pole
    verts = np.array(verts)
    top = len(verts) - 1

    def ring_vertex(row, j):
        return 1 + row * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append([0, ring_vertex(0, j + 1), ring_vertex(0, j)])
    for row in range(n_rows - 1):
        for j in range(segments):
            a = ring_vertex(row, j)
            b = ring_vertex(row, j + 1)
            c = ring_vertex(row + 1, j)
            d = ring_vertex(row + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    for j in range(segments):
        faces.append([top, ring_vertex(n_rows - 1, j), ring_vertex(n_rows - 1, j + 1)])
    return Mesh(verts, np.array(faces))


def capped_cylinder(radius: float = 1.0, length: float = 10.0,
                    segments: int = 48, rings: int = 24, cap_rings: int = 8) -> Mesh:
    """Closed cylinder along z, from -length/2 to +length/2, with flat caps."""
    h = length / 2.0
    rr, zz = [0.0], [-h]
    for i in range(1, cap_rings + 1):  # bottom cap, growing radius
        rr.append(radius * i / cap_rings)
        zz.append(-h)
    for i in range(1, rings):  # side wall
        rr.append(radius)
        zz.append(-h + length * i / rings)
    for i in range(cap_rings, 0, -1):  # top cap, shrinking radius
        rr.append(radius * i / cap_rings)
        zz.append(h)
    rr.append(0.0)
    zz.append(h)
    return surface_of_revolution(rr, zz, segments)


def dumbbell(lobe_radius: float = 1.0, neck_radius: float = 0.1,
             lobe_offset: float = 1.6, segments: int = 48,
             arc_steps: int = 24, neck_steps: int = 8) -> Mesh:
    """Two spheres of ``lobe_radius`` at z = +-``lobe_offset`` joined by a
    cylinder of ``neck_radius``. Returns a closed manifold mesh.

    The inter-lobe neck occupies |z| < lobe_offset - sqrt(R^2 - r^2); faces
    in that band are the expected part boundary for a k=2 segmentation.
    """
    R, r, c = lobe_radius, neck_radius, lobe_offset
    if r >= R:
        raise ValueError("neck_radius must be smaller than lobe_radius")
    h = np.sqrt(R * R - r * r)  # axial distance from lobe center to junction ring
    if c <= h:
        raise ValueError("lobes overlap: need lobe_offset > sqrt(R^2 - r^2)")

    rr, zz = [0.0], [-c - R]
    # bottom sphere from south pole up to the junction ring
    ang0 = np.pi  # south pole (polar angle from +z)
    ang1 = np.arccos(h / R)  # polar angle at which radius = r
    for a in np.linspace(ang0, ang1, arc_steps)[1:]:
        rr.append(R * np.sin(a))
        zz.append(-c + R * np.cos(a))
    # neck
    z_lo, z_hi = -(c - h), (c - h)
    for z in np.linspace(z_lo, z_hi, neck_steps + 1)[1:]:
        rr.append(r)
        zz.append(z)
    # top sphere from junction ring to just below the north pole
    for a in np.linspace(np.pi - ang1, 0.0, arc_steps)[1:-1]:
        rr.append(R * np.sin(a))
        zz.append(c + R * np.cos(a))
    rr.append(0.0)
    zz.append(c + R)
    return surface_of_revolution(rr, zz, segments)


def dumbbell_neck_band(lobe_radius=1.0, neck_radius=0.1, lobe_offset=1.6,
                       margin=0.05):
    """|z| extent of the dumbbell neck, padded by ``margin`` of the junction gap."""
    h = np.sqrt(lobe_radius ** 2 - neck_radius ** 2)
    half = (lobe_offset - h) * (1.0 + margin)
    return -half, half


def tapered_pin(segments: int = 40, steps: int = 60, length: float = 4.0) -> Mesh:
    """Bowling-pin solid: a fat base lobe blending smoothly into a slim
    upper stem with a small knob. Thickness varies gradually along the axis,
    which makes it a friendly target for field regression tests.
    """
    z = np.linspace(0.0, length, steps)
    r = (1.0 * np.exp(-((z - 0.225 * length) / (0.275 * length)) ** 2)
         + 0.45 * np.exp(-((z - 0.825 * length) / (0.2 * length)) ** 2)
         + 0.08)
    r[0] = 0.0
    r[-1] = 0.0
    return surface_of_revolution(r, z, segments)


def torus(major: float = 1.0, minor: float = 0.35,
          segments_major: int = 32, segments_minor: int = 16) -> Mesh:
    u = 2 * np.pi * np.arange(segments_major) / segments_major
    v = 2 * np.pi * np.arange(segments_minor) / segments_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    verts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    faces = []
    for i in range(segments_major):
        for j in range(segments_minor):
            a = i * segments_minor + j
            b = ((i + 1) % segments_major) * segments_minor + j
            a2 = i * segments_minor + (j + 1) % segments_minor
            b2 = ((i + 1) % segments_major) * segments_minor + (j + 1) % segments_minor
            faces.append([a, b, b2])
            faces.append([a, b2, a2])
    return Mesh(verts, np.array(faces))


def add_radial_bumps(mesh: Mesh, centers, amplitude: float, radius: float) -> Mesh:
    """Push vertices outward along their radial direction near each center.

    Smooth falloff (1 - (d/radius)^2)^2 inside ``radius``; used to grow bump
    sub-structure on spheres for refinement tests.
    """
    v = mesh.vertices.copy()
    for center in np.atleast_2d(np.asarray(centers, dtype=np.float64)):
        d = np.linalg.norm(v - center, axis=1)
        w = np.clip(1.0 - (d / radius) ** 2, 0.0, None) ** 2
        direction = v - v.mean(axis=0)
        direction /= np.maximum(np.linalg.norm(direction, axis=1), 1e-12)[:, None]
        v += amplitude * w[:, None] * direction
    return Mesh(v, mesh.faces.copy(), drop_degenerate=False)
