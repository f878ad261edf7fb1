#!/usr/bin/env python3
"""Surface downsampling and the resolution-agnostic graph encoding.

Poisson-disk samples carry their full-resolution vertex neighborhoods and a
relative density rho, so the same shape meshed at different resolutions
produces nearly the same graph -- only rho changes.
"""

import numpy as np

from meshseg import primitives
from meshseg.datagen import tessellate
from meshseg.network import build_graph_input
from meshseg.sampling import sample_mesh

base = primitives.dumbbell()
fine = tessellate(base, 1)  # same surface, 4x the triangles

for name, mesh in [("base mesh", base), ("tessellated 4x", fine)]:
    samples = sample_mesh(mesh, radius=0.35, seed=1)
    counts = np.array([len(ns) for ns in samples.neighbors])
    print(f"{name:15s} faces={mesh.n_faces:6d} samples={samples.n_samples:4d} "
          f"median neighborhood={int(np.median(counts)):4d} vertices "
          f"rho range [{samples.rho.min():.2f}, {samples.rho.max():.2f}]")

print()
print("sample counts stay put across the remesh; neighborhood sizes scale")
print("with resolution and rho absorbs that into a relative factor.")

print()
samples = sample_mesh(base, radius=0.35, seed=1)
graph = build_graph_input(samples, base)
print(f"graph: {graph.n_nodes} nodes x {graph.node_features.shape[1]} features, "
      f"{graph.n_edges} directed edges x {graph.edge_features.shape[1]} features")
print("features are rigid-motion invariant: radial distance, density,")
print("neighborhood statistics and normal-relative projections only.")

moved = primitives.Mesh(
    base.vertices @ np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]]).T + [5, 2, -1],
    base.faces,
)
moved_graph = build_graph_input(sample_mesh(moved, radius=0.35, seed=1), moved)
dev = np.abs(graph.node_features - moved_graph.node_features).max()
print(f"rotate+translate the mesh, same seed: max feature deviation {dev:.2e}")
