"""meshseg: shape-diameter fields and k-way graph-cut mesh segmentation."""

from .mesh import (
    Adjacency,
    ManifoldReport,
    Mesh,
    MeshError,
    NonManifoldError,
    ParseError,
    build_adjacency,
    dihedral_angle,
    face_geometry,
    load_mesh,
    load_obj,
    load_ply,
    save_obj,
    save_ply,
    validate_manifold,
)
from .partition import PartitionParams, Segmentation
from .pipeline import Pipeline, PipelineConfig, SessionCache
from .sampling import SampleSet, poisson_disk_sample, sample_mesh
from .shdf import (
    ScalarField,
    ShdfParams,
    build_accel,
    compute_shdf_field,
    normalize_log,
    smooth_anisotropic,
)

__version__ = "0.1.0"

__all__ = [
    "Adjacency",
    "ManifoldReport",
    "Mesh",
    "MeshError",
    "NonManifoldError",
    "ParseError",
    "PartitionParams",
    "Pipeline",
    "PipelineConfig",
    "SampleSet",
    "ScalarField",
    "Segmentation",
    "SessionCache",
    "ShdfParams",
    "build_accel",
    "build_adjacency",
    "compute_shdf_field",
    "dihedral_angle",
    "face_geometry",
    "load_mesh",
    "load_obj",
    "load_ply",
    "normalize_log",
    "poisson_disk_sample",
    "sample_mesh",
    "save_obj",
    "save_ply",
    "smooth_anisotropic",
    "validate_manifold",
    "__version__",
]
