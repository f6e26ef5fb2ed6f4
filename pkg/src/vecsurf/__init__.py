"""vecsurf: vector-field implicit surfaces toolkit.

Ground-truth field oracles (direction-to-surface and distance fields over
triangle meshes), the divergence level-set surface criterion, marching cubes
over vector fields, a desk-scale neural auto-decoder, and an evaluation
harness.
"""

from .geometry import (
    ClosestPointResult,
    MeshTransform,
    SpatialIndex,
    TriMesh,
    normalize_mesh,
    sample_surface_points,
)
from .meshio import load_mesh, save_obj

__all__ = [
    "ClosestPointResult",
    "MeshTransform",
    "SpatialIndex",
    "TriMesh",
    "normalize_mesh",
    "sample_surface_points",
    "load_mesh",
    "save_obj",
]

__version__ = "0.1.0"
