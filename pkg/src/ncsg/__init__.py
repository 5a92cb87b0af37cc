"""N-ary boolean operations on closed polyhedral meshes."""

from .boolfn import BoolFn, parse_expr
from .cli import PipelineOptions, pipeline, run_grouped
from .mesh_core import Mesh, RawMesh, signed_volume, topology_pass
from .mesh_io import read_mesh, write_mesh

__all__ = [
    "BoolFn", "Mesh", "PipelineOptions", "RawMesh", "parse_expr", "pipeline",
    "read_mesh", "run_grouped", "signed_volume", "topology_pass", "write_mesh",
]
