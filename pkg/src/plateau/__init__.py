"""Soap-film clusters as volume-constrained surface-tension flow on region-labeled meshes."""

__version__ = "0.1.0"

from .curvature import AveragedArea, ConstantEdge, NaivePerRegion, parse_strategy
from .flow import FlowConfig, run_to_equilibrium, step
from .mmesh import MultiMaterialMesh, extract_junctions, read_mmm, write_mmm

__all__ = [
    "AveragedArea",
    "ConstantEdge",
    "FlowConfig",
    "MultiMaterialMesh",
    "NaivePerRegion",
    "extract_junctions",
    "parse_strategy",
    "read_mmm",
    "run_to_equilibrium",
    "step",
    "write_mmm",
]
