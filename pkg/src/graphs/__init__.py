# src/graphs/__init__.py
from .boxes import (
    Box, BoxTrajectorySet, RelationGraphs, iou,
    build_temporal_graph, build_spatial_graph, build_relation_graphs,
)
from .trajectory_io import encode_trajectory, decode_trajectory, write_trajectory, read_trajectory

__all__ = [
    'Box', 'BoxTrajectorySet', 'RelationGraphs', 'iou',
    'build_temporal_graph', 'build_spatial_graph', 'build_relation_graphs',
    'encode_trajectory', 'decode_trajectory', 'write_trajectory', 'read_trajectory',
]
