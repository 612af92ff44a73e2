# src/frontend/__init__.py
from .generator import SceneSample, generate_scene, action_paces
from .roi import roi_align, roi_features, vectorize, VectorizerParams, ROI_SIZE
from .dataset import (
    SceneDataset, PreparedSample, Batch,
    generate_dataset, save_dataset, load_dataset, prepare_samples, collate, iterate_batches,
    encode_array, decode_array, write_array, read_array, write_precomputed_features,
)
from .probe import pooled_roi_features, linear_probe_accuracy

__all__ = [
    'SceneSample', 'generate_scene', 'action_paces',
    'roi_align', 'roi_features', 'vectorize', 'VectorizerParams', 'ROI_SIZE',
    'SceneDataset', 'PreparedSample', 'Batch',
    'generate_dataset', 'save_dataset', 'load_dataset', 'prepare_samples', 'collate', 'iterate_batches',
    'encode_array', 'decode_array', 'write_array', 'read_array', 'write_precomputed_features',
    'pooled_roi_features', 'linear_probe_accuracy',
]
