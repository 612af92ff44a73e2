# src/training/__init__.py
from .trainer import (
    METRICS_FILE, METRIC_KEYS, compute_losses, encode_samples, predict_activity,
    split_validation, load_metrics, TrainResult, Trainer,
)
from .pipeline import (
    dataset_for_run, check_dims, train, encode, activity_accuracy, fit_filter_file, compress_codes,
    derive_codes_file, compression_report, read_layer, load_index, load_queries, evaluate_files,
    write_class_hamming, attention_dump, PipelineResult, run_pipeline,
)

__all__ = [
    'METRICS_FILE', 'METRIC_KEYS', 'compute_losses', 'encode_samples', 'predict_activity',
    'split_validation', 'load_metrics', 'TrainResult', 'Trainer',
    'dataset_for_run', 'check_dims', 'train', 'encode', 'activity_accuracy', 'fit_filter_file',
    'compress_codes', 'derive_codes_file', 'compression_report', 'read_layer', 'load_index',
    'load_queries', 'evaluate_files', 'write_class_hamming', 'attention_dump', 'PipelineResult',
    'run_pipeline',
]
