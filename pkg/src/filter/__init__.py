# src/filter/__init__.py
from .filter_matrix import (
    FilterMatrix, relaxed_loss, fit_filter, derive_code, derive_layers, compression_ratio,
    encode_filter, decode_filter, write_filter, read_filter, storage_accounting,
)

__all__ = [
    'FilterMatrix', 'relaxed_loss', 'fit_filter', 'derive_code', 'derive_layers', 'compression_ratio',
    'encode_filter', 'decode_filter', 'write_filter', 'read_filter', 'storage_accounting',
]
