# src/retrieval/__init__.py
from .codes import (
    pack_codes, unpack_codes, encode_codes, decode_codes, write_codes, read_codes,
    code_payload_bytes, write_labels, read_labels,
)
from .index import pack_words, popcount_distance, hamming, RetrievalResult, HammingIndex, query_topk, brute_force_topk
from .metrics import (
    QuerySet, EvalReport, average_precision_at_k, evaluate, map_at_k, precision_at_k,
    mean_hamming_by_class, write_report, read_report, reports_frame,
)

__all__ = [
    'pack_codes', 'unpack_codes', 'encode_codes', 'decode_codes', 'write_codes', 'read_codes',
    'code_payload_bytes', 'write_labels', 'read_labels',
    'pack_words', 'popcount_distance', 'hamming', 'RetrievalResult', 'HammingIndex', 'query_topk',
    'brute_force_topk',
    'QuerySet', 'EvalReport', 'average_precision_at_k', 'evaluate', 'map_at_k', 'precision_at_k',
    'mean_hamming_by_class', 'write_report', 'read_report', 'reports_frame',
]
