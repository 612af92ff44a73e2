# src/losses/__init__.py
from .losses import (
    NORM_EPS, GcnParams, ce_activity, ce_action, ce_activity_layered, quantization_loss,
    normalized_adjacency, relation_encode, contrastive_loss, recon_loss,
    classification_loss, total_stvh, total_mstvh,
)

__all__ = [
    'NORM_EPS', 'GcnParams', 'ce_activity', 'ce_action', 'ce_activity_layered', 'quantization_loss',
    'normalized_adjacency', 'relation_encode', 'contrastive_loss', 'recon_loss',
    'classification_loss', 'total_stvh', 'total_mstvh',
]
