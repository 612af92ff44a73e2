# src/models/__init__.py
from .layers import (
    ModelDims, LayerNormParams, FeedForward, SgatParams, FusionLayerParams, FusionOutput,
    at_v, at_p, sgat, temporal_attention, spatial_attention, fusion_layer,
    FUSION_VARIANTS, TransformerBlockParams, graph_position_features, transformer_block, fuse,
)
from .stvh import StvhParams, StvhOutput, HashingModel, StvhModel, pvf_layer, pvf_stack, hash_code, stvh_forward
from .mstvh import MstvhParams, MultiFocusOutput, MstvhModel, o_mfat, g_mfat, msf_layer, mstvh_forward
from .checkpoint import build_model, save_checkpoint, read_manifest, load_checkpoint

__all__ = [
    'ModelDims', 'LayerNormParams', 'FeedForward', 'SgatParams', 'FusionLayerParams', 'FusionOutput',
    'at_v', 'at_p', 'sgat', 'temporal_attention', 'spatial_attention', 'fusion_layer',
    'FUSION_VARIANTS', 'TransformerBlockParams', 'graph_position_features', 'transformer_block', 'fuse',
    'StvhParams', 'StvhOutput', 'HashingModel', 'StvhModel', 'pvf_layer', 'pvf_stack', 'hash_code', 'stvh_forward',
    'MstvhParams', 'MultiFocusOutput', 'MstvhModel', 'o_mfat', 'g_mfat', 'msf_layer', 'mstvh_forward',
    'build_model', 'save_checkpoint', 'read_manifest', 'load_checkpoint',
]
