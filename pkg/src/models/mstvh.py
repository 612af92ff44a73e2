# src/models/mstvh.py
"""
M-STVH: стек слоёв MSF, каждый из которых выдаёт свой хеш-код.

Слой MSF: LayerNorm -> O-MFAT (по кадрам, G_T) -> G-MFAT (по объектам, G_S) -> FFN.
Мелкие слои дают коды, в которых преобладает внешность, глубокие - активность.
Вместо слоёв MSF стек может состоять из обычных блоков трансформера (fusion = bd / ed).
Декодер восстанавливает RoI-признаки по выходу первого слоя.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional
import numpy as np

from .layers import (
    FusionLayerParams, LayerParams, ModelDims, SgatParams, fuse, fusion_layer, init_layers, spatial_attention,
    temporal_attention,
)
from .stvh import HashingModel, hash_code
from ..core import Array, Linear, ParamGroup, as_array, mean
from ..frontend.roi import ROI_SIZE, VectorizerParams
from ..losses.losses import GcnParams
from ..utils.errors import ShapeError
from ..utils.helpers import sign_pm1


@dataclass
class MstvhParams(ParamGroup):
    layers: List[LayerParams]
    hash_heads: List[Linear]
    activity_heads: List[Linear]
    action_head: Linear
    relation: GcnParams
    decoder: Optional[Linear] = None
    vectorizer: Optional[VectorizerParams] = None

    @classmethod
    def init(cls, dims: ModelDims, seed: int, use_vectorizer: bool = True) -> "MstvhParams":
        rng = np.random.default_rng(seed)
        roi_width = dims.d_v * ROI_SIZE[0] * ROI_SIZE[1]
        layers = init_layers(rng, dims, temporal_name="o_mfat", spatial_name="g_mfat",
                             temporal_value="w_o", spatial_value="w_g")
        return cls(
            layers=layers,
            hash_heads=[Linear.init(rng, f"hash_heads.{i}", dims.d, dims.K) for i in range(dims.layers)],
            activity_heads=[Linear.init(rng, f"activity_heads.{i}", dims.K, dims.A) for i in range(dims.layers)],
            action_head=Linear.init(rng, "action_head", dims.d, dims.C_act),
            relation=GcnParams.init(rng, "relation", dims.C_act, dims.K),
            decoder=Linear.init(rng, "decoder", dims.d, roi_width) if use_vectorizer else None,
            vectorizer=VectorizerParams.init(rng, dims.d_v, dims.d) if use_vectorizer else None,
        )


@dataclass
class MultiFocusOutput:
    h_per_layer: List[Array]                 # Y x (B, K)
    b_per_layer: np.ndarray                  # (B, Y, K) int8
    activity_logits_per_layer: List[Array]   # Y x (B, A)
    action_logits: Array                     # (B, N, C_act)
    recon: Optional[Array] = None            # (B, N, T, d_v * 25)
    attention: List[Dict[str, np.ndarray]] = field(default_factory=list)

    @property
    def recon_maps(self) -> Optional[np.ndarray]:
        """Реконструкция в форме (..., N, T, d_v, 5, 5)"""
        if self.recon is None:
            return None
        return self.recon.data.reshape(self.recon.shape[:-1] + (-1,) + ROI_SIZE)


def o_mfat(f, g_t, params: SgatParams) -> Array:
    """(AT_v(f) x AT_p(G_T)) (f W_o) для каждого объекта по оси кадров"""
    return temporal_attention(f, g_t, params)


def g_mfat(f, g_s, params: SgatParams) -> Array:
    """(AT_v(f) x AT_p(G_S)) (f W_g) для каждого кадра по оси объектов"""
    return spatial_attention(f, g_s, params)


def msf_layer(f, g_t, g_s, layer: FusionLayerParams) -> Array:
    return fusion_layer(f, g_t, g_s, layer).out


def mstvh_forward(f_v, g_t, g_s, params: MstvhParams, training: bool = True) -> MultiFocusOutput:
    """
    Прямой проход M-STVH

    После каждого слоя tau: h_tau = tanh(F_tau(AVG f_tau)), b_tau = sign(h_tau),
    логиты активности слоя по h_tau (обучение) или b_tau (инференс).
    """
    if len(params.layers) < 2:
        raise ShapeError(f"M-STVH требует не менее двух слоёв, получено {len(params.layers)}")
    f = as_array(f_v)
    if f.ndim < 3:
        raise ShapeError(f"M-STVH: ожидались признаки (..., N, T, d), получено {f.shape}")

    hashes, codes, logits, attention = [], [], [], []
    first_layer: Optional[Array] = None
    for layer, hash_head, activity_head in zip(params.layers, params.hash_heads, params.activity_heads):
        result = fuse(f, g_t, g_s, layer)
        f = result.out
        if first_layer is None:
            first_layer = f
        attention.append(result.attention)

        h = hash_code(f, hash_head)
        b = sign_pm1(h.data)
        hashes.append(h)
        codes.append(b)
        logits.append(activity_head(h if training else b.astype(np.float64)))

    action_logits = params.action_head(mean(f, axis=-2))
    recon = params.decoder(first_layer) if params.decoder is not None else None

    return MultiFocusOutput(
        h_per_layer=hashes,
        b_per_layer=np.stack(codes, axis=-2),
        activity_logits_per_layer=logits,
        action_logits=action_logits,
        recon=recon,
        attention=attention,
    )


class MstvhModel(HashingModel):
    """Модель M-STVH"""

    kind = "mstvh"
    params_type = MstvhParams

    def __init__(self, dims: ModelDims, seed: int = 0, use_vectorizer: bool = True,
                 params: Optional[MstvhParams] = None):
        if dims.layers < 2:
            raise ShapeError(f"M-STVH требует не менее двух слоёв, получено {dims.layers}")
        super().__init__(dims, seed, use_vectorizer, params)

    def forward(self, batch, training: bool = True) -> MultiFocusOutput:
        f_v = self.embed(batch.roi, batch.features)
        return mstvh_forward(f_v, batch.g_t, batch.g_s, self.params, training)

    def codes(self, output: MultiFocusOutput) -> np.ndarray:
        """Коды всех слоёв: (B, Y, K)"""
        return output.b_per_layer
