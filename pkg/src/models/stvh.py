# src/models/stvh.py
"""
STVH: стек слоёв PVF (позиционно-визуальное слияние) + хеш- и классификационные головы.

h = tanh(AVG_{объекты, время} F_h(f_S)), b = sign(h). Классификатор активности
читает h при обучении и b при инференсе; действия классифицируются по
усреднённому по времени выходу временного пути f_T.

Обе головы читают пути последнего слоя, поэтому последний слой PVF создаётся без FFN.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple
import numpy as np

from .layers import FusionLayerParams, FusionOutput, ModelDims, fusion_layer
from ..core import Array, Linear, ParamGroup, Parameter, as_array, mean, tanh
from ..frontend.roi import VectorizerParams, vectorize
from ..losses.losses import GcnParams
from ..utils.errors import ConfigError, ShapeError
from ..utils.helpers import sign_pm1


@dataclass
class StvhParams(ParamGroup):
    """Все обучаемые параметры STVH в фиксированном порядке"""

    layers: List[FusionLayerParams]
    hash_head: Linear
    activity_head: Linear
    action_head: Linear
    relation: GcnParams
    vectorizer: Optional[VectorizerParams] = None

    @classmethod
    def init(cls, dims: ModelDims, seed: int, use_vectorizer: bool = True) -> "StvhParams":
        if dims.fusion != "msf":
            raise ConfigError(f"STVH поддерживает только слои PVF, получено fusion={dims.fusion}")
        rng = np.random.default_rng(seed)
        return cls(
            layers=[FusionLayerParams.init(rng, f"layers.{i}", dims, with_ffn=i < dims.layers - 1)
                    for i in range(dims.layers)],
            hash_head=Linear.init(rng, "hash_head", dims.d, dims.K),
            activity_head=Linear.init(rng, "activity_head", dims.K, dims.A),
            action_head=Linear.init(rng, "action_head", dims.d, dims.C_act),
            relation=GcnParams.init(rng, "relation", dims.C_act, dims.K),
            vectorizer=VectorizerParams.init(rng, dims.d_v, dims.d) if use_vectorizer else None,
        )


@dataclass
class StvhOutput:
    h: Array                    # (B, K), вещественная релаксация
    b: np.ndarray               # (B, K), int8 из {-1, +1}
    activity_logits: Array      # (B, A)
    action_logits: Array        # (B, N, C_act)
    f_t: Array
    f_s: Array
    attention: List[Dict[str, np.ndarray]] = field(default_factory=list)


def pvf_layer(f, g_t, g_s, layer: FusionLayerParams) -> Array:
    """LayerNorm -> SGAT(G_T) -> SGAT(G_S) -> FFN с остаточными связями"""
    return fusion_layer(f, g_t, g_s, layer).out


def pvf_stack(f, g_t, g_s, layers: List[FusionLayerParams]) -> Tuple[Array, List[FusionOutput]]:
    """Последовательность слоёв PVF; пустой стек возвращает f без изменений"""
    f = as_array(f)
    outputs = []
    for layer in layers:
        result = fusion_layer(f, g_t, g_s, layer)
        outputs.append(result)
        f = result.out
    return f, outputs


def hash_code(features: Array, head: Linear) -> Array:
    """tanh от среднего по объектам и времени выхода хеш-головы: (..., N, T, d) -> (..., K)"""
    return tanh(mean(head(features), axis=(-3, -2)))


def stvh_forward(f_v, g_t, g_s, params: StvhParams, training: bool = True) -> StvhOutput:
    """
    Прямой проход STVH

    Args:
        f_v: признаки (..., N, T, d)
        g_t: временные графы (..., N, T, T)
        g_s: пространственные графы (..., T, N, N)
        params: параметры модели
        training: классификатор активности читает h (True) или b (False)
    """
    if not params.layers:
        raise ShapeError("STVH требует хотя бы один слой PVF")
    f = as_array(f_v)
    if f.ndim < 3:
        raise ShapeError(f"STVH: ожидались признаки (..., N, T, d), получено {f.shape}")

    _, outputs = pvf_stack(f, g_t, g_s, params.layers)
    result = outputs[-1]
    attention = [output.attention for output in outputs]

    h = hash_code(result.f_s, params.hash_head)
    b = sign_pm1(h.data)
    activity_logits = params.activity_head(h if training else b.astype(np.float64))
    action_logits = params.action_head(mean(result.f_t, axis=-2))

    return StvhOutput(h=h, b=b, activity_logits=activity_logits, action_logits=action_logits,
                      f_t=result.f_t, f_s=result.f_s, attention=attention)


class HashingModel:
    """Общая часть моделей: параметры, векторизация RoI, выбор входа"""

    kind = ""
    params_type = None

    def __init__(self, dims: ModelDims, seed: int = 0, use_vectorizer: bool = True, params=None):
        self.dims = dims
        self.seed = seed
        self.params = params or self.params_type.init(dims, seed, use_vectorizer)

    @property
    def use_vectorizer(self) -> bool:
        return self.params.vectorizer is not None

    def parameters(self) -> List[Parameter]:
        return self.params.parameters()

    def embed(self, roi: Optional[np.ndarray], features: Optional[np.ndarray]) -> Array:
        """FeatureTensor из RoI-признаков или готовых внешних признаков"""
        if features is not None:
            if features.shape[-1] != self.dims.d:
                raise ShapeError(f"Внешние признаки {features.shape} не совпадают с d={self.dims.d}")
            return as_array(features)
        if self.params.vectorizer is None:
            raise ShapeError("Модель обучена на внешних признаках, RoI-вход не поддерживается")
        return vectorize(roi, self.params.vectorizer)

    def forward(self, batch, training: bool = True):
        raise NotImplementedError


class StvhModel(HashingModel):
    """Модель STVH"""

    kind = "stvh"
    params_type = StvhParams

    def forward(self, batch, training: bool = True) -> StvhOutput:
        f_v = self.embed(batch.roi, batch.features)
        return stvh_forward(f_v, batch.g_t, batch.g_s, self.params, training)

    def codes(self, output: StvhOutput) -> np.ndarray:
        """Коды для экспорта: (B, 1, K)"""
        return output.b[:, None, :]
