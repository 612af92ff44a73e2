# src/models/layers.py
"""
Строительные блоки слияния визуальных и позиционных признаков.

Признаки - строки: каждое аффинное отображение записывается как x @ W + b.
Внимание по оси взаимодействия (кадры для временного блока, объекты для
пространственного) - произведение визуального внимания AT_v и позиционного AT_p.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Union
import numpy as np

from ..core import Array, Parameter, as_array, layer_norm, matmul, relu, reshape, softmax, swapaxes
from ..core.module import Linear, ParamGroup, uniform_init
from ..utils.errors import ShapeError

FUSION_VARIANTS = ("msf", "bd", "ed")


@dataclass
class ModelDims:
    """Размерности модели"""

    N: int
    T: int
    d_v: int
    d: int
    K: int
    A: int
    C_act: int
    layers: int
    fusion: str = "msf"  # msf - слои слияния; bd / ed - обычный блок трансформера

    @classmethod
    def from_config(cls, run) -> "ModelDims":
        return cls(N=run.N, T=run.T, d_v=run.d_v, d=run.d, K=run.K, A=run.A, C_act=run.C_act, layers=run.layers,
                   fusion=run.fusion)


@dataclass
class LayerNormParams(ParamGroup):
    gain: Parameter
    bias: Parameter

    @classmethod
    def init(cls, prefix: str, d: int) -> "LayerNormParams":
        return cls(gain=Parameter(f"{prefix}.gain", np.ones(d)), bias=Parameter(f"{prefix}.bias", np.zeros(d)))

    def __call__(self, x) -> Array:
        return layer_norm(x, -1, self.gain, self.bias)


@dataclass
class FeedForward(ParamGroup):
    """Два аффинных отображения с ReLU, скрытая ширина 2d"""

    inner: Linear
    outer: Linear

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, d: int) -> "FeedForward":
        return cls(inner=Linear.init(rng, f"{prefix}.inner", d, 2 * d),
                   outer=Linear.init(rng, f"{prefix}.outer", 2 * d, d))

    def __call__(self, x) -> Array:
        return self.outer(relu(self.inner(x)))


@dataclass
class SgatParams(ParamGroup):
    """
    Веса разреженного графового внимания

    w1 - проекция значений (W1 в STVH, W_o / W_g в M-STVH), w2/w3 - запросы/ключи.
    Позиционный вес: свободная матрица L x L (кадры упорядочены) либо
    перестановочно-инвариантная форма alpha*I (объекты не упорядочены). Слагаемое beta*J/L
    из общего инвариантного вида сдвигает строку G x W на константу, и softmax его гасит.
    """

    w1: Parameter
    w2: Parameter
    w3: Parameter
    w_pos: Optional[Parameter] = None
    pos_alpha: Optional[Parameter] = None

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, d: int, length: int,
             exchangeable: bool, value_name: str = "w1") -> "SgatParams":
        params = cls(
            w1=uniform_init(rng, f"{prefix}.{value_name}", (d, d), d),
            w2=uniform_init(rng, f"{prefix}.w2", (d, d), d),
            w3=uniform_init(rng, f"{prefix}.w3", (d, d), d),
        )
        if exchangeable:
            params.pos_alpha = Parameter(f"{prefix}.pos_alpha", np.ones((1, 1)))
        else:
            params.w_pos = uniform_init(rng, f"{prefix}.w_pos", (length, length), length)
        return params

    def positional_weight(self, length: int) -> Array:
        if self.w_pos is not None:
            return self.w_pos
        return self.pos_alpha * np.eye(length)


def at_v(f, w2, w3) -> Array:
    """Визуальное внимание: softmax((f W2)(f W3)^T / sqrt(C)) по оси взаимодействия"""
    f = as_array(f)
    if f.ndim < 2 or f.shape[-1] != w2.shape[0] or w2.shape != w3.shape:
        raise ShapeError(f"at_v: признаки {f.shape} несовместимы с весами {w2.shape}, {w3.shape}")
    scale = 1.0 / np.sqrt(f.shape[-1])
    logits = matmul(matmul(f, w2), swapaxes(matmul(f, w3), -1, -2)) * scale
    return softmax(logits, axis=-1)


def at_p(g, w_pos) -> Array:
    """Позиционное внимание: softmax(G x W) по последней оси"""
    g = as_array(g)
    w_pos = as_array(w_pos)
    if g.ndim < 2 or g.shape[-1] != g.shape[-2] or w_pos.shape != g.shape[-2:]:
        raise ShapeError(f"at_p: граф {g.shape} несовместим с весом {w_pos.shape}")
    return softmax(matmul(g, w_pos), axis=-1)


def sgat(f, g, params: SgatParams, return_attention: bool = False):
    """
    SGAT(f, G) = Attention(f, G) (f W1), Attention = AT_v(f) x AT_p(G)

    f: (..., L, d), g: (..., L, L). Форма выхода совпадает с формой f.
    """
    f = as_array(f)
    g = as_array(g)
    if g.shape[-1] != f.shape[-2]:
        raise ShapeError(f"sgat: граф {g.shape} не соответствует признакам {f.shape}")
    attention = matmul(at_v(f, params.w2, params.w3), at_p(g, params.positional_weight(f.shape[-2])))
    out = matmul(attention, matmul(f, params.w1))
    if return_attention:
        return out, attention
    return out


def temporal_attention(f, g_t, params: SgatParams, return_attention: bool = False):
    """Внимание по кадрам для каждого объекта: f (..., N, T, d), g_t (..., N, T, T)"""
    return sgat(f, g_t, params, return_attention)


def spatial_attention(f, g_s, params: SgatParams, return_attention: bool = False):
    """Внимание по объектам для каждого кадра: f (..., N, T, d), g_s (..., T, N, N)"""
    out, attention = sgat(swapaxes(f, -3, -2), g_s, params, return_attention=True)
    out = swapaxes(out, -3, -2)
    if return_attention:
        return out, attention
    return out


@dataclass
class FusionLayerParams(ParamGroup):
    """Параметры одного слоя слияния: LayerNorm, временной и пространственный блоки, FFN (может отсутствовать)"""

    norm: LayerNormParams
    temporal: SgatParams
    spatial: SgatParams
    ffn: Optional[FeedForward] = None

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, dims: ModelDims,
             temporal_name: str = "temporal", spatial_name: str = "spatial",
             temporal_value: str = "w1", spatial_value: str = "w1", with_ffn: bool = True) -> "FusionLayerParams":
        return cls(
            norm=LayerNormParams.init(f"{prefix}.norm", dims.d),
            temporal=SgatParams.init(rng, f"{prefix}.{temporal_name}", dims.d, dims.T,
                                     exchangeable=False, value_name=temporal_value),
            spatial=SgatParams.init(rng, f"{prefix}.{spatial_name}", dims.d, dims.N,
                                    exchangeable=True, value_name=spatial_value),
            ffn=FeedForward.init(rng, f"{prefix}.ffn", dims.d) if with_ffn else None,
        )


@dataclass
class FusionOutput:
    """Выход слоя: итоговые признаки, выходы временного (f_T) и пространственного (f_S) путей"""

    out: Array
    f_t: Array
    f_s: Array
    attention: Dict[str, np.ndarray]


def fusion_layer(f, g_t, g_s, layer: FusionLayerParams) -> FusionOutput:
    """
    LayerNorm -> временное внимание (G_T) -> пространственное внимание (G_S) -> FFN

    Остаточные связи вокруг обоих блоков внимания и вокруг FFN. Без FFN выход равен f_S.
    """
    f = as_array(f)
    if f.ndim < 3 or f.shape[-1] != layer.norm.gain.shape[0]:
        raise ShapeError(f"Слой слияния: признаки {f.shape} не совпадают с d={layer.norm.gain.shape[0]}")

    normed = layer.norm(f)
    temporal, temporal_attn = temporal_attention(normed, g_t, layer.temporal, return_attention=True)
    f_t = normed + temporal
    spatial, spatial_attn = spatial_attention(f_t, g_s, layer.spatial, return_attention=True)
    f_s = f_t + spatial
    out = f_s + layer.ffn(f_s) if layer.ffn is not None else f_s
    return FusionOutput(out=out, f_t=f_t, f_s=f_s,
                        attention={"temporal": temporal_attn.data, "spatial": spatial_attn.data})


def graph_position_features(g_t, g_s) -> np.ndarray:
    """
    Позиционные признаки токена (объект, кадр): (..., N, T, T + N)

    Строка G_T объекта на этом кадре и строка G_S кадра для объекта, отсортированная
    по убыванию (не зависит от порядка остальных объектов).
    """
    g_t = as_array(g_t).data
    g_s = as_array(g_s).data
    if g_t.shape[-2] != g_s.shape[-3] or g_t.shape[-3] != g_s.shape[-1]:
        raise ShapeError(f"Графы G_T {g_t.shape} и G_S {g_s.shape} несовместимы")
    spatial = np.swapaxes(-np.sort(-g_s, axis=-1), -3, -2)
    return np.concatenate([g_t, spatial], axis=-1)


@dataclass
class TransformerBlockParams(ParamGroup):
    """
    Обычный блок трансформера над всеми N*T токенами вместо слоя слияния

    Проекция позиционных признаков графов прибавляется ко входу блока (bd)
    или к его выходу (ed).
    """

    norm: LayerNormParams
    query: Parameter
    key: Parameter
    value: Parameter
    ffn_norm: LayerNormParams
    ffn: FeedForward
    position: Linear
    placement: str = "bd"

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, dims: ModelDims, placement: str) -> "TransformerBlockParams":
        if placement not in ("bd", "ed"):
            raise ValueError(f"Неизвестное место позиционных признаков: {placement}")
        d = dims.d
        return cls(
            norm=LayerNormParams.init(f"{prefix}.norm", d),
            query=uniform_init(rng, f"{prefix}.query", (d, d), d),
            key=uniform_init(rng, f"{prefix}.key", (d, d), d),
            value=uniform_init(rng, f"{prefix}.value", (d, d), d),
            ffn_norm=LayerNormParams.init(f"{prefix}.ffn_norm", d),
            ffn=FeedForward.init(rng, f"{prefix}.ffn", d),
            position=Linear.init(rng, f"{prefix}.position", dims.T + dims.N, d),
            placement=placement,
        )


def transformer_block(f, g_t, g_s, block: TransformerBlockParams) -> FusionOutput:
    """Self-attention по всем токенам сцены и FFN (pre-norm, с остаточными связями)"""
    f = as_array(f)
    d = block.norm.gain.shape[0]
    if f.ndim < 3 or f.shape[-1] != d:
        raise ShapeError(f"Блок трансформера: признаки {f.shape} не совпадают с d={d}")
    features = graph_position_features(g_t, g_s)
    if features.shape[-3:-1] != f.shape[-3:-1] or features.shape[-1] != block.position.weight.shape[0]:
        raise ShapeError(f"Позиционные признаки {features.shape} не соответствуют признакам {f.shape}")

    position = block.position(features)
    if block.placement == "bd":
        f = f + position
    n, t = f.shape[-3], f.shape[-2]
    tokens = reshape(f, f.shape[:-3] + (n * t, d))
    normed = block.norm(tokens)
    logits = matmul(matmul(normed, block.query), swapaxes(matmul(normed, block.key), -1, -2)) * (1.0 / np.sqrt(d))
    attention = softmax(logits, axis=-1)
    tokens = tokens + matmul(attention, matmul(normed, block.value))
    tokens = tokens + block.ffn(block.ffn_norm(tokens))
    out = reshape(tokens, f.shape)
    if block.placement == "ed":
        out = out + position
    return FusionOutput(out=out, f_t=out, f_s=out, attention={"tokens": attention.data})


LayerParams = Union[FusionLayerParams, TransformerBlockParams]


def fuse(f, g_t, g_s, layer: LayerParams) -> FusionOutput:
    """Один слой стека: слой слияния или блок трансформера"""
    if isinstance(layer, TransformerBlockParams):
        return transformer_block(f, g_t, g_s, layer)
    return fusion_layer(f, g_t, g_s, layer)


def init_layers(rng: np.random.Generator, dims: ModelDims, **names) -> List["LayerParams"]:
    """Стек из dims.layers слоёв выбранного вида слияния"""
    if dims.fusion not in FUSION_VARIANTS:
        raise ValueError(f"Неизвестный вид слияния: {dims.fusion}")
    if dims.fusion == "msf":
        return [FusionLayerParams.init(rng, f"layers.{i}", dims, **names) for i in range(dims.layers)]
    return [TransformerBlockParams.init(rng, f"layers.{i}", dims, dims.fusion) for i in range(dims.layers)]
