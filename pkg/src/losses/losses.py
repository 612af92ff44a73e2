# src/losses/losses.py
"""
Функции потерь STVH / M-STVH.

L_stvh  = L_cls + lambda1 * L_q + lambda2 * L_con
L_mstvh = L_cls + mu1 * L_q + mu2 * L_H + mu3 * L_recon
L_cls   = L_acty + action_weight * L_action
"""
from dataclasses import dataclass
from typing import Dict, Sequence, Union
import numpy as np

from ..core import (
    Array, Linear, ParamGroup, absolute, as_array, exp, log, log_softmax,
    matmul, mean, relu, softmax, sqrt, sum_, swapaxes,
)
from ..utils.config import LossWeights
from ..utils.errors import ShapeError

NORM_EPS = 1e-12

Scalar = Union[Array, float]


def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"Метки вне диапазона [0, {classes}): {labels.min()}..{labels.max()}")
    return np.eye(classes)[labels]


def ce_activity(logits, labels) -> Array:
    """Средняя по батчу кросс-энтропия; softmax применяется внутри"""
    logits = as_array(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"ce_activity: логиты {logits.shape} и метки {labels.shape} несовместимы")
    target = _one_hot(labels, logits.shape[1])
    return -sum_(log_softmax(logits, axis=-1) * target) / logits.shape[0]


def ce_action(logits, labels) -> Array:
    """Кросс-энтропия действий: логиты (B, N, C_act), метки (B, N)"""
    logits = as_array(logits)
    labels = np.asarray(labels)
    if logits.shape[:-1] != labels.shape:
        raise ShapeError(f"ce_action: логиты {logits.shape} и метки {labels.shape} несовместимы")
    return ce_activity(logits.reshape(-1, logits.shape[-1]), labels.reshape(-1))


def ce_activity_layered(per_layer_logits: Sequence, labels, w: Sequence[float]) -> Scalar:
    """Взвешенная сумма послойных кросс-энтропий"""
    if len(per_layer_logits) != len(w):
        raise ShapeError(f"ce_activity_layered: {len(per_layer_logits)} слоёв, {len(w)} весов")
    total: Scalar = 0.0
    for logits, weight in zip(per_layer_logits, w):
        total = total + weight * ce_activity(logits, labels)
    return total


def quantization_loss(h, b) -> Array:
    """
    sum_{i,j} exp(|h_i . h_j - b_i . b_j| / K) по батчу, включая диагональ

    b - константа: градиент идёт только в h.
    """
    h = as_array(h)
    b = np.asarray(b, dtype=np.float64)
    if h.ndim != 2 or h.shape != b.shape:
        raise ShapeError(f"quantization_loss: h {h.shape} и b {b.shape} несовместимы")
    k = h.shape[1]
    gram = matmul(h, swapaxes(h, 0, 1))
    return sum_(exp(absolute(gram - b @ b.T) / k))


@dataclass
class GcnParams(ParamGroup):
    """Двухслойная графовая свёртка C_act -> K -> K и выходное отображение K -> K"""

    first: Linear
    second: Linear
    readout: Linear

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, C_act: int, K: int) -> "GcnParams":
        return cls(
            first=Linear.init(rng, f"{prefix}.first", C_act, K),
            second=Linear.init(rng, f"{prefix}.second", K, K),
            readout=Linear.init(rng, f"{prefix}.readout", K, K),
        )


def normalized_adjacency(g_s: np.ndarray) -> np.ndarray:
    """
    Среднее G_S по времени + петли, симметричная нормализация D^-1/2 A D^-1/2

    Степени считаются по модулям (G_S может быть отрицательным).
    """
    adjacency = g_s.mean(axis=-3) + np.eye(g_s.shape[-1])
    degree = np.abs(adjacency).sum(axis=-1)
    scale = 1.0 / np.sqrt(np.maximum(degree, NORM_EPS))
    return adjacency * scale[..., :, None] * scale[..., None, :]


def relation_encode(action_logits, g_s, gcn: GcnParams) -> Array:
    """
    Кодирование отношений объектов: предсказанные действия как признаки узлов

    action_logits: (..., N, C_act), g_s: (..., T, N, N) -> (..., K)
    """
    action_logits = as_array(action_logits)
    g_s = np.asarray(g_s, dtype=np.float64)
    n = action_logits.shape[-2]
    if g_s.ndim < 3 or g_s.shape[-2:] != (n, n):
        raise ShapeError(f"relation_encode: граф {g_s.shape} не соответствует логитам {action_logits.shape}")

    adjacency = normalized_adjacency(g_s)
    nodes = softmax(action_logits, axis=-1)
    hidden = relu(gcn.first(matmul(adjacency, nodes)))
    hidden = relu(gcn.second(matmul(adjacency, hidden)))
    return gcn.readout(mean(hidden, axis=-2))


def _row_norms(x: Array) -> Array:
    return sqrt(sum_(x * x, axis=-1, keepdims=True)) + NORM_EPS


def contrastive_loss(a, b) -> Array:
    """
    sum_i log[(sum_j sim(a_i, b_j) + sim(a_j, b_i)) / sim(a_i, b_i)], sim = exp(cos)

    Сумма по j включает j = i, поэтому минимум - B * log 2.
    """
    a, b = as_array(a), as_array(b)
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"contrastive_loss: a {a.shape} и b {b.shape} несовместимы")
    if a.shape[0] < 2:
        raise ShapeError(f"contrastive_loss требует B >= 2, получено {a.shape[0]}")
    if not np.any(a.data) or not np.any(b.data):
        raise ValueError("contrastive_loss: вырожденный вход (все векторы нулевые)")

    cos = matmul(a / _row_norms(a), swapaxes(b / _row_norms(b), 0, 1))
    sim = exp(cos)
    numerator = sum_(sim, axis=1) + sum_(sim, axis=0)
    eye = np.eye(a.shape[0])
    # log(sim_ii) = cos_ii
    return sum_(log(numerator)) - sum_(cos * eye)


def recon_loss(f_roi, f_roi_hat) -> Array:
    """Среднеквадратичная ошибка реконструкции RoI-признаков"""
    f_roi = as_array(f_roi)
    f_roi_hat = as_array(f_roi_hat)
    if f_roi.shape != f_roi_hat.shape:
        raise ShapeError(f"recon_loss: формы {f_roi.shape} и {f_roi_hat.shape} не совпадают")
    diff = f_roi_hat - f_roi
    return mean(diff * diff)


def classification_loss(parts: Dict[str, Scalar], weights: LossWeights) -> Scalar:
    return parts["acty"] + weights.action_weight * parts["action"]


def total_stvh(parts: Dict[str, Scalar], weights: LossWeights) -> Scalar:
    """L_cls + lambda1 * L_q + lambda2 * L_con"""
    return classification_loss(parts, weights) + weights.lambda1 * parts["q"] + weights.lambda2 * parts["con"]


def total_mstvh(parts: Dict[str, Scalar], weights: LossWeights) -> Scalar:
    """L_cls + mu1 * L_q + mu2 * L_H + mu3 * L_recon"""
    return (classification_loss(parts, weights) + weights.mu1 * parts["q"]
            + weights.mu2 * parts["h"] + weights.mu3 * parts["recon"])
