# src/frontend/roi.py
from dataclasses import dataclass
from typing import Tuple
import numpy as np

from ..core import Array, Parameter, as_array, matmul, reshape
from ..core.module import ParamGroup, uniform_init
from ..graphs.boxes import Box, BoxTrajectorySet
from ..utils.errors import ShapeError

ROI_SIZE = (5, 5)
SAMPLING_RATIO = 2


def _bilinear_weights(coords: np.ndarray, length: int) -> np.ndarray:
    """Матрица весов билинейной интерполяции (len(coords), length)"""
    coords = np.clip(coords, 0.0, length - 1)
    low = np.floor(coords).astype(np.int64)
    high = np.minimum(low + 1, length - 1)
    frac = coords - low
    weights = np.zeros((coords.size, length), dtype=np.float64)
    rows = np.arange(coords.size)
    np.add.at(weights, (rows, low), 1.0 - frac)
    np.add.at(weights, (rows, high), frac)
    return weights


def _sample_coords(low: float, high: float, bins: int) -> np.ndarray:
    """Точки регулярной подсетки (SAMPLING_RATIO на ось ячейки) в индексах пикселей"""
    step = (high - low) / (bins * SAMPLING_RATIO)
    # центр пикселя i лежит в координате i + 0.5
    return low + (np.arange(bins * SAMPLING_RATIO) + 0.5) * step - 0.5


def roi_align(feature_map: np.ndarray, box: Box, spatial_scale: float,
              out_size: Tuple[int, int] = ROI_SIZE) -> np.ndarray:
    """
    RoIAlign одного бокса

    Args:
        feature_map: (d_v, W', H')
        box: бокс в координатах сцены
        spatial_scale: масштаб сцена -> карта (W' / ширина сцены)
        out_size: размер выходной сетки

    Returns:
        (d_v, out_w, out_h): каждая ячейка - среднее 4 билинейных отсчётов
    """
    if feature_map.ndim != 3:
        raise ShapeError(f"roi_align: ожидалась карта (d_v, W', H'), получена {feature_map.shape}")
    _, width, height = feature_map.shape
    out_w, out_h = out_size

    wx = _bilinear_weights(_sample_coords(box.x1 * spatial_scale, box.x2 * spatial_scale, out_w), width)
    wy = _bilinear_weights(_sample_coords(box.y1 * spatial_scale, box.y2 * spatial_scale, out_h), height)
    sampled = np.einsum("sx,cxy,ry->csr", wx, feature_map, wy)
    return sampled.reshape(-1, out_w, SAMPLING_RATIO, out_h, SAMPLING_RATIO).mean(axis=(2, 4))


def roi_features(feature_maps: np.ndarray, traj: BoxTrajectorySet) -> np.ndarray:
    """RoI-признаки всех объектов всех кадров: (N, T, d_v, 5, 5)"""
    t, d_v, width, _ = feature_maps.shape
    if t != traj.num_frames:
        raise ShapeError(f"Карт признаков {t}, кадров траектории {traj.num_frames}")
    scale = width / traj.scene_width
    out = np.empty((traj.num_objects, t, d_v) + ROI_SIZE, dtype=np.float64)
    for obj in range(traj.num_objects):
        for frame in range(t):
            out[obj, frame] = roi_align(feature_maps[frame], traj.box(obj, frame), scale)
    return out


@dataclass
class VectorizerParams(ParamGroup):
    """Обучаемая линейная векторизация RoI: (d_v * 25) -> d"""

    weight: Parameter
    bias: Parameter

    @classmethod
    def init(cls, rng: np.random.Generator, d_v: int, d: int, prefix: str = "vectorizer") -> "VectorizerParams":
        fan_in = d_v * ROI_SIZE[0] * ROI_SIZE[1]
        return cls(
            weight=uniform_init(rng, f"{prefix}.weight", (fan_in, d), fan_in),
            bias=uniform_init(rng, f"{prefix}.bias", (d,), fan_in),
        )


def vectorize(roi, params: VectorizerParams) -> Array:
    """
    Векторизация RoI-признаков в FeatureTensor (..., N, T, d)

    Принимает (..., N, T, d_v, 5, 5) или уже развёрнутые (..., N, T, d_v * 25).
    """
    roi = as_array(roi)
    fan_in = params.weight.shape[0]
    if roi.ndim >= 5 and roi.shape[-2:] == ROI_SIZE:
        roi = reshape(roi, roi.shape[:-3] + (-1,))
    if roi.shape[-1] != fan_in:
        raise ShapeError(f"vectorize: признаки {roi.shape} не совпадают с весами {params.weight.shape}")
    return matmul(roi, params.weight) + params.bias
