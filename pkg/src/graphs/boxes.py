# src/graphs/boxes.py
from dataclasses import dataclass
import numpy as np

from ..utils.errors import ShapeError

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Box:
    """Ось-ориентированный прямоугольник в координатах сцены"""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"Box с неположительной площадью: {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


@dataclass
class BoxTrajectorySet:
    """Боксы N объектов на T кадрах: массив (N, T, 4) в порядке x1, y1, x2, y2"""

    boxes: np.ndarray
    scene_width: float
    scene_height: float

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64)
        self.validate()

    @property
    def num_objects(self) -> int:
        return self.boxes.shape[0]

    @property
    def num_frames(self) -> int:
        return self.boxes.shape[1]

    def box(self, obj: int, frame: int) -> Box:
        return Box(*self.boxes[obj, frame])

    def validate(self) -> None:
        if self.boxes.ndim != 3 or self.boxes.shape[2] != 4:
            raise ShapeError(f"Ожидалась форма (N, T, 4), получена {self.boxes.shape}")
        n, t, _ = self.boxes.shape
        if n < 1 or t < 2:
            raise ShapeError(f"Нужно N >= 1 и T >= 2, получено N={n}, T={t}")
        if not np.all(np.isfinite(self.boxes)):
            raise ValueError("Координаты боксов содержат NaN/Inf")
        x1, y1, x2, y2 = np.moveaxis(self.boxes, -1, 0)
        if np.any(x1 >= x2) or np.any(y1 >= y2):
            raise ValueError("Есть боксы с неположительной площадью")
        tol = 1e-9 * max(self.scene_width, self.scene_height)
        if (np.any(x1 < -tol) or np.any(y1 < -tol)
                or np.any(x2 > self.scene_width + tol) or np.any(y2 > self.scene_height + tol)):
            raise ValueError(f"Боксы выходят за пределы сцены {self.scene_width}x{self.scene_height}")

    def centers(self) -> np.ndarray:
        """Центры боксов, форма (N, T, 2)"""
        return np.stack([
            (self.boxes[..., 0] + self.boxes[..., 2]) / 2,
            (self.boxes[..., 1] + self.boxes[..., 3]) / 2,
        ], axis=-1)


@dataclass
class RelationGraphs:
    """Временной граф G_T (N, T, T) и пространственный граф G_S (T, N, N)"""

    g_t: np.ndarray
    g_s: np.ndarray


def iou(a: Box, b: Box) -> float:
    """Intersection over union двух боксов"""
    return float(_pairwise_iou(a.as_array()[None], b.as_array()[None])[0, 0])


def _pairwise_iou(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """IoU всех пар: first (M, 4), second (L, 4) -> (M, L)"""
    ix1 = np.maximum(first[:, None, 0], second[None, :, 0])
    iy1 = np.maximum(first[:, None, 1], second[None, :, 1])
    ix2 = np.minimum(first[:, None, 2], second[None, :, 2])
    iy2 = np.minimum(first[:, None, 3], second[None, :, 3])
    inter = np.clip(ix2 - ix1, 0.0, None) * np.clip(iy2 - iy1, 0.0, None)
    area_first = (first[:, 2] - first[:, 0]) * (first[:, 3] - first[:, 1])
    area_second = (second[:, 2] - second[:, 0]) * (second[:, 3] - second[:, 1])
    union = area_first[:, None] + area_second[None, :] - inter
    return inter / union


def build_temporal_graph(traj: BoxTrajectorySet) -> np.ndarray:
    """
    Временной граф: IoU бокса объекта между кадрами

    Только предшествующие кадры влияют на последующие: ненулевые значения
    строго под диагональю (t2 < t1), на диагонали 1.
    """
    n, t = traj.num_objects, traj.num_frames
    past = np.tril(np.ones((t, t), dtype=bool), k=-1)
    graph = np.zeros((n, t, t), dtype=np.float64)
    for obj in range(n):
        overlaps = _pairwise_iou(traj.boxes[obj], traj.boxes[obj])
        graph[obj] = np.where(past, overlaps, 0.0)
        np.fill_diagonal(graph[obj], 1.0)
    return graph


def build_spatial_graph(traj: BoxTrajectorySet) -> np.ndarray:
    """
    Пространственный граф: 1 - нормированное евклидово расстояние между объектами кадра

    Квадраты разностей координат делятся на дисперсию координаты по объектам кадра
    и усредняются по 4 координатам. Значения не обрезаются и могут быть отрицательными.
    """
    if traj.num_objects < 2:
        raise ShapeError("Пространственный граф требует N >= 2")

    boxes = np.transpose(traj.boxes, (1, 0, 2))  # (T, N, 4)
    std = np.maximum(boxes.std(axis=1), STD_FLOOR)  # (T, 4)
    diff = boxes[:, :, None, :] - boxes[:, None, :, :]  # (T, N, N, 4)
    scaled = (diff * diff) / (std * std)[:, None, None, :]
    graph = 1.0 - np.sqrt(scaled.mean(axis=-1))
    for frame in graph:
        np.fill_diagonal(frame, 1.0)
    return graph


def build_relation_graphs(traj: BoxTrajectorySet) -> RelationGraphs:
    return RelationGraphs(g_t=build_temporal_graph(traj), g_s=build_spatial_graph(traj))
