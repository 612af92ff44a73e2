# src/frontend/probe.py
from typing import Sequence
import numpy as np

from .dataset import PreparedSample


def pooled_roi_features(samples: Sequence[PreparedSample], d_v: int) -> np.ndarray:
    """RoI-признаки, усреднённые по объектам, кадрам и ячейкам сетки: (M, d_v)"""
    rows = []
    for sample in samples:
        roi = sample.roi.reshape(sample.roi.shape[0], sample.roi.shape[1], d_v, -1)
        rows.append(roi.mean(axis=(0, 1, 3)))
    return np.stack(rows)


def linear_probe_accuracy(train_x: np.ndarray, train_y: np.ndarray, test_x: np.ndarray,
                          test_y: np.ndarray, ridge: float = 1e-2) -> float:
    """Точность линейного зонда (ридж-регрессия на one-hot метки)"""
    mean = train_x.mean(axis=0)
    scale = train_x.std(axis=0) + 1e-12
    x = np.hstack([(train_x - mean) / scale, np.ones((len(train_x), 1))])
    classes = int(max(train_y.max(), test_y.max())) + 1
    targets = np.eye(classes)[train_y]
    weights = np.linalg.solve(x.T @ x + ridge * np.eye(x.shape[1]), x.T @ targets)

    x_test = np.hstack([(test_x - mean) / scale, np.ones((len(test_x), 1))])
    predicted = (x_test @ weights).argmax(axis=1)
    return float((predicted == test_y).mean())
