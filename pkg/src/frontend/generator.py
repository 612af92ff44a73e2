# src/frontend/generator.py
"""
Синтетические сцены вместо реального видео.

Траектории строятся по шаблонам групповых активностей, карты признаков -
гладкие поля, в которых статистика внутри бокса объекта определяется
внешностью (общей для сцены) и действием объекта. Внешность восстанавливается
по признакам, активность - только по траекториям вместе с признаками.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple
import numpy as np

from ..graphs.boxes import BoxTrajectorySet
from ..utils.config import GeneratorConfig
from ..utils.errors import ConfigError

COURT_AMPLITUDE = 0.5
SCENE_FIELD_AMPLITUDE = 0.2
ACTION_AMPLITUDE = 0.6
MASK_SOFTNESS = 0.35


@dataclass
class SceneSample:
    """Одна синтетическая сцена: траектории, метки и карты признаков (T, d_v, W', H')"""

    traj: BoxTrajectorySet
    activity_label: int
    action_labels: np.ndarray
    appearance_label: int
    feature_maps: np.ndarray
    rng_seed: int
    video_id: int = 0

    @property
    def labels(self) -> Dict[str, int]:
        return {
            "activity": int(self.activity_label),
            "appearance": int(self.appearance_label),
            "video-id": int(self.video_id),
        }


@lru_cache(maxsize=8)
def _palettes(palette_seed: int, P: int, C_act: int, d_v: int) -> Tuple[np.ndarray, np.ndarray]:
    """Фиксированные векторы внешностей (P, d_v) и действий (C_act, d_v)"""
    rng = np.random.default_rng(palette_seed)
    appearance = rng.normal(0.0, 1.0, size=(P, d_v))
    actions = rng.normal(0.0, ACTION_AMPLITUDE, size=(C_act, d_v))
    return appearance, actions


def _smooth_field(rng: np.random.Generator, d_v: int, coords: np.ndarray, scene_size: float,
                  amplitude: float, waves: int = 3) -> np.ndarray:
    """Сумма низкочастотных косинусов на сетке центров пикселей -> (d_v, W', H')"""
    freqs = rng.uniform(0.3, 1.5, size=(d_v, waves, 2))
    phases = rng.uniform(0.0, 2 * np.pi, size=(d_v, waves))
    weights = rng.normal(0.0, amplitude / np.sqrt(waves), size=(d_v, waves))
    x = coords[:, None] / scene_size
    y = coords[None, :] / scene_size
    arg = 2 * np.pi * (freqs[..., 0, None, None] * x + freqs[..., 1, None, None] * y) + phases[..., None, None]
    return (weights[..., None, None] * np.cos(arg)).sum(axis=1)


@lru_cache(maxsize=8)
def _court_field(palette_seed: int, d_v: int, map_size: int, scene_size: float) -> np.ndarray:
    """Общая для всех сцен «площадка»: признаки зависят от положения в сцене"""
    rng = np.random.default_rng(palette_seed + 1)
    coords = (np.arange(map_size) + 0.5) * scene_size / map_size
    return _smooth_field(rng, d_v, coords, scene_size, COURT_AMPLITUDE)


def action_paces(C_act: int) -> np.ndarray:
    """Темп движения для каждого действия: от 0.5 до 1.5"""
    if C_act == 1:
        return np.array([1.0])
    return 0.5 + np.arange(C_act) / (C_act - 1)


def _unit(angle: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def _template_centers(template: str, rng: np.random.Generator, n: int, t: int,
                      scene: float, paces: np.ndarray) -> np.ndarray:
    """Центры объектов (N, T, 2) по шаблону активности"""
    u = np.linspace(0.0, 1.0, t)
    travel = 0.17 * scene * paces  # пройденный путь пропорционален темпу
    anchor = scene / 2 + rng.uniform(-0.08, 0.08, size=2) * scene
    angles = rng.uniform(0.0, 2 * np.pi, size=n)

    if template == "converge":
        near = 0.04 * scene
        progress = 1 - (1 - u) ** 2  # замедление к концу
        radius = near + travel[:, None] * (1 - progress[None, :])
        return anchor + radius[..., None] * _unit(angles)[:, None, :]

    if template == "disperse":
        near = 0.04 * scene
        progress = u ** 2  # ускорение к концу
        radius = near + travel[:, None] * progress[None, :]
        return anchor + radius[..., None] * _unit(angles)[:, None, :]

    if template == "queue":
        theta = rng.uniform(0.0, np.pi)
        spacing = 0.11 * scene
        offsets = (np.arange(n) - (n - 1) / 2) * spacing
        end = anchor + offsets[:, None] * _unit(np.array(theta))[None, :]
        start = end - travel[:, None] * _unit(angles)
        return start[:, None, :] + (end - start)[:, None, :] * u[None, :, None]

    if template == "cross":
        theta = rng.uniform(0.0, 2 * np.pi)
        axis = _unit(np.array(theta))
        perp = _unit(np.array(theta + np.pi / 2))
        side = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
        lane = (rng.uniform(-0.1, 0.1, size=n) + 0.06 * side) * scene
        start = anchor - side[:, None] * travel[:, None] / 2 * axis + lane[:, None] * perp
        velocity = side[:, None] * travel[:, None] * axis
        return start[:, None, :] + velocity[:, None, :] * u[None, :, None]

    if template == "follow":
        theta = rng.uniform(0.0, 2 * np.pi)
        axis = _unit(np.array(theta))
        perp = _unit(np.array(theta + np.pi / 2))
        order = np.arange(n) - (n - 1) / 2
        lateral = rng.uniform(-0.03, 0.03, size=n) * scene
        start = anchor - 0.12 * scene * axis - order[:, None] * 0.08 * scene * axis + lateral[:, None] * perp
        return start[:, None, :] + travel[:, None, None] * u[None, :, None] * axis

    if template == "scatter":
        spread = rng.uniform(-0.15, 0.15, size=(n, 2)) * scene
        start = anchor + spread
        return start[:, None, :] + travel[:, None, None] * u[None, :, None] * _unit(angles)[:, None, :]

    raise ConfigError(f"Неизвестный шаблон активности: {template}")


def _trajectory(template: str, rng: np.random.Generator, config: GeneratorConfig,
                action_labels: np.ndarray) -> BoxTrajectorySet:
    n, t, scene = config.N, config.T, config.scene_size
    paces = action_paces(config.C_act)[action_labels]
    centers = _template_centers(template, rng, n, t, scene, paces)
    centers = centers + rng.normal(0.0, config.trajectory_noise, size=centers.shape)

    sizes = np.stack([
        rng.uniform(0.07, 0.1, size=n) * scene,
        rng.uniform(0.1, 0.13, size=n) * scene,
    ], axis=-1)
    half = sizes[:, None, :] / 2
    margin = 1e-3 * scene
    centers = np.clip(centers, half + margin, scene - half - margin)
    boxes = np.concatenate([centers - half, centers + half], axis=-1)
    return BoxTrajectorySet(boxes, scene, scene)


def _soft_mask(coords: np.ndarray, low: np.ndarray, high: np.ndarray) -> np.ndarray:
    """Сглаженный индикатор отрезка [low, high] на сетке coords -> (..., len(coords))"""
    left = 1.0 / (1.0 + np.exp(-(coords - low[..., None]) / MASK_SOFTNESS))
    right = 1.0 / (1.0 + np.exp(-(high[..., None] - coords) / MASK_SOFTNESS))
    return left * right


def _feature_maps(rng: np.random.Generator, config: GeneratorConfig, traj: BoxTrajectorySet,
                  appearance_label: int, action_labels: np.ndarray) -> np.ndarray:
    d_v, size, scene = config.d_v, config.map_size, config.scene_size
    appearance, actions = _palettes(config.palette_seed, config.P, config.C_act, d_v)
    coords = (np.arange(size) + 0.5) * scene / size

    background = _court_field(config.palette_seed, d_v, size, scene)
    background = background + _smooth_field(rng, d_v, coords, scene, SCENE_FIELD_AMPLITUDE)

    boxes = traj.boxes  # (N, T, 4)
    mask_x = _soft_mask(coords, boxes[..., 0], boxes[..., 2])  # (N, T, W')
    mask_y = _soft_mask(coords, boxes[..., 1], boxes[..., 3])  # (N, T, H')
    masks = mask_x[..., :, None] * mask_y[..., None, :]  # (N, T, W', H')

    # Вектор объекта на кадре: внешность сцены + действие объекта + шум
    content = appearance[appearance_label] + actions[action_labels][:, None, :]
    content = content + rng.normal(0.0, config.feature_noise, size=(config.N, config.T, d_v))

    maps = background[None] + np.einsum("ntc,ntxy->tcxy", content, masks)
    maps = maps + rng.normal(0.0, 0.5 * config.feature_noise, size=maps.shape)
    return maps


def generate_scene(config: GeneratorConfig, seed: int, appearance_label: Optional[int] = None,
                   activity_label: Optional[int] = None, video_id: int = 0) -> SceneSample:
    """
    Генерация одной сцены

    Args:
        config: параметры генератора
        seed: 64-битный seed сцены; одинаковый seed и конфигурация дают идентичную сцену
        appearance_label: внешность (если None - выбирается случайно)
        activity_label: активность (если None - выбирается случайно)
        video_id: идентификатор «видео» для протокола смешанного поиска
    """
    config.validate()
    rng = np.random.default_rng(seed)

    if activity_label is None:
        activity_label = int(rng.integers(config.A))
    if appearance_label is None:
        appearance_label = int(rng.integers(config.P))
    if not 0 <= activity_label < config.A:
        raise ConfigError(f"activity_label {activity_label} вне [0, {config.A})")
    if not 0 <= appearance_label < config.P:
        raise ConfigError(f"appearance_label {appearance_label} вне [0, {config.P})")

    action_labels = rng.integers(config.C_act, size=config.N)
    traj = _trajectory(config.templates[activity_label], rng, config, action_labels)
    feature_maps = _feature_maps(rng, config, traj, appearance_label, action_labels)

    return SceneSample(
        traj=traj,
        activity_label=activity_label,
        action_labels=action_labels.astype(np.int64),
        appearance_label=appearance_label,
        feature_maps=feature_maps,
        rng_seed=int(seed),
        video_id=video_id,
    )
