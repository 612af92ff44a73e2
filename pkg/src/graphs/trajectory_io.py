# src/graphs/trajectory_io.py
import struct
from pathlib import Path
from typing import Union
import numpy as np

from .boxes import BoxTrajectorySet
from ..utils.errors import FormatError

TRAJECTORY_MAGIC = b"GAHT"
TRAJECTORY_VERSION = 1
_HEADER = struct.Struct("<4sHHH")


def encode_trajectory(traj: BoxTrajectorySet) -> bytes:
    """Сериализация: заголовок (GAHT, version, N, T) + N*T*4 float64 little-endian"""
    header = _HEADER.pack(TRAJECTORY_MAGIC, TRAJECTORY_VERSION, traj.num_objects, traj.num_frames)
    return header + traj.boxes.astype("<f8").tobytes(order="C")


def decode_trajectory(payload: bytes, scene_width: float, scene_height: float) -> BoxTrajectorySet:
    """Разбор бинарной траектории с проверкой инвариантов"""
    if len(payload) < _HEADER.size:
        raise FormatError("Файл траектории короче заголовка")
    magic, version, n, t = _HEADER.unpack_from(payload)
    if magic != TRAJECTORY_MAGIC:
        raise FormatError(f"Неверная сигнатура траектории: {magic!r}")
    if version != TRAJECTORY_VERSION:
        raise FormatError(f"Неподдерживаемая версия траектории: {version}")

    expected = _HEADER.size + n * t * 4 * 8
    if len(payload) != expected:
        raise FormatError(f"Размер файла траектории {len(payload)} байт, ожидалось {expected}")

    boxes = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).reshape(n, t, 4)
    return BoxTrajectorySet(boxes.astype(np.float64), scene_width, scene_height)


def write_trajectory(path: Union[str, Path], traj: BoxTrajectorySet) -> None:
    Path(path).write_bytes(encode_trajectory(traj))


def read_trajectory(path: Union[str, Path], scene_width: float, scene_height: float) -> BoxTrajectorySet:
    return decode_trajectory(Path(path).read_bytes(), scene_width, scene_height)
