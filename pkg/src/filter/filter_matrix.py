# src/filter/filter_matrix.py
"""
Сжатие многослойных кодов фильтр-матрицей.

Хранятся только коды последнего слоя и одна вещественная матрица F (K x K).
Код предыдущего слоя восстанавливается как sign((F b - mu) / sigma), где mu и
sigma - среднее и стандартное отклонение самого вектора F b.
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union
import numpy as np

from ..core import Adam, Array, Parameter, matmul, mean, sqrt, sum_, swapaxes
from ..retrieval.codes import code_payload_bytes
from ..utils.errors import FormatError, NumericError, ShapeError
from ..utils.helpers import sign_pm1
from ..utils.logger import logger

FILTER_MAGIC = b"GAHF"
_HEADER = struct.Struct("<4sH")
SIGMA_FLOOR = 1e-8
RELAXED_EPS = 1e-12

FIT_STEPS = 500
FIT_LR = 1e-2
PLATEAU_WINDOW = 25
PLATEAU_TOL = 1e-9
ZERO_LOSS = 1e-20


@dataclass
class FilterMatrix:
    f: np.ndarray
    mean_sigma_policy: str = "per-vector"

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if self.f.ndim != 2 or self.f.shape[0] != self.f.shape[1]:
            raise ShapeError(f"Фильтр-матрица должна быть K x K, получено {self.f.shape}")
        if not np.all(np.isfinite(self.f)):
            raise NumericError("Фильтр-матрица содержит NaN/Inf")

    @property
    def K(self) -> int:
        return self.f.shape[0]


def _layers_array(codes: Union[np.ndarray, Sequence[np.ndarray]]) -> np.ndarray:
    """(M, Y, K) из массива или из списка слоёв (M, K)"""
    if isinstance(codes, np.ndarray):
        if codes.ndim != 3:
            raise ShapeError(f"Ожидались коды (M, Y, K), получено {codes.shape}")
        return codes
    widths = {np.asarray(layer).shape[-1] for layer in codes}
    if len(widths) != 1:
        raise ShapeError(f"Разная длина кода по слоям: {sorted(widths)}")
    return np.stack([np.asarray(layer) for layer in codes], axis=1)


def _relaxed_normalize(z: Array) -> Array:
    centered = z - mean(z, axis=-1, keepdims=True)
    return centered / sqrt(mean(centered * centered, axis=-1, keepdims=True) + RELAXED_EPS)


def relaxed_loss(f: Array, deeper: np.ndarray, shallower: np.ndarray) -> Array:
    """sum по парам соседних слоёв ||normalize(F b_deep) - b_shallow||^2, среднее по кодам"""
    derived = _relaxed_normalize(matmul(deeper, swapaxes(f, 0, 1)))
    diff = derived - shallower
    return sum_(diff * diff) / deeper.shape[0]


def _least_squares_start(deeper: np.ndarray, shallower: np.ndarray) -> np.ndarray:
    """F, минимизирующая ||F b_deep - b_shallow||^2 без нормализации"""
    solution, *_ = np.linalg.lstsq(deeper, shallower, rcond=None)
    return solution.T


def fit_filter(codes: Union[np.ndarray, Sequence[np.ndarray]], steps: int = FIT_STEPS,
               lr: float = FIT_LR) -> FilterMatrix:
    """
    Подбор общей для всех пар соседних слоёв матрицы F

    Старт - решение наименьших квадратов, затем Adam по релаксированной
    (без sign) нормализованной цели с остановкой на плато.
    """
    codes = _layers_array(codes).astype(np.float64)
    m, layers, k = codes.shape
    if layers < 2:
        raise ShapeError(f"Для фильтр-матрицы нужно не менее двух слоёв, получено {layers}")
    if m < k:
        logger.warning(f"⚠️ Кодов {m} меньше длины кода {k}: задача подбора F недоопределена")

    # Пары (b_tau, b_{tau-1}) для tau = 2..Y
    deeper = codes[:, 1:, :].reshape(-1, k)
    shallower = codes[:, :-1, :].reshape(-1, k)

    f = Parameter("filter", _least_squares_start(deeper, shallower))
    optimizer = Adam([f], lr=lr)
    history: List[float] = []
    for step in range(steps):
        f.zero_grad()
        loss = relaxed_loss(f, deeper, shallower)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"Нечисловой лосс фильтр-матрицы на шаге {step}")
        history.append(value)
        if value <= ZERO_LOSS:
            break
        if len(history) > PLATEAU_WINDOW:
            past = history[-PLATEAU_WINDOW - 1]
            if past - value <= PLATEAU_TOL * max(abs(past), 1.0):
                break
        loss.backward()
        optimizer.step()

    logger.info(f"🧮 Фильтр-матрица {k}x{k} подобрана: лосс {history[-1]:.6f} за {len(history)} шагов")
    return FilterMatrix(f.data.copy())


def derive_code(b_deeper: np.ndarray, filter_matrix: FilterMatrix) -> np.ndarray:
    """sign((F b - mu) / sigma) для кода (K,) или батча кодов (..., K)"""
    b = np.asarray(b_deeper, dtype=np.float64)
    if b.shape[-1] != filter_matrix.K:
        raise ShapeError(f"Код длины {b.shape[-1]}, фильтр {filter_matrix.f.shape}")
    z = b @ filter_matrix.f.T
    mu = z.mean(axis=-1, keepdims=True)
    sigma = np.maximum(z.std(axis=-1, keepdims=True), SIGMA_FLOOR)
    return sign_pm1((z - mu) / sigma)


def derive_layers(final_codes: np.ndarray, filter_matrix: FilterMatrix, layers: int) -> np.ndarray:
    """Все слои из кодов последнего слоя: (M, K) -> (M, Y, K); последний слой не трогается"""
    final_codes = np.asarray(final_codes, dtype=np.int8)
    derived = [final_codes]
    for _ in range(layers - 1):
        derived.append(derive_code(derived[-1], filter_matrix))
    return np.stack(derived[::-1], axis=1)


def compression_ratio(M: int, K: int, Y: int) -> float:
    """(M K + K^2) / (M Y K)"""
    if min(M, K, Y) <= 0:
        raise ValueError(f"compression_ratio: аргументы должны быть положительными (M={M}, K={K}, Y={Y})")
    return (M * K + K * K) / (M * Y * K)


# === Файл фильтра GAHF ===

def encode_filter(filter_matrix: FilterMatrix) -> bytes:
    return _HEADER.pack(FILTER_MAGIC, filter_matrix.K) + np.ascontiguousarray(filter_matrix.f, dtype="<f8").tobytes()


def decode_filter(payload: bytes) -> FilterMatrix:
    if len(payload) < _HEADER.size:
        raise FormatError("Файл фильтра короче заголовка")
    magic, k = _HEADER.unpack_from(payload)
    if magic != FILTER_MAGIC:
        raise FormatError(f"Неверная сигнатура файла фильтра: {magic!r}")
    expected = _HEADER.size + 8 * k * k
    if len(payload) != expected:
        raise FormatError(f"Размер файла фильтра {len(payload)} байт, ожидалось {expected}")
    return FilterMatrix(np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).reshape(k, k).copy())


def write_filter(path: Union[str, Path], filter_matrix: FilterMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_filter(filter_matrix))
    return path


def read_filter(path: Union[str, Path]) -> FilterMatrix:
    return decode_filter(Path(path).read_bytes())


def storage_accounting(code_path: Union[str, Path], filter_path: Union[str, Path]) -> Dict[str, int]:
    """
    Учёт хранения сжатого набора: биты кодов последнего слоя и элементы F

    payload_units = M * K + K^2 (заголовки не учитываются).
    """
    code_bytes = code_payload_bytes(code_path)
    filter_bytes = Path(filter_path).stat().st_size - _HEADER.size
    filter_entries = filter_bytes // 8
    return {
        "code_payload_bytes": code_bytes,
        "code_bits": code_bytes * 8,
        "filter_payload_bytes": filter_bytes,
        "filter_entries": filter_entries,
        "payload_units": code_bytes * 8 + filter_entries,
    }
