# src/retrieval/codes.py
"""
Файлы хеш-кодов GAHC и JSON-сайдкар меток.

Заголовок: magic "GAHC", K (u16), число слоёв (u16), M (u64), затем
M x слои x ceil(K/8) байт. Бит j кода лежит в байте j // 8 на позиции j % 8
(little-endian); 1 означает +1.
"""
import json
import struct
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union
import numpy as np

from ..utils.errors import FormatError, ShapeError

CODE_MAGIC = b"GAHC"
_HEADER = struct.Struct("<4sHHQ")


def pack_codes(codes: np.ndarray) -> np.ndarray:
    """Коды {-1, +1} (..., K) -> байты (..., ceil(K/8))"""
    codes = np.asarray(codes)
    if not np.all(np.abs(codes) == 1):
        raise ValueError("Коды должны состоять из -1 и +1")
    return np.packbits(codes > 0, axis=-1, bitorder="little")


def unpack_codes(packed: np.ndarray, K: int) -> np.ndarray:
    """Байты (..., ceil(K/8)) -> коды int8 {-1, +1} (..., K)"""
    bits = np.unpackbits(packed, axis=-1, count=K, bitorder="little")
    return (2 * bits.astype(np.int8) - 1).astype(np.int8)


def encode_codes(codes: np.ndarray) -> bytes:
    """codes: (M, Y, K) из {-1, +1}"""
    codes = np.asarray(codes)
    if codes.ndim != 3:
        raise ShapeError(f"Ожидались коды (M, Y, K), получено {codes.shape}")
    m, layers, k = codes.shape
    return _HEADER.pack(CODE_MAGIC, k, layers, m) + pack_codes(codes).tobytes()


def decode_codes(payload: bytes) -> np.ndarray:
    if len(payload) < _HEADER.size:
        raise FormatError("Файл кодов короче заголовка")
    magic, k, layers, m = _HEADER.unpack_from(payload)
    if magic != CODE_MAGIC:
        raise FormatError(f"Неверная сигнатура файла кодов: {magic!r}")
    row_bytes = (k + 7) // 8
    expected = _HEADER.size + m * layers * row_bytes
    if len(payload) != expected:
        raise FormatError(f"Размер файла кодов {len(payload)} байт, ожидалось {expected}")
    packed = np.frombuffer(payload, dtype=np.uint8, offset=_HEADER.size).reshape(m, layers, row_bytes)
    return unpack_codes(packed, k)


def write_codes(path: Union[str, Path], codes: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_codes(codes))
    return path


def read_codes(path: Union[str, Path]) -> np.ndarray:
    return decode_codes(Path(path).read_bytes())


def code_payload_bytes(path: Union[str, Path]) -> int:
    """Размер полезной нагрузки файла кодов без заголовка"""
    return Path(path).stat().st_size - _HEADER.size


# === Сайдкар меток ===

def write_labels(path: Union[str, Path], ids: Sequence[int], labels: Sequence[Dict[str, int]]) -> Path:
    """JSON {str(id): {пространство меток: метка}} в порядке строк файла кодов"""
    if len(ids) != len(labels):
        raise ShapeError(f"Идентификаторов {len(ids)}, записей меток {len(labels)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {str(int(i)): {name: int(value) for name, value in label.items()} for i, label in zip(ids, labels)}
    if len(payload) != len(ids):
        raise ValueError("Идентификаторы в сайдкаре меток должны быть уникальными")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
    return path


def read_labels(path: Union[str, Path]) -> Tuple[np.ndarray, List[Dict[str, int]]]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"Сайдкар меток не найден: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    ids = np.array([int(key) for key in payload], dtype=np.int64)
    return ids, [dict(value) for value in payload.values()]
