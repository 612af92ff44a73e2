# src/retrieval/index.py
"""
Индекс поиска по расстоянию Хэмминга.

Коды упакованы в 64-битные слова; расстояние - popcount(XOR) по словам.
Порядок результатов: по возрастанию расстояния, при равенстве - по возрастанию id.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence
import numpy as np

from .codes import pack_codes
from ..utils.errors import ShapeError


def pack_words(codes: np.ndarray) -> np.ndarray:
    """Коды {-1, +1} (M, K) -> слова uint64 (M, ceil(K/64))"""
    codes = np.atleast_2d(codes)
    packed = pack_codes(codes)
    pad = (-packed.shape[-1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    return np.ascontiguousarray(packed).view("<u8")


def popcount_distance(words_a: np.ndarray, words_b: np.ndarray) -> np.ndarray:
    """Хэмминг между упакованными словами; оси слов - последние"""
    return np.bitwise_count(np.bitwise_xor(words_a, words_b)).sum(axis=-1, dtype=np.int64)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Число различающихся бит двух кодов {-1, +1}"""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"hamming: коды {a.shape} и {b.shape} несовместимы")
    return int(popcount_distance(pack_words(a)[0], pack_words(b)[0]))


@dataclass
class RetrievalResult:
    ids: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


class HammingIndex:
    """
    Неизменяемый индекс кодов с метками

    Args:
        codes: (M, K) из {-1, +1}
        ids: (M,) уникальные 64-битные идентификаторы
        labels: метки по пространствам ("activity", "appearance", "video-id")
    """

    def __init__(self, codes: np.ndarray, ids: Sequence[int], labels: Optional[Sequence[Dict[str, int]]] = None):
        codes = np.asarray(codes)
        ids = np.array(ids, dtype=np.int64)
        if codes.ndim != 2 or ids.shape != (codes.shape[0],):
            raise ShapeError(f"HammingIndex: коды {codes.shape} и id {ids.shape} несовместимы")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("Идентификаторы индекса должны быть уникальными")
        if labels is not None and len(labels) != len(ids):
            raise ShapeError(f"HammingIndex: меток {len(labels)}, кодов {len(ids)}")

        self.K = codes.shape[1]
        self._words = pack_words(codes) if len(ids) else np.zeros((0, (self.K + 63) // 64), dtype=np.uint64)
        self._ids = ids
        self._labels = list(labels) if labels is not None else [{} for _ in ids]
        self._words.flags.writeable = False
        self._ids.flags.writeable = False

    @property
    def size(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def labels(self) -> List[Dict[str, int]]:
        return self._labels

    def label_array(self, label_space: str) -> np.ndarray:
        try:
            return np.array([label[label_space] for label in self._labels], dtype=np.int64)
        except KeyError:
            raise KeyError(f"Не у всех записей индекса есть метка '{label_space}'")

    def distances(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q)
        if q.shape != (self.K,):
            raise ShapeError(f"Запрос {q.shape} не совпадает с K={self.K}")
        return popcount_distance(self._words, pack_words(q))

    def pairwise_distances(self) -> np.ndarray:
        """Матрица расстояний между всеми записями (M, M)"""
        return popcount_distance(self._words[:, None, :], self._words[None, :, :])

    def query(self, q: np.ndarray, k: int, exclude_id: Optional[int] = None) -> RetrievalResult:
        if k < 1:
            raise ValueError(f"k должно быть >= 1, получено {k}")
        if self.size == 0:
            raise ValueError("Индекс пуст")
        dist = self.distances(q)
        order = np.lexsort((self._ids, dist))
        if exclude_id is not None:
            order = order[self._ids[order] != exclude_id]
        order = order[:k]
        return RetrievalResult(ids=self._ids[order].copy(), distances=dist[order].copy())


def query_topk(index: HammingIndex, q: np.ndarray, k: int, exclude_id: Optional[int] = None) -> RetrievalResult:
    return index.query(q, k, exclude_id)


def brute_force_topk(codes: np.ndarray, ids: Sequence[int], q: np.ndarray, k: int) -> RetrievalResult:
    """Эталон: поэлементное сравнение бит и сортировка пар (расстояние, id)"""
    pairs = []
    for code, record_id in zip(codes, ids):
        distance = sum(1 for x, y in zip(code, q) if x != y)
        pairs.append((distance, int(record_id)))
    pairs.sort()
    pairs = pairs[:k]
    return RetrievalResult(ids=np.array([p[1] for p in pairs], dtype=np.int64),
                           distances=np.array([p[0] for p in pairs], dtype=np.int64))
