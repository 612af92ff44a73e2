# src/retrieval/metrics.py
"""
Метрики поиска: AP@k / mAP@k, precision@k, средние расстояния Хэмминга между классами.

AP@k = sum_{j<=k} P@j * rel_j / min(k, R), R - число релевантных записей в базе.
Запросы без релевантных записей в базе в среднее не входят.
"""
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import numpy as np
import pandas as pd

from .index import HammingIndex
from ..utils.errors import ShapeError


@dataclass
class QuerySet:
    """Коды запросов (Q, K), их идентификаторы и метки"""

    codes: np.ndarray
    ids: np.ndarray
    labels: List[Dict[str, int]]

    def __post_init__(self):
        self.codes = np.asarray(self.codes)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.codes.ndim != 2 or len(self.ids) != len(self.codes) or len(self.labels) != len(self.codes):
            raise ShapeError(f"QuerySet: коды {self.codes.shape}, id {len(self.ids)}, меток {len(self.labels)}")


def average_precision_at_k(relevance: Sequence[bool], k: int, total_relevant: int) -> float:
    """AP@k по ранжированному списку релевантности (сумма в дробях, одно округление)"""
    if total_relevant <= 0:
        raise ValueError("AP@k не определена без релевантных записей")
    hits, score = 0, Fraction(0)
    for rank, relevant in enumerate(relevance[:k], start=1):
        if relevant:
            hits += 1
            score += Fraction(hits, rank)
    return float(score / min(k, total_relevant))


@dataclass
class EvalReport:
    metric: str
    label_space: str
    k: int
    value: float
    precision: float
    per_query: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric,
            "label_space": self.label_space,
            "k": self.k,
            "value": self.value,
            "precision": self.precision,
            "per_query": self.per_query,
        }


def evaluate(queries: QuerySet, index: HammingIndex, label_space: str, k: int) -> EvalReport:
    """mAP@k и precision@k; точное совпадение id запроса с записью базы исключается"""
    if len(queries.ids) == 0:
        raise ValueError("Пустой набор запросов")
    db_labels = index.label_array(label_space)

    per_query = []
    for code, query_id, labels in zip(queries.codes, queries.ids, queries.labels):
        if label_space not in labels:
            raise KeyError(f"У запроса {query_id} нет метки '{label_space}'")
        target = labels[label_space]
        relevant_mask = (db_labels == target) & (index.ids != query_id)
        total_relevant = int(relevant_mask.sum())
        if total_relevant == 0:
            continue

        result = index.query(code, k, exclude_id=int(query_id))
        relevant_ids = set(index.ids[relevant_mask].tolist())
        relevance = [int(i) in relevant_ids for i in result.ids]
        per_query.append({
            "id": int(query_id),
            "ap": average_precision_at_k(relevance, k, total_relevant),
            "precision": float(sum(relevance) / k),
        })

    value = float(np.mean([q["ap"] for q in per_query])) if per_query else 0.0
    precision = float(np.mean([q["precision"] for q in per_query])) if per_query else 0.0
    return EvalReport(metric=f"mAP@{k}", label_space=label_space, k=k, value=value,
                      precision=precision, per_query=per_query)


def map_at_k(queries: QuerySet, index: HammingIndex, label_space: str, k: int) -> float:
    return evaluate(queries, index, label_space, k).value


def precision_at_k(queries: QuerySet, index: HammingIndex, label_space: str, k: int) -> float:
    return evaluate(queries, index, label_space, k).precision


def mean_hamming_by_class(index: HammingIndex, label_space: str) -> pd.DataFrame:
    """
    Средние расстояния Хэмминга между классами

    [c1][c2] - среднее по всем парам записей классов c1 и c2; на диагонали пары
    записи с собой исключены (класс из одной записи даёт NaN).
    """
    if index.size == 0:
        raise ValueError("Индекс пуст")
    labels = index.label_array(label_space)
    classes = np.unique(labels)
    distances = index.pairwise_distances().astype(np.float64)
    np.fill_diagonal(distances, np.nan)

    table = pd.DataFrame(index=pd.Index(classes, name=label_space), columns=classes, dtype=np.float64)
    for c1 in classes:
        rows = labels == c1
        for c2 in classes:
            block = distances[np.ix_(rows, labels == c2)]
            values = block[~np.isnan(block)]
            table.loc[c1, c2] = values.mean() if values.size else np.nan
    return table


def write_report(path: Union[str, Path], report: EvalReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    return path


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def reports_frame(reports: Sequence[EvalReport], layer: Optional[int] = None) -> pd.DataFrame:
    """Сводная таблица отчётов для вывода в консоль"""
    rows = [{"layer": layer, "label_space": r.label_space, "metric": r.metric,
             "value": r.value, "precision": r.precision, "queries": len(r.per_query)} for r in reports]
    return pd.DataFrame(rows)
