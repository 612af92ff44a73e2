# src/training/pipeline.py
"""
Шаги конвейера поверх файлов: датасет -> обучение -> коды -> фильтр -> индекс -> оценка.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd

from .trainer import Trainer, TrainResult, encode_samples, predict_activity
from ..core import no_grad
from ..filter.filter_matrix import (
    FilterMatrix, derive_layers, fit_filter, read_filter, storage_accounting, write_filter,
)
from ..frontend.dataset import SceneDataset, generate_dataset, iterate_batches, load_dataset, prepare_samples
from ..models.checkpoint import load_checkpoint
from ..models.stvh import HashingModel
from ..retrieval.codes import read_codes, read_labels, write_codes, write_labels
from ..retrieval.index import HammingIndex
from ..retrieval.metrics import EvalReport, QuerySet, evaluate, mean_hamming_by_class, write_report
from ..utils.config import RunConfig
from ..utils.errors import ShapeError
from ..utils.logger import logger

PathLike = Union[str, Path]


def dataset_for_run(run: RunConfig) -> SceneDataset:
    """Датасет из run.dataset или сгенерированный по run.generator и seed"""
    if run.dataset:
        return load_dataset(run.dataset)
    return generate_dataset(run.generator, run.seed)


def check_dims(model: HashingModel, dataset: SceneDataset) -> None:
    generator = dataset.generator
    expected = (model.dims.N, model.dims.T, model.dims.d_v, model.dims.A, model.dims.C_act)
    actual = (generator.N, generator.T, generator.d_v, generator.A, generator.C_act)
    if expected != actual:
        raise ShapeError(f"Размерности чекпоинта (N, T, d_v, A, C_act)={expected} "
                         f"не совпадают с датасетом {actual}")


def train(run: RunConfig, out_dir: PathLike, dataset: Optional[SceneDataset] = None) -> TrainResult:
    """Обучение на train-части датасета запуска"""
    run.validate()
    dataset = dataset or dataset_for_run(run)
    samples = prepare_samples(dataset.split("train"), run.precomputed_features)
    return Trainer(run, out_dir).fit(samples)


def encode(checkpoint: PathLike, dataset: SceneDataset, out_dir: PathLike, split: str = "test",
           precomputed_features: Optional[PathLike] = None) -> Tuple[Path, Path]:
    """
    Коды всех слоёв (один слой для STVH) + сайдкар меток

    Returns:
        (путь к .gahc, путь к .labels.json)
    """
    model = load_checkpoint(checkpoint)
    check_dims(model, dataset)
    if not model.use_vectorizer and precomputed_features is None:
        raise ShapeError("Чекпоинт обучен на внешних признаках: укажите precomputed_features")
    samples = prepare_samples(dataset.split(split), precomputed_features if not model.use_vectorizer else None)
    codes, ids, labels = encode_samples(model, samples)

    out = Path(out_dir)
    code_path = write_codes(out / f"codes_{split}.gahc", codes)
    labels_path = write_labels(out / f"codes_{split}.labels.json", ids, labels)
    logger.info(f"💾 Коды записаны: {code_path} ({codes.shape[0]} x {codes.shape[1]} слоёв x {codes.shape[2]} бит)")
    return code_path, labels_path


def activity_accuracy(checkpoint: PathLike, dataset: SceneDataset, split: str = "test",
                      precomputed_features: Optional[PathLike] = None) -> float:
    """Точность классификации активности по b при инференсе"""
    model = load_checkpoint(checkpoint)
    check_dims(model, dataset)
    samples = prepare_samples(dataset.split(split), precomputed_features if not model.use_vectorizer else None)
    predictions = predict_activity(model, samples)
    labels = np.array([s.activity for s in samples])
    accuracy = float((predictions == labels).mean()) if len(labels) else 0.0
    logger.info(f"🎯 Точность активности ({split}): {accuracy * 100:.2f}%")
    return accuracy


def fit_filter_file(code_path: PathLike, out_path: PathLike) -> FilterMatrix:
    codes = read_codes(code_path)
    filter_matrix = fit_filter(codes)
    write_filter(out_path, filter_matrix)
    logger.info(f"💾 Фильтр-матрица записана: {out_path}")
    return filter_matrix


def compress_codes(code_path: PathLike, out_path: PathLike) -> Path:
    """Оставить только последний слой: то, что хранится вместе с фильтр-матрицей"""
    codes = read_codes(code_path)
    return write_codes(out_path, codes[:, -1:, :])


def derive_codes_file(code_path: PathLike, filter_path: PathLike, layers: int, out_path: PathLike) -> Path:
    """Восстановление всех слоёв по кодам последнего слоя и F"""
    codes = read_codes(code_path)
    filter_matrix = read_filter(filter_path)
    derived = derive_layers(codes[:, -1, :], filter_matrix, layers)
    path = write_codes(out_path, derived)
    logger.info(f"💾 Коды записаны: {path} (восстановлено {layers} слоёв)")
    return path


def compression_report(code_path: PathLike, filter_path: PathLike) -> Dict[str, int]:
    return storage_accounting(code_path, filter_path)


def read_layer(code_path: PathLike, labels_path: PathLike, layer: int = -1) -> Tuple[np.ndarray, np.ndarray, List[Dict[str, int]]]:
    """Коды одного слоя, id и метки из пары файлов .gahc + сайдкар"""
    codes = read_codes(code_path)
    ids, labels = read_labels(labels_path)
    if len(ids) != codes.shape[0]:
        raise ShapeError(f"Кодов {codes.shape[0]}, записей меток {len(ids)}")
    return codes[:, layer, :], ids, labels


def load_index(code_path: PathLike, labels_path: PathLike, layer: int = -1) -> HammingIndex:
    return HammingIndex(*read_layer(code_path, labels_path, layer))


def load_queries(code_path: PathLike, labels_path: PathLike, layer: int = -1) -> QuerySet:
    return QuerySet(*read_layer(code_path, labels_path, layer))


def evaluate_files(db_codes: PathLike, db_labels: PathLike, query_codes: Optional[PathLike],
                   query_labels: Optional[PathLike], label_space: str, k: int, layer: int = -1,
                   protocol: str = "standard") -> EvalReport:
    """
    Оценка mAP@k

    protocol="standard": база и запросы - разные файлы.
    protocol="mixed": база и запросы объединяются; запрос не находит сам себя.
    """
    if protocol == "mixed":
        codes, ids, labels = read_layer(db_codes, db_labels, layer)
        if query_codes is not None:
            q_codes, q_ids, q_labels = read_layer(query_codes, query_labels, layer)
            codes = np.concatenate([codes, q_codes])
            ids = np.concatenate([ids, q_ids])
            labels = labels + q_labels
        index = HammingIndex(codes, ids, labels)
        queries = QuerySet(codes, ids, labels)
    elif protocol == "standard":
        if query_codes is None:
            raise ValueError("Для стандартного протокола нужны коды запросов")
        index = load_index(db_codes, db_labels, layer)
        queries = load_queries(query_codes, query_labels, layer)
    else:
        raise ValueError(f"Неизвестный протокол оценки: {protocol}")

    report = evaluate(queries, index, label_space, k)
    logger.info(f"📊 {report.metric} ({label_space}, слой {layer}): {report.value:.4f}, "
                f"P@{k} {report.precision:.4f}, запросов {len(report.per_query)}")
    return report


def write_class_hamming(index: HammingIndex, label_space: str, path: PathLike) -> pd.DataFrame:
    table = mean_hamming_by_class(index, label_space)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, float_format="%.6f")
    return table


def attention_dump(checkpoint: PathLike, dataset: SceneDataset, sample_ids: Sequence[int],
                   out_path: PathLike) -> Path:
    """Матрицы внимания каждого слоя для выбранных сцен (.npz)"""
    model = load_checkpoint(checkpoint)
    check_dims(model, dataset)
    wanted = set(int(i) for i in sample_ids)
    pairs = [(i, s) for i, s in zip(dataset.ids, dataset.samples) if i in wanted]
    missing = wanted - {i for i, _ in pairs}
    if missing:
        raise KeyError(f"Сцены не найдены в датасете: {sorted(missing)}")

    arrays: Dict[str, np.ndarray] = {}
    with no_grad():
        for batch in iterate_batches(prepare_samples(pairs), len(pairs)):
            output = model.forward(batch, training=False)
            arrays["ids"] = batch.ids
            for layer, maps in enumerate(output.attention):
                for name, values in maps.items():
                    arrays[f"layer{layer}_{name}"] = values

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(out_path, **arrays)
    logger.info(f"💾 Внимание {len(output.attention)} слоёв для {len(pairs)} сцен: {out_path}")
    return out_path


@dataclass
class PipelineResult:
    train: TrainResult
    reports: List[EvalReport]
    accuracy: float


def run_pipeline(run: RunConfig, out_dir: PathLike) -> PipelineResult:
    """generate -> train -> encode -> eval (активность и внешность по каждому слою)"""
    out = Path(out_dir)
    dataset = dataset_for_run(run)
    result = train(run, out / "train", dataset)
    checkpoint = out / "train" / "checkpoints" / "final"

    db_codes, db_labels = encode(checkpoint, dataset, out / "codes", split="train")
    q_codes, q_labels = encode(checkpoint, dataset, out / "codes", split="test")
    layers = read_codes(db_codes).shape[1]

    reports = []
    for layer in range(layers):
        for label_space in ("activity", "appearance"):
            report = evaluate_files(db_codes, db_labels, q_codes, q_labels, label_space, run.map_k, layer)
            write_report(out / "reports" / f"{label_space}_layer{layer}.json", report)
            reports.append(report)

    accuracy = activity_accuracy(checkpoint, dataset, "test")
    return PipelineResult(train=result, reports=reports, accuracy=accuracy)
