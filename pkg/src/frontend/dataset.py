# src/frontend/dataset.py
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import numpy as np

from .generator import SceneSample, generate_scene
from .roi import roi_features
from ..graphs.boxes import RelationGraphs, build_relation_graphs
from ..graphs.trajectory_io import read_trajectory, write_trajectory
from ..utils.config import GeneratorConfig, config
from ..utils.errors import FormatError, ShapeError
from ..utils.helpers import derive_seed
from ..utils.logger import logger

ARRAY_MAGIC = b"GAHA"
DATASET_FORMAT = "gah-dataset"
DATASET_VERSION = 1
_ARRAY_HEADER = struct.Struct("<4sH")


# === Бинарные массивы с заголовком формы ===

def encode_array(values: np.ndarray) -> bytes:
    """Заголовок (GAHA, ndim u16, dims u32...) + float64 little-endian"""
    values = np.ascontiguousarray(values, dtype="<f8")
    header = _ARRAY_HEADER.pack(ARRAY_MAGIC, values.ndim) + struct.pack(f"<{values.ndim}I", *values.shape)
    return header + values.tobytes()


def decode_array(payload: bytes) -> np.ndarray:
    if len(payload) < _ARRAY_HEADER.size:
        raise FormatError("Файл массива короче заголовка")
    magic, ndim = _ARRAY_HEADER.unpack_from(payload)
    if magic != ARRAY_MAGIC:
        raise FormatError(f"Неверная сигнатура массива: {magic!r}")
    dims_size = 4 * ndim
    shape = struct.unpack_from(f"<{ndim}I", payload, _ARRAY_HEADER.size)
    offset = _ARRAY_HEADER.size + dims_size
    expected = offset + 8 * int(np.prod(shape))
    if len(payload) != expected:
        raise FormatError(f"Размер массива {len(payload)} байт, ожидалось {expected}")
    return np.frombuffer(payload, dtype="<f8", offset=offset).reshape(shape).astype(np.float64)


def write_array(path: Union[str, Path], values: np.ndarray) -> None:
    Path(path).write_bytes(encode_array(values))


def read_array(path: Union[str, Path]) -> np.ndarray:
    return decode_array(Path(path).read_bytes())


# === Генерация и хранение наборов сцен ===

@dataclass
class SceneDataset:
    """Набор сцен с разбиением train/test"""

    generator: GeneratorConfig
    samples: List[SceneSample]
    splits: List[str]
    ids: List[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.ids:
            self.ids = list(range(len(self.samples)))

    def split(self, name: str) -> List[Tuple[int, SceneSample]]:
        return [(i, s) for i, s, sp in zip(self.ids, self.samples, self.splits) if sp == name]

    @property
    def label_spaces(self) -> Dict[str, int]:
        return {
            "activity": self.generator.A,
            "appearance": self.generator.P,
            "action": self.generator.C_act,
            "video-id": max((s.video_id for s in self.samples), default=-1) + 1,
        }


def _scene_for_index(generator: GeneratorConfig, seed: int, index: int) -> SceneSample:
    """Сцена с номером index; клипы одного «видео» разделяют внешность"""
    video_id = index // generator.clips_per_video
    video_rng = np.random.default_rng(derive_seed(seed, 1, video_id))
    appearance = int(video_rng.integers(generator.P))
    return generate_scene(generator, derive_seed(seed, 0, index), appearance_label=appearance, video_id=video_id)


def generate_dataset(generator: GeneratorConfig, seed: int, threads: Optional[int] = None) -> SceneDataset:
    """Генерация train + test сцен; порядок и содержимое не зависят от числа потоков"""
    generator.validate()
    workers = threads or config.threads
    total = generator.total_samples

    logger.info(f"🎬 Генерация {total} сцен (потоков: {workers})")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(lambda i: _scene_for_index(generator, seed, i), range(total)))
    else:
        samples = [_scene_for_index(generator, seed, i) for i in range(total)]

    splits = ["train"] * generator.train_samples + ["test"] * generator.test_samples
    return SceneDataset(generator=generator, samples=samples, splits=splits)


def save_dataset(path: Union[str, Path], dataset: SceneDataset) -> Path:
    """Манифест JSON + бинарные блобы траекторий и карт признаков"""
    root = Path(path)
    (root / "samples").mkdir(parents=True, exist_ok=True)

    records = []
    for sample_id, sample, split in zip(dataset.ids, dataset.samples, dataset.splits):
        traj_name = f"samples/{sample_id:06d}.traj"
        maps_name = f"samples/{sample_id:06d}.fmap"
        write_trajectory(root / traj_name, sample.traj)
        write_array(root / maps_name, sample.feature_maps)
        records.append({
            "id": sample_id,
            "split": split,
            "activity": int(sample.activity_label),
            "appearance": int(sample.appearance_label),
            "video_id": int(sample.video_id),
            "actions": [int(a) for a in sample.action_labels],
            "seed": int(sample.rng_seed),
            "trajectory": traj_name,
            "feature_maps": maps_name,
        })

    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "config": asdict(dataset.generator),
        "sample_count": len(records),
        "label_spaces": dataset.label_spaces,
        "samples": records,
    }
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)

    logger.info(f"💾 Датасет сохранён: {root} ({len(records)} сцен)")
    return root


def load_dataset(path: Union[str, Path]) -> SceneDataset:
    """Загрузка датасета с проверкой манифеста"""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"Манифест датасета не найден: {manifest_path}")

    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != DATASET_FORMAT:
        raise FormatError(f"Неизвестный формат датасета: {manifest.get('format')}")
    if manifest.get("sample_count") != len(manifest.get("samples", [])):
        raise FormatError("sample_count не совпадает с числом записей манифеста")

    generator = GeneratorConfig(**manifest["config"])
    samples, splits, ids = [], [], []
    for record in manifest["samples"]:
        traj = read_trajectory(root / record["trajectory"], generator.scene_size, generator.scene_size)
        maps = read_array(root / record["feature_maps"])
        samples.append(SceneSample(
            traj=traj,
            activity_label=record["activity"],
            action_labels=np.asarray(record["actions"], dtype=np.int64),
            appearance_label=record["appearance"],
            feature_maps=maps,
            rng_seed=record["seed"],
            video_id=record["video_id"],
        ))
        splits.append(record["split"])
        ids.append(record["id"])

    logger.info(f"📂 Загружен датасет {root}: {len(samples)} сцен")
    return SceneDataset(generator=generator, samples=samples, splits=splits, ids=ids)


# === Подготовленные для модели примеры ===

@dataclass
class PreparedSample:
    """Вход модели для одной сцены: RoI-признаки или готовые признаки + графы + метки"""

    sample_id: int
    graphs: RelationGraphs
    activity: int
    actions: np.ndarray
    labels: Dict[str, int]
    roi: Optional[np.ndarray] = None       # (N, T, d_v * 25)
    features: Optional[np.ndarray] = None  # (N, T, d), внешние признаки


def _prepare_one(sample_id: int, sample: SceneSample, precomputed: Optional[Path]) -> PreparedSample:
    prepared = PreparedSample(
        sample_id=sample_id,
        graphs=build_relation_graphs(sample.traj),
        activity=int(sample.activity_label),
        actions=np.asarray(sample.action_labels, dtype=np.int64),
        labels=sample.labels,
    )
    if precomputed is not None:
        features = read_array(precomputed / f"{sample_id:06d}.feat")
        if features.ndim != 3 or features.shape[:2] != (sample.traj.num_objects, sample.traj.num_frames):
            raise ShapeError(f"Внешние признаки {sample_id}: форма {features.shape} не совпадает с (N, T, d)")
        if not np.all(np.isfinite(features)):
            raise ValueError(f"Внешние признаки {sample_id} содержат NaN/Inf")
        prepared.features = features
    else:
        roi = roi_features(sample.feature_maps, sample.traj)
        prepared.roi = roi.reshape(roi.shape[0], roi.shape[1], -1)
    return prepared


def prepare_samples(pairs: Sequence[Tuple[int, SceneSample]],
                    precomputed_features: Optional[Union[str, Path]] = None) -> List[PreparedSample]:
    """RoIAlign + графы отношений для списка сцен"""
    precomputed = Path(precomputed_features) if precomputed_features else None
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(lambda pair: _prepare_one(pair[0], pair[1], precomputed), pairs))
    return [_prepare_one(sample_id, sample, precomputed) for sample_id, sample in pairs]


@dataclass
class Batch:
    """Склеенный батч: все массивы с ведущей осью B"""

    ids: np.ndarray
    g_t: np.ndarray
    g_s: np.ndarray
    activity: np.ndarray
    actions: np.ndarray
    roi: Optional[np.ndarray]
    features: Optional[np.ndarray]
    labels: List[Dict[str, int]]

    @property
    def size(self) -> int:
        return len(self.ids)


def collate(samples: Sequence[PreparedSample]) -> Batch:
    has_roi = all(s.roi is not None for s in samples)
    return Batch(
        ids=np.array([s.sample_id for s in samples], dtype=np.int64),
        g_t=np.stack([s.graphs.g_t for s in samples]),
        g_s=np.stack([s.graphs.g_s for s in samples]),
        activity=np.array([s.activity for s in samples], dtype=np.int64),
        actions=np.stack([s.actions for s in samples]),
        roi=np.stack([s.roi for s in samples]) if has_roi else None,
        features=None if has_roi else np.stack([s.features for s in samples]),
        labels=[s.labels for s in samples],
    )


def iterate_batches(samples: Sequence[PreparedSample], batch_size: int,
                    rng: Optional[np.random.Generator] = None) -> List[Batch]:
    """Разбиение на батчи; хвост из одного примера присоединяется к предыдущему батчу"""
    order = np.arange(len(samples)) if rng is None else rng.permutation(len(samples))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return [collate([samples[i] for i in chunk]) for chunk in chunks]


def write_precomputed_features(path: Union[str, Path], features: Dict[int, np.ndarray]) -> None:
    """Запись внешних FeatureTensor (N, T, d) в формате GAHA, по файлу на сцену"""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for sample_id, values in features.items():
        write_array(root / f"{sample_id:06d}.feat", values)
