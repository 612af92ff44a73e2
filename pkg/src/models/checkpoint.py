# src/models/checkpoint.py
"""
Чекпоинты моделей: manifest.json (вид модели, размерности, имена и формы параметров)
+ params.bin (параметры подряд, float64 little-endian, в порядке манифеста).
"""
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional, Union
import numpy as np

from .layers import ModelDims
from .mstvh import MstvhModel
from .stvh import HashingModel, StvhModel
from ..utils.errors import FormatError
from ..utils.logger import logger

CHECKPOINT_FORMAT = "gah-checkpoint"
CHECKPOINT_VERSION = 1
MODEL_TYPES = {"stvh": StvhModel, "mstvh": MstvhModel}


def build_model(kind: str, dims: ModelDims, seed: int = 0, use_vectorizer: bool = True) -> HashingModel:
    if kind not in MODEL_TYPES:
        raise FormatError(f"Неизвестный вид модели: {kind}")
    return MODEL_TYPES[kind](dims, seed=seed, use_vectorizer=use_vectorizer)


def save_checkpoint(path: Union[str, Path], model: HashingModel, extra: Optional[Dict[str, Any]] = None) -> Path:
    """Запись чекпоинта в каталог path"""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    params = model.parameters()

    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "dims": asdict(model.dims),
        "seed": model.seed,
        "use_vectorizer": model.use_vectorizer,
        "parameters": [{"name": p.name, "shape": list(p.shape)} for p in params],
        "extra": extra or {},
    }
    payload = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params)

    # params.bin первым: манифест без данных не должен появиться
    (root / "params.bin").write_bytes(payload)
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return root


def read_manifest(path: Union[str, Path]) -> Dict[str, Any]:
    manifest_path = Path(path) / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"Манифест чекпоинта не найден: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"Неизвестный формат чекпоинта: {manifest.get('format')}")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"Неподдерживаемая версия чекпоинта: {manifest.get('version')}")
    return manifest


def load_checkpoint(path: Union[str, Path]) -> HashingModel:
    """Восстановление модели с проверкой имён, форм и размера данных"""
    root = Path(path)
    manifest = read_manifest(root)
    model = build_model(manifest["kind"], ModelDims(**manifest["dims"]), manifest.get("seed", 0),
                        manifest.get("use_vectorizer", True))
    params = model.parameters()

    entries = manifest["parameters"]
    if len(entries) != len(params):
        raise FormatError(f"В чекпоинте {len(entries)} параметров, модель ожидает {len(params)}")

    payload = (root / "params.bin").read_bytes()
    expected = 8 * sum(p.size for p in params)
    if len(payload) != expected:
        raise FormatError(f"Размер params.bin {len(payload)} байт, ожидалось {expected}")

    offset = 0
    for entry, param in zip(entries, params):
        if entry["name"] != param.name or tuple(entry["shape"]) != param.shape:
            raise FormatError(
                f"Параметр {entry['name']} {tuple(entry['shape'])} не совпадает с {param.name} {param.shape}"
            )
        count = param.size
        param.data[...] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(param.shape)
        offset += 8 * count

    logger.debug(f"Загружен чекпоинт {root} ({manifest['kind']}, {len(params)} параметров)")
    return model
