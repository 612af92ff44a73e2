# src/training/trainer.py
"""
Цикл обучения STVH / M-STVH.

Детерминизм: инициализация, разбиение train/val и порядок батчей выводятся из
seed запуска. После каждой эпохи пишется строка метрик (JSONL) и чекпоинт last/;
лучший по mAP на валидации - best/, по окончании - final/.
"""
import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
import numpy as np
import pandas as pd

from ..core import Adam, Array, no_grad
from ..frontend.dataset import PreparedSample, iterate_batches
from ..losses.losses import (
    ce_action, ce_activity, ce_activity_layered, contrastive_loss, quantization_loss,
    recon_loss, relation_encode, total_mstvh, total_stvh,
)
from ..models.checkpoint import build_model, save_checkpoint
from ..models.layers import ModelDims
from ..models.stvh import HashingModel
from ..retrieval.index import HammingIndex
from ..retrieval.metrics import QuerySet, map_at_k
from ..utils.config import LossWeights, RunConfig
from ..utils.errors import NumericError
from ..utils.helpers import derive_seed, format_duration, format_metric, format_percentage
from ..utils.logger import logger

METRICS_FILE = "metrics.jsonl"
METRIC_KEYS = (
    "epoch", "lr", "loss", "loss_cls", "loss_acty", "loss_action", "loss_q",
    "loss_con", "loss_h", "loss_recon", "train_acc", "val_map", "elapsed",
)

# Номера потоков seed запуска
INIT_STREAM = 3
SPLIT_STREAM = 2
ORDER_STREAM = 4


def _value(part: Union[Array, float]) -> float:
    return part.item() if isinstance(part, Array) else float(part)


def compute_losses(model: HashingModel, batch, weights: LossWeights) -> Tuple[Array, Dict[str, float], np.ndarray]:
    """
    Все компоненты лосса для батча

    Returns:
        (итоговый лосс, значения компонент, предсказанные активности)
    """
    output = model.forward(batch, training=True)
    parts: Dict[str, Union[Array, float]] = {"action": ce_action(output.action_logits, batch.actions)}
    relation = relation_encode(output.action_logits, batch.g_s, model.params.relation)

    if model.kind == "stvh":
        parts["acty"] = ce_activity(output.activity_logits, batch.activity)
        parts["q"] = quantization_loss(output.h, output.b)
        parts["con"] = contrastive_loss(relation, output.h) if batch.size >= 2 else 0.0
        total = total_stvh(parts, weights)
        logits = output.activity_logits
    else:
        layers = len(output.h_per_layer)
        parts["acty"] = ce_activity_layered(output.activity_logits_per_layer, batch.activity, weights.layer_weights)
        parts["q"] = sum(quantization_loss(h, output.b_per_layer[:, i, :])
                         for i, h in enumerate(output.h_per_layer)) / layers
        if batch.size >= 2:
            parts["h"] = sum(contrastive_loss(relation, h) for h in output.h_per_layer) / layers
        else:
            parts["h"] = 0.0
        parts["recon"] = recon_loss(batch.roi, output.recon) if output.recon is not None else 0.0
        total = total_mstvh(parts, weights)
        logits = output.activity_logits_per_layer[-1]

    values = {name: _value(part) for name, part in parts.items()}
    values["cls"] = values["acty"] + weights.action_weight * values["action"]
    values["total"] = _value(total)
    predictions = np.argmax(logits.data, axis=-1)
    return total, values, predictions


def encode_samples(model: HashingModel, samples: Sequence[PreparedSample],
                   batch_size: int = 32) -> Tuple[np.ndarray, np.ndarray, List[Dict[str, int]]]:
    """Коды (M, Y, K) в режиме инференса, порядок примеров сохраняется"""
    codes, ids, labels = [], [], []
    with no_grad():
        for batch in iterate_batches(samples, batch_size):
            output = model.forward(batch, training=False)
            codes.append(model.codes(output))
            ids.append(batch.ids)
            labels.extend(batch.labels)
    if not codes:
        return np.zeros((0, 1, model.dims.K), dtype=np.int8), np.zeros(0, dtype=np.int64), []
    return np.concatenate(codes), np.concatenate(ids), labels


def predict_activity(model: HashingModel, samples: Sequence[PreparedSample], batch_size: int = 32) -> np.ndarray:
    """Предсказанные активности (по последнему слою для M-STVH) при инференсе"""
    predictions = []
    with no_grad():
        for batch in iterate_batches(samples, batch_size):
            output = model.forward(batch, training=False)
            logits = output.activity_logits if model.kind == "stvh" else output.activity_logits_per_layer[-1]
            predictions.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64)


def split_validation(samples: Sequence[PreparedSample], fraction: float,
                     seed: int) -> Tuple[List[PreparedSample], List[PreparedSample]]:
    """Отделение валидационной доли обучающих примеров (фиксировано seed)"""
    count = int(round(fraction * len(samples)))
    if count == 0:
        return list(samples), []
    order = np.random.default_rng(derive_seed(seed, SPLIT_STREAM)).permutation(len(samples))
    val_idx = set(order[:count].tolist())
    train = [s for i, s in enumerate(samples) if i not in val_idx]
    val = [s for i, s in enumerate(samples) if i in val_idx]
    return train, val


def load_metrics(path: Union[str, Path]) -> pd.DataFrame:
    """Журнал метрик (JSONL) в DataFrame"""
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_FILE
    with open(path, "r", encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    return pd.DataFrame(rows, columns=list(METRIC_KEYS))


@dataclass
class TrainResult:
    model: HashingModel
    out_dir: Path
    best_epoch: int
    best_val_map: Optional[float]
    final_val_map: Optional[float]
    epochs: int

    def to_dict(self) -> Dict:
        return {
            "kind": self.model.kind,
            "out_dir": str(self.out_dir),
            "best_epoch": self.best_epoch,
            "best_val_map": self.best_val_map,
            "final_val_map": self.final_val_map,
            "epochs": self.epochs,
        }


class Trainer:
    """Обучение одной модели в каталоге out_dir"""

    def __init__(self, run: RunConfig, out_dir: Union[str, Path]):
        run.validate()
        self.run = run
        self.weights = run.resolved_weights
        self.out_dir = Path(out_dir)
        self.checkpoint_dir = self.out_dir / "checkpoints"
        self.metrics_path = self.out_dir / METRICS_FILE
        self.model: Optional[HashingModel] = None

    def build_model(self) -> HashingModel:
        dims = ModelDims.from_config(self.run)
        use_vectorizer = not self.run.precomputed_features
        return build_model(self.run.model_kind, dims, derive_seed(self.run.seed, INIT_STREAM), use_vectorizer)

    def _append_metrics(self, row: Dict) -> None:
        with open(self.metrics_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({key: row.get(key) for key in METRIC_KEYS}) + "\n")

    def _validation_map(self, train: Sequence[PreparedSample], val: Sequence[PreparedSample]) -> Optional[float]:
        """mAP@k по активности: валидация - запросы, обучающая часть - база (последний слой)"""
        if not val or not train:
            return None
        db_codes, db_ids, db_labels = encode_samples(self.model, train, self.run.batch_size)
        q_codes, q_ids, q_labels = encode_samples(self.model, val, self.run.batch_size)
        index = HammingIndex(db_codes[:, -1, :], db_ids, db_labels)
        queries = QuerySet(q_codes[:, -1, :], q_ids, q_labels)
        return map_at_k(queries, index, "activity", self.run.map_k)

    def train_epoch(self, epoch: int, optimizer: Adam, samples: Sequence[PreparedSample]) -> Dict[str, float]:
        rng = np.random.default_rng(derive_seed(self.run.seed, ORDER_STREAM, epoch))
        sums: Dict[str, float] = {}
        correct, seen, batches = 0, 0, 0

        for batch in iterate_batches(samples, self.run.batch_size, rng):
            optimizer.zero_grad()
            total, values, predictions = compute_losses(self.model, batch, self.weights)
            if not np.isfinite(values["total"]):
                raise NumericError(f"Нечисловой лосс на эпохе {epoch}: {values}")
            total.backward()
            optimizer.step()

            for name, value in values.items():
                sums[name] = sums.get(name, 0.0) + value
            correct += int((predictions == batch.activity).sum())
            seen += batch.size
            batches += 1

        means = {name: value / max(batches, 1) for name, value in sums.items()}
        means["train_acc"] = correct / max(seen, 1)
        return means

    def fit(self, train_samples: Sequence[PreparedSample]) -> TrainResult:
        """Полный цикл обучения по подготовленным обучающим примерам"""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if self.metrics_path.exists():
            logger.warning(f"⚠️ Журнал метрик {self.metrics_path} перезаписывается новым запуском")
            self.metrics_path.unlink()
        with open(self.out_dir / "config.json", "w", encoding="utf-8") as fh:
            json.dump(self.run.to_dict(), fh, indent=2)

        train, val = split_validation(train_samples, self.run.validation_fraction, self.run.seed)
        self.model = self.build_model()
        optimizer = Adam(self.model.parameters(), lr=self.run.optimizer.lr_at(1),
                         betas=tuple(self.run.optimizer.betas), eps=self.run.optimizer.eps)

        logger.info("=" * 60)
        logger.info(f"🚀 Запуск обучения {self.run.model_kind.upper()}: {len(train)} train / {len(val)} val, "
                    f"{self.run.epochs} эпох, seed {self.run.seed}")
        logger.info("=" * 60)

        started = time.monotonic()
        best_epoch, best_score, val_map = 0, None, None
        best_loss = np.inf
        for epoch in range(1, self.run.epochs + 1):
            optimizer.lr = self.run.optimizer.lr_at(epoch)
            means = self.train_epoch(epoch, optimizer, train)
            val_map = self._validation_map(train, val)
            elapsed = time.monotonic() - started

            self._append_metrics({
                "epoch": epoch,
                "lr": optimizer.lr,
                "loss": means["total"],
                "loss_cls": means["cls"],
                "loss_acty": means["acty"],
                "loss_action": means["action"],
                "loss_q": means["q"],
                "loss_con": means.get("con"),
                "loss_h": means.get("h"),
                "loss_recon": means.get("recon"),
                "train_acc": means["train_acc"],
                "val_map": val_map,
                "elapsed": elapsed,
            })
            extra = {"epoch": epoch, "val_map": val_map, "loss": means["total"]}
            save_checkpoint(self.checkpoint_dir / "last", self.model, extra)

            improved = (val_map is not None and (best_score is None or val_map > best_score)) or \
                       (val_map is None and means["total"] < best_loss)
            if improved:
                best_epoch, best_score, best_loss = epoch, val_map, means["total"]
                save_checkpoint(self.checkpoint_dir / "best", self.model, extra)

            logger.info(f"📈 Эпоха {epoch}/{self.run.epochs}: лосс {format_metric(means['total'])}, "
                        f"точность {format_percentage(means['train_acc'] * 100)}, "
                        f"val mAP@{self.run.map_k} {format_metric(val_map)}, lr {optimizer.lr:g}")

        save_checkpoint(self.checkpoint_dir / "final", self.model,
                        {"epoch": self.run.epochs, "val_map": val_map, "best_epoch": best_epoch})
        logger.info(f"💾 Чекпоинт final/ и best/ (эпоха {best_epoch}) сохранены в {self.checkpoint_dir}")
        logger.info(f"🏁 Обучение завершено за {format_duration(time.monotonic() - started)}")

        return TrainResult(model=self.model, out_dir=self.out_dir, best_epoch=best_epoch,
                           best_val_map=best_score, final_val_map=val_map, epochs=self.run.epochs)
