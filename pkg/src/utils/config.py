# src/utils/config.py
import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional
from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()

ACTIVITY_TEMPLATES = ("converge", "disperse", "queue", "cross", "follow", "scatter")


@dataclass
class Config:
    """Настройки окружения (переменные GAH_*)"""

    log_level: str = "INFO"
    log_dir: str = "logs"
    threads: int = 1
    output_dir: str = "runs"

    @classmethod
    def from_env(cls) -> "Config":
        """Создание конфигурации из переменных окружения"""
        log_level = os.getenv("GAH_LOG_LEVEL", "INFO").upper()
        if log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"Некорректное значение GAH_LOG_LEVEL: {log_level}")

        try:
            threads = int(os.getenv("GAH_THREADS", "1"))
            if threads < 1:
                raise ValueError("GAH_THREADS должно быть >= 1")
        except ValueError as e:
            raise ConfigError(f"Некорректное значение GAH_THREADS: {e}")

        return cls(
            log_level=log_level,
            log_dir=os.getenv("GAH_LOG_DIR", "logs"),
            threads=threads,
            output_dir=os.getenv("GAH_OUTPUT_DIR", "runs"),
        )

    def reload(self) -> "Config":
        """Перечитать окружение в этот же объект (модули держат ссылку на глобальный config)"""
        fresh = Config.from_env()
        for item in fields(self):
            setattr(self, item.name, getattr(fresh, item.name))
        return self


@dataclass
class GeneratorConfig:
    """Параметры синтетических сцен"""

    N: int = 4
    T: int = 8
    A: int = 4
    P: int = 4
    C_act: int = 3
    d_v: int = 32
    map_size: int = 12  # W' = H'
    scene_size: float = 24.0
    train_samples: int = 512
    test_samples: int = 128
    clips_per_video: int = 8
    palette_seed: int = 7
    trajectory_noise: float = 0.08
    feature_noise: float = 0.25
    templates: List[str] = field(default_factory=lambda: list(ACTIVITY_TEMPLATES))

    def validate(self) -> None:
        errors = []
        if self.A < 2:
            errors.append("A должно быть >= 2")
        if self.A > len(self.templates):
            errors.append(f"A={self.A} больше числа шаблонов активностей ({len(self.templates)})")
        if self.N < 2:
            errors.append("N должно быть >= 2")
        if self.T < 2:
            errors.append("T должно быть >= 2")
        for name in ("P", "C_act", "d_v", "map_size", "train_samples", "clips_per_video"):
            if getattr(self, name) < 1:
                errors.append(f"{name} должно быть положительным")
        if self.scene_size <= 0:
            errors.append("scene_size должно быть положительным")
        unknown = [t for t in self.templates if t not in ACTIVITY_TEMPLATES]
        if unknown:
            errors.append(f"Неизвестные шаблоны активностей: {unknown}")
        if errors:
            raise ConfigError("Ошибки конфигурации генератора:\n" + "\n".join(f"- {e}" for e in errors))

    @property
    def total_samples(self) -> int:
        return self.train_samples + self.test_samples


def default_layer_weights(layers: int) -> List[float]:
    """Линейная рампа весов слоёв от 0.25 до 1.0"""
    if layers == 1:
        return [1.0]
    step = 0.75 / (layers - 1)
    return [0.25 + step * i for i in range(layers)]


@dataclass
class LossWeights:
    """Веса компонент функции потерь"""

    lambda1: float = 0.1
    lambda2: float = 0.5
    mu1: float = 0.1
    mu2: float = 0.5
    mu3: float = 0.01
    action_weight: float = 0.5
    layer_weights: Optional[List[float]] = None
    variant: str = "full"

    def resolved(self, model_kind: str, layers: int) -> "LossWeights":
        """Применение варианта абляции и весов слоёв по умолчанию"""
        weights = LossWeights(**asdict(self))
        if weights.layer_weights is None:
            weights.layer_weights = default_layer_weights(layers)

        if model_kind == "stvh":
            if weights.variant == "cls":
                weights.lambda1, weights.lambda2 = 0.0, 0.0
            elif weights.variant == "cls_q":
                weights.lambda2 = 0.0
        else:
            if weights.variant == "cls_recon":
                weights.mu1, weights.mu2 = 0.0, 0.0
            elif weights.variant == "cls_q_recon":
                weights.mu2 = 0.0
        return weights

    def validate(self, layers: int) -> List[str]:
        errors = []
        for name in ("lambda1", "lambda2", "mu1", "mu2", "mu3", "action_weight"):
            if getattr(self, name) < 0:
                errors.append(f"{name} должен быть неотрицательным")
        if self.variant not in ("full", "cls", "cls_q", "cls_recon", "cls_q_recon"):
            errors.append(f"Неизвестный вариант лосса: {self.variant}")
        if self.layer_weights is not None:
            if len(self.layer_weights) != layers:
                errors.append(f"layer_weights: ожидалось {layers} значений, получено {len(self.layer_weights)}")
            if any(w < 0 for w in self.layer_weights):
                errors.append("layer_weights должны быть неотрицательными")
            if any(b < a for a, b in zip(self.layer_weights, self.layer_weights[1:])):
                errors.append("layer_weights должны не убывать по слоям")
        return errors


@dataclass
class OptimizerConfig:
    """Adam и ступенчатое расписание learning rate"""

    kind: str = "adam"
    schedule: Dict[int, float] = field(default_factory=lambda: {1: 1e-3, 11: 5e-4, 21: 2e-4})
    betas: List[float] = field(default_factory=lambda: [0.9, 0.999])
    eps: float = 1e-8

    def lr_at(self, epoch: int) -> float:
        """Learning rate для эпохи (эпохи нумеруются с 1)"""
        rate = None
        for start in sorted(self.schedule):
            if epoch >= start:
                rate = self.schedule[start]
        if rate is None:
            rate = self.schedule[min(self.schedule)]
        return rate

    def validate(self) -> List[str]:
        errors = []
        if self.kind != "adam":
            errors.append(f"Поддерживается только adam, получено: {self.kind}")
        if not self.schedule:
            errors.append("Расписание learning rate пустое")
        if any(rate <= 0 for rate in self.schedule.values()):
            errors.append("Learning rate должен быть положительным")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            errors.append("betas должны быть парой значений из [0, 1)")
        if self.eps <= 0:
            errors.append("eps должен быть положительным")
        return errors


@dataclass
class RunConfig:
    """Конфигурация запуска обучения/оценки"""

    model_kind: str = "stvh"
    fusion: str = "msf"
    N: int = 4
    T: int = 8
    d_v: int = 32
    d: int = 64
    K: int = 64
    layers: int = 4
    A: int = 4
    C_act: int = 3
    P: int = 4
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    epochs: int = 60
    batch_size: int = 8
    seed: int = 0
    dataset: Optional[str] = None
    precomputed_features: Optional[str] = None
    validation_fraction: float = 0.1
    map_k: int = 10
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        # Размерности генератора всегда совпадают с размерностями модели
        self.generator.N = self.N
        self.generator.T = self.T
        self.generator.A = self.A
        self.generator.P = self.P
        self.generator.C_act = self.C_act
        self.generator.d_v = self.d_v

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Создание конфигурации из словаря (JSON/TOML)"""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Неизвестные поля конфигурации: {unknown}")

        data = dict(data)
        try:
            if "loss_weights" in data:
                data["loss_weights"] = LossWeights(**data["loss_weights"])
            if "optimizer" in data:
                optimizer = dict(data["optimizer"])
                if "schedule" in optimizer:
                    optimizer["schedule"] = {int(k): float(v) for k, v in optimizer["schedule"].items()}
                data["optimizer"] = OptimizerConfig(**optimizer)
            if "generator" in data:
                data["generator"] = GeneratorConfig(**data["generator"])
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"Некорректная структура конфигурации: {e}")

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """Загрузка конфигурации из .json или .toml"""
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"Файл конфигурации не найден: {path}")

        try:
            if config_path.suffix == ".toml":
                with open(config_path, "rb") as fh:
                    data = tomllib.load(fh)
            else:
                with open(config_path, "r", encoding="utf-8") as fh:
                    data = json.load(fh)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Не удалось разобрать {path}: {e}")

        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @property
    def resolved_weights(self) -> LossWeights:
        return self.loss_weights.resolved(self.model_kind, self.layers)

    def validate(self) -> bool:
        """Валидация всех настроек"""
        errors = []

        if self.model_kind not in ("stvh", "mstvh"):
            errors.append(f"model_kind должен быть 'stvh' или 'mstvh', получено: {self.model_kind}")
        for name in ("N", "T", "d_v", "d", "K", "layers", "A", "C_act", "P", "epochs", "batch_size", "map_k"):
            if getattr(self, name) < 1:
                errors.append(f"{name} должно быть положительным")
        if self.model_kind == "mstvh" and self.layers < 2:
            errors.append("M-STVH требует layers >= 2")
        if self.fusion not in ("msf", "bd", "ed"):
            errors.append(f"fusion должен быть msf, bd или ed, получено: {self.fusion}")
        elif self.fusion != "msf" and self.model_kind != "mstvh":
            errors.append("Блоки трансформера (fusion bd/ed) поддерживаются только для M-STVH")
        if not (0.0 <= self.validation_fraction < 1.0):
            errors.append("validation_fraction должен лежать в [0, 1)")

        errors.extend(self.loss_weights.validate(self.layers))
        errors.extend(self.optimizer.validate())

        try:
            self.generator.validate()
        except ConfigError as e:
            errors.append(str(e))

        if errors:
            raise ConfigError("Ошибки конфигурации:\n" + "\n".join(f"- {error}" for error in errors))

        return True

    def print_config(self) -> None:
        """Вывод конфигурации для проверки"""
        print("=" * 50)
        print("КОНФИГУРАЦИЯ ЗАПУСКА")
        print("=" * 50)
        print(f"Модель: {self.model_kind}, слияние: {self.fusion}")
        print(f"Размерности: N={self.N} T={self.T} d_v={self.d_v} d={self.d} K={self.K} слоёв={self.layers}")
        print(f"Классы: A={self.A} C_act={self.C_act} P={self.P}")
        print(f"Эпох: {self.epochs}, батч: {self.batch_size}, seed: {self.seed}")
        print(f"Расписание LR: {self.optimizer.schedule}")
        print(f"Датасет: {self.dataset or 'генерация в памяти'}")
        print("=" * 50)


# Глобальный экземпляр конфигурации окружения. Ошибка окружения не роняет импорт:
# run_cli перечитывает окружение через config.reload() и завершает работу с кодом 2.
try:
    config = Config.from_env()
except ConfigError:
    config = Config()
