# main.py
import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from src.filter.filter_matrix import compression_ratio
from src.frontend.dataset import generate_dataset, load_dataset, save_dataset
from src.retrieval.codes import read_codes
from src.retrieval.metrics import write_report
from src.training.pipeline import (
    attention_dump, compress_codes, compression_report, dataset_for_run, derive_codes_file, encode,
    evaluate_files, fit_filter_file, load_index, read_layer, train, write_class_hamming,
)
from src.utils.config import RunConfig, config
from src.utils.errors import ConfigError, NumericError
from src.utils.helpers import format_utc_time
from src.utils.logger import logger

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class HashingApp:
    """Главный класс: разбор команды, запуск шага конвейера, коды выхода"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.run_config: Optional[RunConfig] = None

    @property
    def out_dir(self) -> Path:
        return Path(self.args.out or config.output_dir)

    def startup(self) -> None:
        """Проверка окружения и загрузка конфигурации запуска"""
        config.reload()
        logger.setLevel(config.log_level)
        logger.info("=" * 60)
        logger.info(f"🚀 GAH: команда '{self.args.command}'")
        logger.info(f"⏰ Время запуска: {format_utc_time()} UTC")
        logger.info("=" * 60)
        run = RunConfig.from_file(self.args.config) if self.args.config else RunConfig()
        if self.args.seed is not None:
            run.seed = self.args.seed
        run.validate()
        self.run_config = run

    def shutdown(self, reason: str) -> None:
        logger.info("=" * 60)
        logger.info(f"⏹️ Завершение: {reason}")
        logger.info(f"⏰ Время остановки: {format_utc_time()} UTC")
        logger.info("=" * 60)

    def execute(self) -> None:
        handler = getattr(self, "cmd_" + self.args.command.replace("-", "_"))
        handler()

    # === Команды ===

    def cmd_generate(self) -> None:
        dataset = generate_dataset(self.run_config.generator, self.run_config.seed)
        save_dataset(self.out_dir, dataset)

    def cmd_train(self) -> None:
        if self.args.dataset:
            self.run_config.dataset = self.args.dataset
        self.run_config.print_config()
        result = train(self.run_config, self.out_dir)
        logger.info(f"📊 Итог: {json.dumps(result.to_dict(), ensure_ascii=False)}")

    def _dataset(self):
        if self.args.dataset:
            return load_dataset(self.args.dataset)
        return dataset_for_run(self.run_config)

    def cmd_encode(self) -> None:
        encode(self.args.checkpoint, self._dataset(), self.out_dir, split=self.args.split,
               precomputed_features=self.run_config.precomputed_features)

    def cmd_fit_filter(self) -> None:
        filter_path = self.out_dir / "filter.gahf"
        fit_filter_file(self.args.codes, filter_path)
        stored = compress_codes(self.args.codes, self.out_dir / "codes_final.gahc")
        m, layers, k = read_codes(self.args.codes).shape
        report = compression_report(stored, filter_path)
        logger.info(f"📦 Хранение: {report}, CR = {compression_ratio(m, k, layers):.5f}")

    def cmd_derive_codes(self) -> None:
        derive_codes_file(self.args.codes, self.args.filter, self.args.layers,
                          self.out_dir / "codes_derived.gahc")

    def cmd_index(self) -> None:
        index = load_index(self.args.codes, self.args.labels, self.args.layer)
        logger.info(f"🗂️ Индекс: {index.size} кодов по {index.K} бит")
        if self.args.hamming:
            table = write_class_hamming(index, self.args.label_space, self.args.hamming)
            print(table.to_string(float_format=lambda v: f"{v:.2f}"))

    def cmd_query(self) -> None:
        index = load_index(self.args.codes, self.args.labels, self.args.layer)
        q_codes, q_ids, _ = read_layer(self.args.query_codes or self.args.codes,
                                       self.args.query_labels or self.args.labels, self.args.layer)
        matches = [i for i, qid in enumerate(q_ids) if qid == self.args.query_id]
        if not matches:
            raise KeyError(f"Запрос с id {self.args.query_id} не найден")
        result = index.query(q_codes[matches[0]], self.args.k, exclude_id=self.args.query_id)
        print(pd.DataFrame({"id": result.ids, "hamming": result.distances}).to_string(index=False))

    def cmd_eval(self) -> None:
        k = self.args.k or self.run_config.map_k
        report = evaluate_files(self.args.db_codes, self.args.db_labels, self.args.query_codes,
                                self.args.query_labels, self.args.label_space, k, self.args.layer,
                                self.args.protocol)
        path = write_report(self.out_dir / f"eval_{self.args.label_space}_layer{self.args.layer}.json", report)
        logger.info(f"📊 mAP@{k} = {report.value:.4f} -> {path}")
        if self.args.hamming:
            index = load_index(self.args.db_codes, self.args.db_labels, self.args.layer)
            write_class_hamming(index, self.args.label_space, self.args.hamming)

    def cmd_attn_dump(self) -> None:
        attention_dump(self.args.checkpoint, self._dataset(), self.args.ids, self.out_dir / "attention.npz")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gah", description="Хеширование групповых активностей")
    parser.add_argument("--config", help="Файл конфигурации .json/.toml")
    parser.add_argument("--seed", type=int, help="Seed запуска (переопределяет конфигурацию)")
    parser.add_argument("--out", help="Каталог результатов")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("generate", help="Сгенерировать синтетический датасет")

    train = commands.add_parser("train", help="Обучить модель")
    train.add_argument("--dataset", help="Каталог датасета (иначе генерация в памяти)")

    encode = commands.add_parser("encode", help="Записать коды для части датасета")
    encode.add_argument("--checkpoint", required=True)
    encode.add_argument("--dataset")
    encode.add_argument("--split", default="test", choices=["train", "test"])

    fit = commands.add_parser("fit-filter", help="Подобрать фильтр-матрицу по многослойным кодам")
    fit.add_argument("--codes", required=True)

    derive = commands.add_parser("derive-codes", help="Восстановить слои по кодам последнего слоя")
    derive.add_argument("--codes", required=True)
    derive.add_argument("--filter", required=True)
    derive.add_argument("--layers", type=int, required=True)

    index = commands.add_parser("index", help="Построить индекс и вывести его сводку")
    index.add_argument("--codes", required=True)
    index.add_argument("--labels", required=True)
    index.add_argument("--layer", type=int, default=-1)
    index.add_argument("--label-space", default="activity")
    index.add_argument("--hamming", help="CSV средних расстояний Хэмминга между классами")

    query = commands.add_parser("query", help="Top-k поиск для одного запроса")
    query.add_argument("--codes", required=True)
    query.add_argument("--labels", required=True)
    query.add_argument("--query-codes")
    query.add_argument("--query-labels")
    query.add_argument("--query-id", type=int, required=True)
    query.add_argument("--layer", type=int, default=-1)
    query.add_argument("--k", type=int, default=10)

    evaluate = commands.add_parser("eval", help="mAP@k по файлам кодов")
    evaluate.add_argument("--db-codes", required=True)
    evaluate.add_argument("--db-labels", required=True)
    evaluate.add_argument("--query-codes")
    evaluate.add_argument("--query-labels")
    evaluate.add_argument("--label-space", default="activity", choices=["activity", "appearance", "video-id"])
    evaluate.add_argument("--k", type=int)
    evaluate.add_argument("--layer", type=int, default=-1)
    evaluate.add_argument("--protocol", default="standard", choices=["standard", "mixed"])
    evaluate.add_argument("--hamming", help="CSV средних расстояний Хэмминга между классами")

    attn = commands.add_parser("attn-dump", help="Сохранить матрицы внимания по слоям")
    attn.add_argument("--checkpoint", required=True)
    attn.add_argument("--dataset")
    attn.add_argument("--ids", type=int, nargs="+", required=True)

    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    """Точка входа: возвращает код выхода"""
    args = build_parser().parse_args(argv)
    app = HashingApp(args)
    try:
        app.startup()
        app.execute()
    except ConfigError as e:
        logger.error(f"❌ Ошибка конфигурации: {e}")
        return EXIT_CONFIG
    except NumericError as e:
        logger.error(f"❌ Численная ошибка: {e}")
        app.shutdown("численная ошибка")
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        logger.info("⚠️ Получен Ctrl+C")
        app.shutdown("прервано пользователем")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"❌ Критическая ошибка: {e}")
        app.shutdown(f"ошибка: {e}")
        return EXIT_FAILURE

    app.shutdown("успешно")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(run_cli())
