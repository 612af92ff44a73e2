# src/utils/logger.py
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from .config import config


class UTCFormatter(logging.Formatter):
    """Форматтер со временем UTC"""

    def formatTime(self, record, datefmt=None):
        dt = datetime.fromtimestamp(record.created, tz=timezone.utc)
        if datefmt:
            return dt.strftime(datefmt)
        else:
            return dt.strftime('%Y-%m-%d %H:%M:%S UTC')


def setup_logger(name: str = __name__) -> logging.Logger:
    """Настройка логгера: консоль + файлы в config.log_dir"""
    logger = logging.getLogger(name)

    # Проверяем что логгер еще не настроен
    if logger.handlers:
        return logger

    logger.setLevel(getattr(logging, config.log_level))
    logger.propagate = False

    formatter = UTCFormatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S UTC'
    )

    # === КОНСОЛЬНЫЙ ВЫВОД ===
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)

    # Устанавливаем UTF-8 для Windows
    if sys.platform == "win32" and hasattr(console_handler.stream, 'reconfigure'):
        try:
            console_handler.stream.reconfigure(encoding='utf-8')
        except (AttributeError, OSError):
            pass

    logger.addHandler(console_handler)

    # === ФАЙЛОВОЕ ЛОГИРОВАНИЕ ===
    try:
        log_dir = Path(config.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_dir / "gah.log", encoding='utf-8')
        file_handler.setFormatter(formatter)
        file_handler.setLevel(logging.INFO)
        logger.addHandler(file_handler)

        # Лог только ошибок
        error_handler = logging.FileHandler(log_dir / "errors.log", encoding='utf-8')
        error_handler.setFormatter(formatter)
        error_handler.setLevel(logging.ERROR)
        logger.addHandler(error_handler)

        # Лог хода обучения (только INFO+ с ключевыми словами)
        training_handler = TrainingLogHandler(log_dir / "training.log")
        training_handler.setFormatter(formatter)
        training_handler.setLevel(logging.INFO)
        logger.addHandler(training_handler)

    except (OSError, PermissionError) as e:
        logger.warning(f"⚠️ Не удалось настроить файловое логирование: {e}")

    return logger


class TrainingLogHandler(logging.FileHandler):
    """Обработчик, пишущий только сообщения о ходе обучения и оценки"""

    def __init__(self, filename, mode='a', encoding='utf-8', delay=False):
        super().__init__(filename, mode, encoding, delay)

        self.training_keywords = [
            'Эпоха',
            'Чекпоинт',
            'Запуск обучения',
            'Обучение завершено',
            'mAP@',
            'Точность',
            'Фильтр-матрица',
            'Коды записаны',
        ]

    def emit(self, record):
        """Записываем только сообщения обучения"""
        if record.levelno >= logging.INFO:
            message = record.getMessage()
            if any(keyword in message for keyword in self.training_keywords):
                super().emit(record)


# Основной логгер для использования в проекте
logger = setup_logger("gah")
