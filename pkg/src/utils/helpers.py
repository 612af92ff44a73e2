# src/utils/helpers.py
from typing import Union
from datetime import datetime, timezone
import numpy as np


def get_utc_time() -> datetime:
    """Получение текущего времени в UTC"""
    return datetime.now(timezone.utc)


def format_utc_time(dt: datetime = None, format_str: str = "%H:%M:%S") -> str:
    """
    Форматирование времени в UTC

    Args:
        dt: datetime объект (если None - берется текущее время)
        format_str: строка форматирования

    Returns:
        Отформатированная строка времени
    """
    if dt is None:
        dt = get_utc_time()
    elif dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)

    return dt.astimezone(timezone.utc).strftime(format_str)


def format_percentage(value: Union[float, int, str], decimal_places: int = 2) -> str:
    """
    Форматирование процентов

    Examples:
        format_percentage(75.5) -> "75.50%"
        format_percentage(0.123, 3) -> "0.123%"
    """
    try:
        if isinstance(value, (str, int)):
            value = float(value)

        return f"{value:.{decimal_places}f}%"

    except (ValueError, TypeError):
        return f"{value}%"


def format_metric(value: Union[float, int, None], decimal_places: int = 4) -> str:
    """Форматирование значения метрики/лосса для логов"""
    if value is None:
        return "-"
    try:
        value = float(value)
    except (ValueError, TypeError):
        return str(value)
    if not np.isfinite(value):
        return str(value)
    if value != 0 and abs(value) < 10 ** -decimal_places:
        return f"{value:.2e}"
    return f"{value:.{decimal_places}f}"


def format_duration(seconds: Union[int, float]) -> str:
    """
    Форматирование продолжительности в удобочитаемый вид

    Examples:
        format_duration(42) -> "42.0 с"
        format_duration(125) -> "2 мин 5 с"
        format_duration(3725) -> "1 ч 2 мин"
    """
    try:
        seconds = float(seconds)
    except (ValueError, TypeError):
        return f"{seconds} с"

    if seconds < 60:
        return f"{seconds:.1f} с"

    total = int(seconds)
    hours = total // 3600
    minutes = (total % 3600) // 60
    rest = total % 60

    if hours > 0:
        return f"{hours} ч {minutes} мин"
    return f"{minutes} мин {rest} с"


def derive_seed(*parts: int) -> int:
    """Детерминированный 64-битный seed из набора целых чисел"""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])


def sign_pm1(values: np.ndarray) -> np.ndarray:
    """Знак с конвенцией sign(0) = +1, результат в {-1, +1} (int8)"""
    values = np.asarray(values)
    return np.where(values >= 0, 1, -1).astype(np.int8)
