# src/utils/errors.py
class ShapeError(ValueError):
    """Несовместимые формы массивов"""


class ConfigError(ValueError):
    """Ошибка конфигурации (код выхода 2)"""


class NumericError(ArithmeticError):
    """Нечисловые значения в лоссе или градиентах (код выхода 3)"""


class FormatError(ValueError):
    """Повреждённый или чужой бинарный файл"""
