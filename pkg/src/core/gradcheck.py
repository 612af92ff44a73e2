# src/core/gradcheck.py
from typing import Callable, Optional, Sequence
import numpy as np

from .tensor import Array, Parameter, no_grad
from ..utils.errors import ShapeError

# Относительная погрешность вычисления скалярного лосса в float64;
# расхождения в пределах округления разностного отношения не учитываются
ROUNDOFF = 1e-13


def grad_check(f: Callable[[], Array], params: Sequence[Parameter], eps: float = 1e-5,
               max_entries: Optional[int] = None, seed: int = 0) -> float:
    """
    Сравнение аналитических градиентов с центральными разностями

    Args:
        f: функция без аргументов, возвращающая скалярный Array
        params: параметры, по которым проверяются градиенты
        eps: шаг центральной разности, (0, 1e-2]
        max_entries: если задано - проверяется случайное подмножество элементов каждого параметра
        seed: seed выбора подмножества

    Returns:
        Максимум |analytic - central| / (|analytic| + |central| + 1e-12) по всем проверенным элементам
    """
    if not 0 < eps <= 1e-2:
        raise ValueError(f"eps должен лежать в (0, 1e-2], получено {eps}")

    for param in params:
        param.zero_grad()

    out = f()
    if out.size != 1:
        raise ShapeError(f"grad_check требует скалярную функцию, получена форма {out.shape}")
    out.backward()
    analytic = [param.grad.copy() for param in params]

    rng = np.random.default_rng(seed)
    worst = 0.0

    with no_grad():
        for param, grad in zip(params, analytic):
            flat = param.data.reshape(-1)
            flat_grad = grad.reshape(-1)
            indices = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

            for i in indices:
                original = flat[i]
                flat[i] = original + eps
                f_plus = f().item()
                flat[i] = original - eps
                f_minus = f().item()
                flat[i] = original

                central = (f_plus - f_minus) / (2.0 * eps)
                noise = ROUNDOFF * (abs(f_plus) + abs(f_minus)) / (2.0 * eps)
                diff = max(abs(flat_grad[i] - central) - noise, 0.0)
                error = diff / (abs(flat_grad[i]) + abs(central) + 1e-12)
                worst = max(worst, error)

    return worst
