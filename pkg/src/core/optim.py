# src/core/optim.py
"""Adam с коррекцией смещения моментов"""
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple
import numpy as np

from .tensor import Parameter
from ..utils.errors import NumericError, ShapeError


@dataclass
class AdamState:
    """Первый/второй моменты по имени параметра и номер шага"""

    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """
    Один шаг Adam: параметры обновляются на месте, состояние возвращается

    NaN/Inf в градиенте прерывает шаг до изменения каких-либо параметров.
    """
    if len(params) != len(grads):
        raise ShapeError(f"adam_step: {len(params)} параметров, {len(grads)} градиентов")
    for param, grad in zip(params, grads):
        if grad.shape != param.shape:
            raise ShapeError(f"Градиент {param.name}: форма {grad.shape}, ожидалась {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Нечисловой градиент параметра {param.name}")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for param, grad in zip(params, grads):
        m = state.m.get(param.name, np.zeros_like(param.data))
        v = state.v.get(param.name, np.zeros_like(param.data))
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[param.name] = m
        state.v[param.name] = v
        param.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


class Adam:
    """Оптимизатор над списком параметров с накопленными .grad"""

    def __init__(self, params: List[Parameter], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("Имена параметров оптимизатора должны быть уникальными")
        self.params = params
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr, self.betas, self.eps)
