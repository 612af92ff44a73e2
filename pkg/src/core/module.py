# src/core/module.py
"""Группы параметров и аффинный слой поверх Array"""
from dataclasses import dataclass, fields
from typing import List, Tuple
import numpy as np

from .tensor import Array, Parameter, as_array, matmul, reshape


def uniform_init(rng: np.random.Generator, name: str, shape: Tuple[int, ...], fan_in: int) -> Parameter:
    """Симметричное равномерное распределение с масштабом 1/sqrt(fan_in)"""
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(name, rng.uniform(-bound, bound, size=shape))


class ParamGroup:
    """Датакласс, поля которого - Parameter, вложенные группы или списки групп"""

    def parameters(self) -> List[Parameter]:
        params = []
        for item in fields(self):
            value = getattr(self, item.name)
            if isinstance(value, Parameter):
                params.append(value)
            elif isinstance(value, ParamGroup):
                params.extend(value.parameters())
            elif isinstance(value, list):
                for element in value:
                    params.extend(element.parameters())
        return params


@dataclass
class Linear(ParamGroup):
    """x @ weight + bias"""

    weight: Parameter
    bias: Parameter

    @classmethod
    def init(cls, rng: np.random.Generator, prefix: str, fan_in: int, fan_out: int) -> "Linear":
        return cls(
            weight=uniform_init(rng, f"{prefix}.weight", (fan_in, fan_out), fan_in),
            bias=uniform_init(rng, f"{prefix}.bias", (fan_out,), fan_in),
        )

    def __call__(self, x) -> Array:
        x = as_array(x)
        if x.ndim == 1:
            # одиночный вектор: (fan_in,) -> (1, fan_in) -> (fan_out,)
            return reshape(matmul(reshape(x, (1, x.shape[0])), self.weight), self.bias.shape) + self.bias
        return matmul(x, self.weight) + self.bias
