# src/core/tensor.py
"""
Минимальное дифференцируемое ядро на numpy (reverse-mode).

Лента строится заново на каждом прямом проходе: каждый результат операции
хранит ссылки на родителей и замыкание обратного прохода. Массивы считаются
неизменяемыми после создания; исключение: данные Parameter, которые меняет
оптимизатор (и grad_check на время возмущения).
"""
import contextlib
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union
import numpy as np

from ..utils.errors import ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Прямой проход без построения ленты (инференс, конечные разности)"""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Array:
    """Плотный массив float64 с поддержкой обратного прохода"""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False,
                 parents: Tuple["Array", ...] = (),
                 backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Array":
        return Array(self.data)

    def __repr__(self):
        return f"Array(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Обратный проход от скалярного результата; градиенты копятся в листьях"""
        if self.data.size != 1:
            raise ShapeError(f"backward требует скаляр, получена форма {self.shape}")

        # Топологический порядок без рекурсии
        order: List[Array] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    # Операторы
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims: bool = False) -> "Array":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Array":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Array":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, axis1: int, axis2: int) -> "Array":
        return swapaxes(self, axis1, axis2)


class Parameter(Array):
    """Обучаемый параметр: имя, значение и накопленный градиент той же формы"""

    def __init__(self, name: str, data):
        super().__init__(np.array(data, dtype=np.float64, copy=True, order="C"), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> Array:
        return self

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


ArrayLike = Union[Array, np.ndarray, float, int]


def as_array(value: ArrayLike) -> Array:
    """Константа -> Array без градиента"""
    return value if isinstance(value, Array) else Array(value)


def _result(data: np.ndarray, parents: Tuple[Array, ...], backward) -> Array:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Array(data, requires_grad=True, parents=parents, backward=backward)
    return Array(data)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Сворачивание градиента к форме операнда после broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Array, b: Array, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: формы {a.shape} и {b.shape} несовместимы")


def _normalize_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"{op}: ось {axis} недопустима для массива ранга {ndim}")
    return axis % ndim


def _normalize_axes(axis, ndim: int, op: str) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(_normalize_axis(a, ndim, op) for a in axis))


# === Поэлементная арифметика ===

def add(a: ArrayLike, b: ArrayLike) -> Array:
    a, b = as_array(a), as_array(b)
    _broadcast_shape(a, b, "add")

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: ArrayLike, b: ArrayLike) -> Array:
    a, b = as_array(a), as_array(b)
    _broadcast_shape(a, b, "sub")

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: ArrayLike, b: ArrayLike) -> Array:
    a, b = as_array(a), as_array(b)
    _broadcast_shape(a, b, "mul")

    def backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def div(a: ArrayLike, b: ArrayLike) -> Array:
    a, b = as_array(a), as_array(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(grad):
        return _unbroadcast(grad / b.data, a.shape), _unbroadcast(-grad * out / b.data, b.shape)

    return _result(out, (a, b), backward)


def neg(a: ArrayLike) -> Array:
    a = as_array(a)
    return _result(-a.data, (a,), lambda grad: (-grad,))


def exp(a: ArrayLike) -> Array:
    a = as_array(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda grad: (grad * out,))


def log(a: ArrayLike) -> Array:
    a = as_array(a)
    return _result(np.log(a.data), (a,), lambda grad: (grad / a.data,))


def sqrt(a: ArrayLike) -> Array:
    a = as_array(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda grad: (grad * 0.5 / out,))


def tanh(a: ArrayLike) -> Array:
    a = as_array(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda grad: (grad * (1.0 - out * out),))


def relu(a: ArrayLike) -> Array:
    a = as_array(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda grad: (grad * mask,))


def absolute(a: ArrayLike) -> Array:
    a = as_array(a)
    return _result(np.abs(a.data), (a,), lambda grad: (grad * np.sign(a.data),))


# === Редукции и перестановки ===

def sum_(a: ArrayLike, axis=None, keepdims: bool = False) -> Array:
    a = as_array(a)
    axes = _normalize_axes(axis, a.ndim, "sum")
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(grad):
        if not keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _result(out, (a,), backward)


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Array:
    a = as_array(a)
    axes = _normalize_axes(axis, a.ndim, "mean")
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"mean: пустая ось у формы {a.shape}")
    return mul(sum_(a, axis=axes, keepdims=keepdims), 1.0 / count)


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Array:
    a = as_array(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(_normalize_axis(ax, a.ndim, "transpose") for ax in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: {axes} не является перестановкой осей формы {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda grad: (np.transpose(grad, inverse),))


def swapaxes(a: ArrayLike, axis1: int, axis2: int) -> Array:
    a = as_array(a)
    axis1 = _normalize_axis(axis1, a.ndim, "swapaxes")
    axis2 = _normalize_axis(axis2, a.ndim, "swapaxes")
    return _result(np.swapaxes(a.data, axis1, axis2), (a,), lambda grad: (np.swapaxes(grad, axis1, axis2),))


def reshape(a: ArrayLike, shape: Sequence[int]) -> Array:
    a = as_array(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: форму {a.shape} нельзя привести к {tuple(shape)}")
    return _result(out, (a,), lambda grad: (grad.reshape(a.shape),))


def concatenate(arrays: Iterable[ArrayLike], axis: int = 0) -> Array:
    arrays = tuple(as_array(x) for x in arrays)
    if not arrays:
        raise ShapeError("concatenate: пустой список массивов")
    axis = _normalize_axis(axis, arrays[0].ndim, "concatenate")
    try:
        out = np.concatenate([x.data for x in arrays], axis=axis)
    except ValueError:
        raise ShapeError(f"concatenate: несовместимые формы {[x.shape for x in arrays]}")
    splits = np.cumsum([x.shape[axis] for x in arrays])[:-1]

    def backward(grad):
        return tuple(np.split(grad, splits, axis=axis))

    return _result(out, arrays, backward)


# === Линейная алгебра ===

def matmul(a: ArrayLike, b: ArrayLike) -> Array:
    """Матричное произведение по двум последним осям с broadcasting батч-осей"""
    a, b = as_array(a), as_array(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: формы {a.shape} и {b.shape} несовместимы")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: батч-оси форм {a.shape} и {b.shape} несовместимы")

    def backward(grad):
        grad_a = grad @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ grad
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _result(a.data @ b.data, (a, b), backward)


# === Нормировки ===

def softmax(a: ArrayLike, axis: int = -1) -> Array:
    """Softmax вдоль оси со сдвигом на максимум"""
    a = as_array(a)
    axis = _normalize_axis(axis, a.ndim, "softmax")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(grad):
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward)


def log_softmax(a: ArrayLike, axis: int = -1) -> Array:
    a = as_array(a)
    axis = _normalize_axis(axis, a.ndim, "log_softmax")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(grad):
        return (grad - np.exp(out) * grad.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), backward)


LAYER_NORM_EPS = 1e-5


def layer_norm(x: ArrayLike, axis: int, gain: Array, bias: Array, eps: float = LAYER_NORM_EPS) -> Array:
    """LayerNorm вдоль оси: популяционная дисперсия, eps добавляется к дисперсии"""
    x = as_array(x)
    axis = _normalize_axis(axis, x.ndim, "layer_norm")
    n = x.shape[axis]
    if n == 0:
        raise ShapeError(f"layer_norm: ось {axis} нулевой длины у формы {x.shape}")
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(f"layer_norm: gain {gain.shape} и bias {bias.shape} не совпадают с длиной оси {n}")

    view = [1] * x.ndim
    view[axis] = n
    g = gain.data.reshape(view)
    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=axis, keepdims=True) + eps)
    x_hat = centered * inv_std
    out = x_hat * g + bias.data.reshape(view)
    other_axes = tuple(i for i in range(x.ndim) if i != axis)

    def backward(grad):
        d_hat = grad * g
        d_x = inv_std / n * (
            n * d_hat
            - d_hat.sum(axis=axis, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=axis, keepdims=True)
        )
        d_gain = (grad * x_hat).sum(axis=other_axes)
        d_bias = grad.sum(axis=other_axes)
        return d_x, d_gain, d_bias

    return _result(out, (x, gain, bias), backward)
