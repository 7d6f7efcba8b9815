from contextlib import contextmanager
from contextvars import ContextVar
from logging import getLogger
from typing import Any, Iterator, List, Sequence, Tuple

import numpy as np

from pymassing.errors import DimensionError

logger = getLogger(__name__)

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Forward passes inside this context record no graph. Used for frozen inference.
    """
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    """
    A float64 array that remembers the Function which produced it.
    grad has the shape of data once backward() reached this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_ctx")

    def __init__(self, data: Any, requires_grad: bool = False, _ctx: "Function | None" = None) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._ctx = _ctx

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __add__(self, other: Any) -> "Tensor":
        return Add.apply(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return Add.apply(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return Sub.apply(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return Sub.apply(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return Mul.apply(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return Mul.apply(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return Div.apply(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return Div.apply(other, self)

    def __matmul__(self, other: Any) -> "Tensor":
        return MatMul.apply(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return GetItem.apply(self, index=index)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def tanh(self) -> "Tensor":
        return Tanh.apply(self)

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    def gelu(self) -> "Tensor":
        return Gelu.apply(self)

    def sum(self, axis: int | Tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | Tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else int(np.prod([self.shape[a] for a in np.atleast_1d(axis)]))
        return Sum.apply(self, axis=axis, keepdims=keepdims) / float(n)

    def reshape(self, *shape: int) -> "Tensor":
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes: int) -> "Tensor":
        return Transpose.apply(self, axes=axes)

    def softmax(self, axis: int = -1) -> "Tensor":
        return Softmax.apply(self, axis=axis)

    def masked_fill(self, mask: np.ndarray, value: float) -> "Tensor":
        return MaskedFill.apply(self, mask=mask, value=value)

    def clip(self, low: float, high: float) -> "Tensor":
        return Clip.apply(self, low=low, high=high)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """
        Accumulates d(self)/d(leaf) into every reachable tensor with requires_grad.
        """
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        self.grad = grad if self.grad is None else self.grad + grad

        for node in reversed(_toposort(self)):
            ctx = node._ctx
            if ctx is None or node.grad is None:
                continue
            for parent, g in zip(ctx.parents, ctx.backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            # interior gradients are not needed any more
            if not _is_leaf(node):
                node.grad = None


def _is_leaf(t: Tensor) -> bool:
    return t._ctx is None


def _toposort(root: Tensor) -> List[Tensor]:
    # iterative, attention stacks are deeper than the recursion limit allows for long graphs
    order: List[Tensor] = []
    visited: set[int] = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if id(parent) not in visited and parent.requires_grad:
                    stack.append((parent, False))
    return order


def as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Sums a broadcast gradient back down to the operand shape.
    """
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Function:
    """
    One differentiable operation. forward() sees arrays, backward() returns one gradient per parent.
    """

    def __init__(self, *parents: Tensor, **kwargs: Any) -> None:
        self.parents = parents
        self.kwargs = kwargs

    @classmethod
    def apply(cls, *args: Any, **kwargs: Any) -> Tensor:
        parents = tuple(as_tensor(a) for a in args)
        ctx = cls(*parents, **kwargs)
        out = ctx.forward(*[p.data for p in parents])
        requires_grad = _grad_enabled.get() and any(p.requires_grad for p in parents)
        return Tensor(out, requires_grad=requires_grad, _ctx=ctx if requires_grad else None)

    def forward(self, *args: np.ndarray) -> np.ndarray:
        raise NotImplementedError()

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        raise NotImplementedError()


class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (-grad,)


class Add(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.shapes = (x.shape, y.shape)
        return x - y

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return unbroadcast(grad, self.shapes[0]), unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x * y

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return unbroadcast(grad * self.y, self.x.shape), unbroadcast(grad * self.x, self.y.shape)


class Div(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x / y

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return unbroadcast(grad / self.y, self.x.shape), unbroadcast(-grad * self.x / (self.y * self.y), self.y.shape)


class MatMul(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if x.ndim < 2 or y.ndim < 2:
            raise DimensionError(f"matmul needs at least 2d operands, got {x.shape} and {y.shape}")
        if x.shape[-1] != y.shape[-2]:
            raise DimensionError(f"matmul shapes {x.shape} and {y.shape} do not align")
        self.x, self.y = x, y
        return x @ y

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        gx = grad @ np.swapaxes(self.y, -1, -2)
        gy = np.swapaxes(self.x, -1, -2) @ grad
        return unbroadcast(gx, self.x.shape), unbroadcast(gy, self.y.shape)


class Exp(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.exp(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.out,)


class Log(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return np.log(x)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad / self.x,)


class Tanh(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        # exp of a non positive argument never overflows
        e = np.exp(-np.abs(x))
        self.out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.out * (1.0 - self.out),)


_GELU_C = np.sqrt(2.0 / np.pi)


class Gelu(Function):
    """
    tanh approximation of GELU as used by GPT-2
    """

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        self.t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
        return 0.5 * x * (1.0 + self.t)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        x, t = self.x, self.t
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (grad * d,)


class Sum(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.shape = x.shape
        return np.sum(x, axis=self.kwargs["axis"], keepdims=self.kwargs["keepdims"])

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        axis = self.kwargs["axis"]
        if axis is not None and not self.kwargs["keepdims"]:
            grad = np.expand_dims(grad, tuple(a % len(self.shape) for a in np.atleast_1d(axis)))
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.shape = x.shape
        return x.reshape(self.kwargs["shape"])

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.transpose(x, self.kwargs["axes"])

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (np.transpose(grad, np.argsort(self.kwargs["axes"])),)


class Softmax(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        axis = self.kwargs["axis"]
        shifted = x - np.max(x, axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        s = self.out
        return (s * (grad - np.sum(grad * s, axis=self.kwargs["axis"], keepdims=True)),)


class MaskedFill(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = np.broadcast_to(self.kwargs["mask"], x.shape)
        return np.where(self.mask, self.kwargs["value"], x)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (np.where(self.mask, 0.0, grad),)


class Clip(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        low, high = self.kwargs["low"], self.kwargs["high"]
        self.inside = (x >= low) & (x <= high)
        return np.clip(x, low, high)

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        return (grad * self.inside,)


class GetItem(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.shape = x.shape
        return x[self.kwargs["index"]]

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        out = np.zeros(self.shape)
        np.add.at(out, self.kwargs["index"], grad)
        return (out,)


class LayerNormOp(Function):
    """
    Normalization over the last axis without gain and bias.
    """

    def forward(self, x: np.ndarray) -> np.ndarray:
        eps = self.kwargs["eps"]
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        self.inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
        self.xhat = centered * self.inv_std
        return self.xhat

    def backward(self, grad: np.ndarray) -> Sequence[np.ndarray | None]:
        n = grad.shape[-1]
        g_sum = grad.sum(axis=-1, keepdims=True)
        gx_sum = (grad * self.xhat).sum(axis=-1, keepdims=True)
        return (self.inv_std / n * (n * grad - g_sum - self.xhat * gx_sum),)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    return LayerNormOp.apply(x, eps=eps)
