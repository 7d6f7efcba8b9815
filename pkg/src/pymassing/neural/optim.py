from logging import getLogger
from typing import List, Literal, Sequence

import numpy as np

from pymassing.errors import DimensionError
from pymassing.neural.tensor import Tensor

logger = getLogger(__name__)


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> List[np.ndarray]:
    """
    Pure update p - lr * g, the inputs are left untouched.
    """
    if lr < 0:
        raise ValueError(f"Learning rate must not be negative, got {lr}")
    if len(params) != len(grads):
        raise DimensionError(f"Got {len(params)} parameters but {len(grads)} gradients")
    out: List[np.ndarray] = []
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise DimensionError(f"Parameter shape {np.shape(p)} does not match gradient shape {np.shape(g)}")
        out.append(np.asarray(p, dtype=np.float64) - lr * np.asarray(g, dtype=np.float64))
    return out


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float) -> None:
        if lr < 0:
            raise ValueError(f"Learning rate must not be negative, got {lr}")
        self.params = list(params)
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def _grads(self) -> List[np.ndarray]:
        return [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]

    def step(self) -> None:
        raise NotImplementedError()


class SGD(Optimizer):
    """
    Plain stochastic gradient descent, heavy ball momentum when momentum > 0.
    """

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0) -> None:
        super().__init__(params, lr)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        grads = self._grads()
        if self.momentum:
            for v, g in zip(self.velocity, grads):
                v *= self.momentum
                v += g
            grads = self.velocity
        for p, new in zip(self.params, sgd_step([p.data for p in self.params], grads, self.lr)):
            p.data = new


class Adam(Optimizer):
    def __init__(self, params: Sequence[Tensor], lr: float, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        b1, b2 = self.betas
        self.t += 1
        for p, g, m, v in zip(self.params, self._grads(), self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: Literal["sgd", "adam"], params: Sequence[Tensor], lr: float, momentum: float = 0.0) -> Optimizer:
    match name:
        case "sgd":
            return SGD(params, lr, momentum)
        case "adam":
            return Adam(params, lr)
        case _:
            raise ValueError(f"Unknown optimizer {name}")
