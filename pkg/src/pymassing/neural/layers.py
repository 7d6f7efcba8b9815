from logging import getLogger
from typing import Dict, Iterator, List, Tuple

import msgspec
import numpy as np

from pymassing.errors import DimensionError
from pymassing.neural.tensor import Tensor, layer_norm

logger = getLogger(__name__)


class AttentionConfig(msgspec.Struct, frozen=True):
    """
    Shape of a causal attention stack.
    """

    input_dim: int
    model_dim: int = 128
    layers: int = 4
    heads: int = 8
    max_len: int = 40

    def __post_init__(self) -> None:
        if min(self.input_dim, self.model_dim, self.layers, self.heads, self.max_len) < 1:
            raise ValueError(f"Attention dimensions must be positive: {self}")
        if self.model_dim % self.heads != 0:
            raise ValueError(f"model_dim {self.model_dim} is not divisible by {self.heads} heads")


class Module:
    """
    Owner of parameters. Parameters are Tensors with requires_grad, found by walking the attributes in definition order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            match value:
                case Tensor() if value.requires_grad:
                    yield path, value
                case Module():
                    yield from value.named_parameters(f"{path}.")
                case list():
                    for i, item in enumerate(value):
                        if isinstance(item, Module):
                            yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if own.keys() != state.keys():
            missing = sorted(own.keys() - state.keys())
            unexpected = sorted(state.keys() - own.keys())
            raise DimensionError(f"Parameter names differ, missing {missing}, unexpected {unexpected}")
        for name, p in own.items():
            if p.data.shape != state[name].shape:
                raise DimensionError(f"Parameter {name} has shape {p.data.shape}, got {state[name].shape}")
            p.data = np.array(state[name], dtype=np.float64)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def parameter(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator) -> None:
        self.weight = parameter(rng, in_dim, (in_dim, out_dim))
        self.bias = parameter(rng, in_dim, (out_dim,))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.weight.shape[0]:
            raise DimensionError(f"Linear expects width {self.weight.shape[0]}, got {x.shape[-1]}")
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int) -> None:
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x) * self.gain + self.bias


def causal_mask(t: int) -> np.ndarray:
    """
    True above the diagonal, i.e. where a position would look into its future.
    """
    return np.triu(np.ones((t, t), dtype=bool), k=1)


class CausalSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator) -> None:
        if dim % heads != 0:
            raise DimensionError(f"Width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def _split_heads(self, x: Tensor, b: int, t: int) -> Tensor:
        return x.reshape(b, t, self.heads, self.head_dim).transpose(0, 2, 1, 3)

    def weights(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """
        Attention weights of shape (B, heads, T, T) together with the values they mix.
        """
        b, t, d = x.shape
        qkv = self.qkv(x)
        q = self._split_heads(qkv[..., :d], b, t)
        k = self._split_heads(qkv[..., d : 2 * d], b, t)
        v = self._split_heads(qkv[..., 2 * d :], b, t)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.head_dim))
        return scores.masked_fill(causal_mask(t), -np.inf).softmax(axis=-1), v

    def __call__(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        att, v = self.weights(x)
        y = (att @ v).transpose(0, 2, 1, 3).reshape(b, t, d)
        return self.proj(y)


class FeedForward(Module):
    def __init__(self, dim: int, rng: np.random.Generator) -> None:
        self.up = Linear(dim, 4 * dim, rng)
        self.down = Linear(4 * dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(self.up(x).gelu())


class Block(Module):
    """
    Pre-norm residual block: attention sublayer, then feed forward sublayer.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator) -> None:
        self.ln_attention = LayerNorm(dim)
        self.attention = CausalSelfAttention(dim, heads, rng)
        self.ln_feed_forward = LayerNorm(dim)
        self.feed_forward = FeedForward(dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise DimensionError(f"Block expects (batch, time, width), got {x.shape}")
        x = x + self.attention(self.ln_attention(x))
        return x + self.feed_forward(self.ln_feed_forward(x))


def causal_self_attention_block(x: Tensor, block: Block) -> Tensor:
    """
    Applies one block to a single (T, width) sequence or a (B, T, width) batch.
    """
    if x.ndim == 2:
        t, d = x.shape
        return block(x.reshape(1, t, d)).reshape(t, d)
    return block(x)


def positional_encoding(t: int, dim: int) -> np.ndarray:
    """
    Sinusoidal table, even columns sin and odd columns cos of position / 10000^(2i/dim).
    """
    if t < 1 or dim < 1:
        raise ValueError(f"Positional encoding needs positive sizes, got ({t}, {dim})")
    positions = np.arange(t, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -(np.arange(0, dim, 2, dtype=np.float64) / dim))
    table = np.zeros((t, dim))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: dim // 2])
    return table
