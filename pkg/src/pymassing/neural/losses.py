from typing import Any

import numpy as np

from pymassing.errors import DimensionError
from pymassing.neural.tensor import Tensor, as_tensor

PROBABILITY_CLAMP = 1e-7


def _weights(mask: np.ndarray | None, shape: tuple) -> np.ndarray:
    if mask is None:
        return np.ones(shape)
    try:
        return np.broadcast_to(np.asarray(mask, dtype=np.float64), shape)
    except ValueError as e:
        raise DimensionError(f"Mask of shape {np.shape(mask)} does not broadcast to {shape}") from e


def bce_loss(pred: Tensor, target: Any, mask: np.ndarray | None = None) -> Tensor:
    """
    Mean binary cross entropy. Probabilities are clamped to [1e-7, 1 - 1e-7].
    A mask (broadcastable, 1 for valid and 0 for padding) restricts the mean to the valid elements.
    """
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"Prediction shape {pred.shape} does not match target shape {target.shape}")
    p = pred.clip(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    elementwise = -(target * p.log() + (1.0 - target) * (1.0 - p).log())
    weights = _weights(mask, pred.shape)
    total = weights.sum()
    if total == 0:
        raise DimensionError("Mask selects no elements")
    return (elementwise * weights).sum() / total


def kl_standard_normal(mu: Tensor, logvar: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """
    KL(N(mu, exp(logvar)) || N(0, I)) summed over the latent axis and averaged over the remaining positions.
    """
    if mu.shape != logvar.shape:
        raise DimensionError(f"Mean shape {mu.shape} does not match log variance shape {logvar.shape}")
    per_position = (0.5 * (logvar.exp() + mu * mu - 1.0 - logvar)).sum(axis=-1)
    weights = _weights(mask, per_position.shape)
    return (per_position * weights).sum() / weights.sum()
