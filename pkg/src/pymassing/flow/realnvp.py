import math
from logging import getLogger
from pathlib import Path
from typing import List, Tuple

import msgspec
import numpy as np

import pymassing._util
from pymassing.defaults import FlowConfig
from pymassing.errors import CheckpointError, DimensionError, TrainingError
from pymassing.neural.checkpoint import load_checkpoint, save_checkpoint
from pymassing.neural.layers import Linear, Module
from pymassing.neural.optim import make_optimizer
from pymassing.neural.tensor import Tensor, no_grad

logger = getLogger(__name__)

SCALE_BOUND = 5.0
_LOG_2PI = math.log(2 * math.pi)


class FlowSpec(msgspec.Struct, frozen=True):
    dim: int
    coupling_layers: int = 5
    hidden_dim: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.dim, self.coupling_layers, self.hidden_dim) < 1:
            raise ValueError(f"Flow sizes must be positive: {self}")


def half_mask(dim: int, layer: int) -> np.ndarray:
    """
    1 marks the coordinates passed through unchanged. Even layers keep the first half, odd layers the second.
    """
    first = (np.arange(dim) < dim // 2).astype(np.float64)
    return first if layer % 2 == 0 else 1.0 - first


class Coupling(Module):
    """
    Affine coupling: the masked half conditions a scale and shift of the other half.
    The output layer starts at zero, so a fresh coupling is the identity.
    """

    def __init__(self, dim: int, hidden: int, mask: np.ndarray, rng: np.random.Generator) -> None:
        self.mask = mask
        self.hidden_1 = Linear(dim, hidden, rng)
        self.hidden_2 = Linear(hidden, hidden, rng)
        self.out = Linear(hidden, 2 * dim, rng)
        self.out.weight.data[...] = 0.0
        self.out.bias.data[...] = 0.0

    def scale_shift(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        dim = self.mask.shape[0]
        h = self.hidden_2(self.hidden_1(x * self.mask).tanh()).tanh()
        raw = self.out(h)
        free = 1.0 - self.mask
        s = (raw[..., :dim] * (1.0 / SCALE_BOUND)).tanh() * SCALE_BOUND * free
        t = raw[..., dim:] * free
        return s, t

    def __call__(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        s, t = self.scale_shift(x)
        y = x * self.mask + (x * s.exp() + t) * (1.0 - self.mask)
        return y, s.sum(axis=-1)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        with no_grad():
            s, t = self.scale_shift(Tensor(y))
        return y * self.mask + (y - t.data) * np.exp(-s.data) * (1.0 - self.mask)


class FlowModel(Module):
    """
    RealNVP density over final latents. Inputs are standardized with stored per dimension statistics first,
    that affine step is part of forward() and of its log determinant.
    """

    def __init__(self, spec: FlowSpec) -> None:
        self.spec = spec
        rng = pymassing._util.rng(spec.seed, 5)
        self.couplings = [Coupling(spec.dim, spec.hidden_dim, half_mask(spec.dim, i), rng) for i in range(spec.coupling_layers)]
        self.shift = np.zeros(spec.dim)
        self.scale = np.ones(spec.dim)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def masks(self) -> List[np.ndarray]:
        return [c.mask for c in self.couplings]

    def _check(self, z: np.ndarray | Tensor) -> None:
        if z.shape[-1] != self.dim:
            raise DimensionError(f"Flow expects width {self.dim}, got {z.shape[-1]}")

    def transform(self, z: Tensor) -> Tuple[Tensor, Tensor, List[Tensor]]:
        """
        (u, total log det, per layer log dets) for a (N, dim) batch.
        """
        self._check(z)
        x = (z - self.shift) * (1.0 / self.scale)
        standardize = float(-np.log(self.scale).sum())
        contributions: List[Tensor] = []
        for coupling in self.couplings:
            x, log_det = coupling(x)
            contributions.append(log_det)
        total = Tensor(np.full(z.shape[:-1], standardize))
        for c in contributions:
            total = total + c
        return x, total, contributions

    def log_prob_tensor(self, z: Tensor) -> Tensor:
        u, log_det, _ = self.transform(z)
        return -0.5 * (u * u).sum(axis=-1) - 0.5 * self.dim * _LOG_2PI + log_det

    def set_standardization(self, latents: np.ndarray) -> None:
        self.shift = latents.mean(axis=0)
        std = latents.std(axis=0)
        self.scale = np.where(std > 1e-8, std, 1.0)

    def state_tensors(self) -> dict:
        state = self.state_dict()
        state["standardize.shift"] = self.shift.copy()
        state["standardize.scale"] = self.scale.copy()
        for i, mask in enumerate(self.masks):
            state[f"mask.{i}"] = mask.copy()
        return state

    def load_state_tensors(self, tensors: dict) -> None:
        tensors = dict(tensors)
        self.shift = np.asarray(tensors.pop("standardize.shift"), dtype=np.float64)
        self.scale = np.asarray(tensors.pop("standardize.scale"), dtype=np.float64)
        for i, mask in enumerate(self.masks):
            stored = tensors.pop(f"mask.{i}", None)
            # masks are optional, half_mask derives them from the layer index
            if stored is not None and not np.array_equal(stored, mask):
                raise CheckpointError(f"Coupling {i} mask does not match the alternating half mask")
        self.load_state_dict(tensors)


def forward(flow: FlowModel, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    (u, log_det) for one vector or a (N, dim) batch.
    """
    z = np.asarray(z, dtype=np.float64)
    with no_grad():
        u, log_det, _ = flow.transform(Tensor(np.atleast_2d(z)))
    if z.ndim == 1:
        return u.data[0], log_det.data[0]
    return u.data, log_det.data


def layer_log_dets(flow: FlowModel, z: np.ndarray) -> List[np.ndarray]:
    with no_grad():
        _, _, contributions = flow.transform(Tensor(np.atleast_2d(np.asarray(z, dtype=np.float64))))
    return [c.data for c in contributions]


def inverse(flow: FlowModel, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    flow._check(u)
    x = np.atleast_2d(u)
    for coupling in reversed(flow.couplings):
        x = coupling.inverse(x)
    z = x * flow.scale + flow.shift
    return z[0] if u.ndim == 1 else z


def log_prob(flow: FlowModel, z: np.ndarray) -> np.ndarray | float:
    """
    log N(u; 0, I) + log_det by change of variables.
    """
    z = np.asarray(z, dtype=np.float64)
    with no_grad():
        lp = flow.log_prob_tensor(Tensor(np.atleast_2d(z))).data
    return float(lp[0]) if z.ndim == 1 else lp


class FlowTrainResult(msgspec.Struct, frozen=True):
    nll: List[float]


def train_flow(flow: FlowModel, latents: np.ndarray, hyper: FlowConfig, seed: int, standardize: bool = True) -> FlowTrainResult:
    """
    Maximizes the mean log likelihood of the latents. The encoder that produced them is not touched.
    """
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[0] == 0:
        raise ValueError(f"Flow training needs a nonempty (N, dim) latent set, got shape {latents.shape}")
    flow._check(latents)
    if standardize:
        flow.set_standardization(latents)
    rng = pymassing._util.rng(seed, 6)
    optimizer = make_optimizer(hyper.optimizer, flow.parameters(), hyper.lr, hyper.momentum)
    curve: List[float] = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(latents.shape[0])
        total = 0.0
        for batch in pymassing._util.chunks(list(order), hyper.batch_size):
            optimizer.zero_grad()
            loss = -flow.log_prob_tensor(Tensor(latents[batch])).mean()
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"Flow negative log likelihood became {value}", epoch)
            loss.backward()
            optimizer.step()
            total += value * len(batch)
        curve.append(total / latents.shape[0])
        logger.info("flow epoch %s nll %.6f", epoch, curve[-1])
    return FlowTrainResult(nll=curve)


def save_flow(flow: FlowModel, path: str | Path) -> None:
    save_checkpoint(path, "flow", flow.spec, flow.state_tensors())


def load_flow(path: str | Path) -> FlowModel:
    spec, tensors = load_checkpoint(path, "flow", FlowSpec)
    flow = FlowModel(spec)
    flow.load_state_tensors(tensors)
    logger.info("Loaded flow (%s couplings, width %s, dim %s) from %s", spec.coupling_layers, spec.hidden_dim, spec.dim, path)
    return flow


def flow_for(dim: int, config: FlowConfig, seed: int) -> FlowModel:
    return FlowModel(FlowSpec(dim=dim, coupling_layers=config.coupling_layers, hidden_dim=config.hidden_dim, seed=seed))
