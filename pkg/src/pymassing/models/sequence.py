from dataclasses import dataclass
from enum import Enum
from logging import getLogger
from pathlib import Path
from typing import Tuple

import msgspec
import numpy as np

import pymassing._util
from pymassing.errors import DimensionError, LengthError, UsageError
from pymassing.neural.checkpoint import load_checkpoint, save_checkpoint
from pymassing.neural.layers import AttentionConfig, Block, LayerNorm, Linear, Module, positional_encoding
from pymassing.neural.tensor import Tensor, no_grad

logger = getLogger(__name__)


class ModelKind(str, Enum):
    VDR = "vdr"
    """
    Reconstructs every embedding of the sequence
    """
    AVD = "avd"
    """
    Predicts the next embedding from all previous ones
    """
    VAE = "vae"
    """
    Reconstruction through a per step Gaussian posterior
    """


class ModelSpec(msgspec.Struct, frozen=True):
    kind: ModelKind
    attention: AttentionConfig
    beta: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class ModelOutput:
    predictions: Tensor
    latents: Tensor
    mu: Tensor | None = None
    logvar: Tensor | None = None


@dataclass(frozen=True)
class LatentSequence:
    """
    Output of the final attention layer, one row per step. Row t only depends on embeddings 0..t.
    """

    z: np.ndarray

    def __len__(self) -> int:
        return self.z.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.z[-1]


class SequenceModel(Module):
    """
    Projection, positional encoding, causal attention stack, final layer norm, then linear decoder with sigmoid.
    The VAE kind puts a Gaussian posterior (mean and log variance heads) between the stack and the decoder.
    """

    def __init__(self, spec: ModelSpec) -> None:
        self.spec = spec
        config = spec.attention
        rng = pymassing._util.rng(spec.seed, 3)
        self.embed = Linear(config.input_dim, config.model_dim, rng)
        self.blocks = [Block(config.model_dim, config.heads, rng) for _ in range(config.layers)]
        self.ln_final = LayerNorm(config.model_dim)
        if spec.kind is ModelKind.VAE:
            self.posterior_mu = Linear(config.model_dim, config.model_dim, rng)
            self.posterior_logvar = Linear(config.model_dim, config.model_dim, rng)
        self.decoder = Linear(config.model_dim, config.input_dim, rng)

    @property
    def kind(self) -> ModelKind:
        return self.spec.kind

    @property
    def config(self) -> AttentionConfig:
        return self.spec.attention

    def encode(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.config.input_dim:
            raise DimensionError(f"Expected (batch, time, {self.config.input_dim}) embeddings, got {x.shape}")
        t = x.shape[1]
        if not 1 <= t <= self.config.max_len:
            raise LengthError(f"Sequence length {t} outside 1..{self.config.max_len}")
        h = self.embed(x) + positional_encoding(t, self.config.model_dim)
        for block in self.blocks:
            h = block(h)
        return self.ln_final(h)

    def __call__(self, x: Tensor, noise: np.ndarray | None = None) -> ModelOutput:
        """
        noise is the standard normal draw of the VAE reparameterization, without it the posterior mean is decoded.
        """
        h = self.encode(x)
        if self.kind is not ModelKind.VAE:
            return ModelOutput(predictions=self.decoder(h).sigmoid(), latents=h)
        mu = self.posterior_mu(h)
        logvar = self.posterior_logvar(h)
        z = mu if noise is None else mu + (logvar * 0.5).exp() * noise
        return ModelOutput(predictions=self.decoder(z).sigmoid(), latents=h, mu=mu, logvar=logvar)


def forward(model: SequenceModel, embeddings: np.ndarray) -> Tuple[np.ndarray, LatentSequence]:
    """
    Frozen forward pass of one (T, input_dim) sequence.
    VDR and VAE predictions[t] estimate e_t, AVD predictions[t] estimate e_(t+1).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"Expected a (time, width) sequence, got shape {x.shape}")
    with no_grad():
        out = model(Tensor(x[None]))
    return out.predictions.data[0], LatentSequence(z=out.latents.data[0])


def posterior_mean(model: SequenceModel, embeddings: np.ndarray) -> np.ndarray:
    if model.kind is not ModelKind.VAE:
        raise UsageError(f"Posterior mean needs a VAE, got {model.kind.value}")
    with no_grad():
        out = model(Tensor(np.asarray(embeddings, dtype=np.float64)[None]))
    assert out.mu is not None
    return out.mu.data[0]


def vae_latent_distance(model: SequenceModel, embeddings: np.ndarray) -> float:
    """
    Distance of the final step's posterior mean to the prior mean 0.
    """
    return float(np.linalg.norm(posterior_mean(model, embeddings)[-1]))


def save_model(model: SequenceModel, path: str | Path) -> None:
    save_checkpoint(path, "sequence-model", model.spec, model.state_dict())


def load_model(path: str | Path) -> SequenceModel:
    spec, tensors = load_checkpoint(path, "sequence-model", ModelSpec)
    model = SequenceModel(spec)
    model.load_state_dict(tensors)
    logger.info("Loaded %s model (%s layers, %s heads, width %s) from %s", spec.kind.value, spec.attention.layers, spec.attention.heads, spec.attention.model_dim, path)
    return model
