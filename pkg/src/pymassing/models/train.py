import math
from logging import getLogger
from typing import List, Sequence, Tuple

import msgspec
import numpy as np

import pymassing._util
from pymassing.dataset.records import SequenceRecord
from pymassing.dataset.sequence import from_record, subsample
from pymassing.defaults import TrainConfig
from pymassing.errors import TrainingError
from pymassing.gym.env import BuildingGym
from pymassing.models.sequence import ModelKind, SequenceModel, forward
from pymassing.neural.losses import bce_loss, kl_standard_normal
from pymassing.neural.optim import make_optimizer
from pymassing.neural.tensor import Tensor
from pymassing.voxel import quantize

logger = getLogger(__name__)


class TrainResult(msgspec.Struct, frozen=True):
    losses: List[float]
    epochs: int
    stopped_early: bool = False


class AccuracyReport(msgspec.Struct, frozen=True):
    """
    curve[t] is the mean voxel accuracy at step t over every sequence long enough to have a step t.
    mean and std are taken over all per-sequence-step accuracies.
    """

    curve: List[float]
    mean: float
    std: float


def record_embeddings(records: Sequence[SequenceRecord], max_len: int, gym: BuildingGym | None = None) -> List[np.ndarray]:
    """
    Replays, subsamples and embeds persisted records.
    """
    return [subsample(from_record(r, gym=gym), max_len).embeddings() for r in records]


def training_pairs(sequence: np.ndarray, kind: ModelKind) -> Tuple[np.ndarray, np.ndarray]:
    """
    AVD learns e_(t+1) from e_0..e_t, so it sees T - 1 pairs; the other kinds reconstruct all T steps.
    """
    if kind is ModelKind.AVD:
        return sequence[:-1], sequence[1:]
    return sequence, sequence


def make_batch(sequences: Sequence[np.ndarray], kind: ModelKind) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    End padded (inputs, targets, mask) of shape (B, T, D), (B, T, D), (B, T).
    """
    pairs = [training_pairs(s, kind) for s in sequences]
    pairs = [(i, t) for i, t in pairs if len(i) > 0]
    if not pairs:
        raise ValueError("Batch contains no usable training pairs")
    width = pairs[0][0].shape[-1]
    longest = max(len(i) for i, _ in pairs)
    inputs = np.zeros((len(pairs), longest, width))
    targets = np.zeros((len(pairs), longest, width))
    mask = np.zeros((len(pairs), longest))
    for b, (i, t) in enumerate(pairs):
        inputs[b, : len(i)] = i
        targets[b, : len(t)] = t
        mask[b, : len(i)] = 1.0
    return inputs, targets, mask


def batch_loss(model: SequenceModel, inputs: np.ndarray, targets: np.ndarray, mask: np.ndarray, rng: np.random.Generator | None = None) -> Tensor:
    """
    Masked BCE, plus for the VAE beta times the per step KL divided by the embedding width.
    """
    noise = None
    if model.kind is ModelKind.VAE and rng is not None:
        noise = rng.standard_normal((*inputs.shape[:2], model.config.model_dim))
    out = model(Tensor(inputs), noise=noise)
    loss = bce_loss(out.predictions, targets, mask=mask[..., None])
    if model.kind is ModelKind.VAE:
        assert out.mu is not None and out.logvar is not None
        kl = kl_standard_normal(out.mu, out.logvar, mask=mask)
        loss = loss + kl * (model.spec.beta / model.config.input_dim)
    return loss


def train(model: SequenceModel, sequences: Sequence[np.ndarray], hyper: TrainConfig, seed: int) -> TrainResult:
    """
    Minibatch training on embedded sequences. The shuffling and the VAE noise derive from seed only.
    """
    if not sequences:
        raise ValueError("Training needs at least one sequence")
    rng = pymassing._util.rng(seed, 4)
    optimizer = make_optimizer(hyper.optimizer, model.parameters(), hyper.lr, hyper.momentum)
    losses: List[float] = []
    best = math.inf
    stale = 0

    for epoch in range(hyper.epochs):
        order = rng.permutation(len(sequences))
        total, weight = 0.0, 0.0
        for batch_indices in pymassing._util.chunks(list(order), hyper.batch_size):
            try:
                inputs, targets, mask = make_batch([sequences[i] for i in batch_indices], model.kind)
            except ValueError:
                continue
            optimizer.zero_grad()
            loss = batch_loss(model, inputs, targets, mask, rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"{model.kind.value} loss became {value}", epoch)
            loss.backward()
            optimizer.step()
            total += value * mask.sum()
            weight += mask.sum()
        if weight == 0:
            raise ValueError("No sequence contributes a training pair")
        epoch_loss = total / weight
        losses.append(epoch_loss)
        logger.info("%s epoch %s loss %.6f", model.kind.value, epoch, epoch_loss)

        if hyper.patience > 0:
            if epoch_loss < best - 1e-4 * abs(best if math.isfinite(best) else 1.0):
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= hyper.patience:
                    logger.info("Loss plateaued after %s epochs", epoch + 1)
                    return TrainResult(losses=losses, epochs=epoch + 1, stopped_early=True)
    return TrainResult(losses=losses, epochs=len(losses))


def reconstruction_accuracy(model: SequenceModel, sequences: Sequence[np.ndarray]) -> AccuracyReport:
    """
    Share of voxels whose quantized prediction equals the quantized target, per step.
    For AVD the target of step t is the embedding at t + 1.
    """
    per_step: List[List[float]] = []
    flat: List[float] = []
    for sequence in sequences:
        predictions, _ = forward(model, sequence)
        if model.kind is ModelKind.AVD:
            predictions, targets = predictions[:-1], sequence[1:]
        else:
            targets = sequence
        hits = (quantize(predictions) == quantize(targets)).mean(axis=-1)
        for t, accuracy in enumerate(hits):
            if t == len(per_step):
                per_step.append([])
            per_step[t].append(float(accuracy))
            flat.append(float(accuracy))
    if not flat:
        return AccuracyReport(curve=[], mean=0.0, std=0.0)
    return AccuracyReport(curve=[float(np.mean(v)) for v in per_step], mean=float(np.mean(flat)), std=float(np.std(flat)))
