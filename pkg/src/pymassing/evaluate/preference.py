from logging import getLogger
from typing import Callable, List, Literal, Sequence

import msgspec
import numpy as np

import pymassing._util
from pymassing.agent.horizon import horizon_policy_actions
from pymassing.dataset.records import SequenceRecord
from pymassing.dataset.sequence import from_record, replay, subsample
from pymassing.errors import DimensionError, UsageError
from pymassing.flow.realnvp import FlowModel, log_prob
from pymassing.gym.env import BuildingGym
from pymassing.models.sequence import ModelKind, SequenceModel, forward, vae_latent_distance

logger = getLogger(__name__)

Winner = Literal["first", "second", "tie"]
HorizonMode = Literal["percent", "absolute"]


class PreferenceVerdict(msgspec.Struct, frozen=True):
    winner: Winner
    scores: tuple[float, float]


class PreferenceRow(msgspec.Struct, frozen=True):
    """
    Accuracy at one horizon level, mean and std over seeded reruns.
    """

    horizon: int
    mode: HorizonMode
    accuracy: float
    std: float
    runs: List[float]


Scorer = Callable[[np.ndarray, np.ndarray], PreferenceVerdict]


def verdict(score_a: float, score_b: float, higher_wins: bool = True) -> PreferenceVerdict:
    if score_a == score_b:
        winner: Winner = "tie"
    elif (score_a > score_b) == higher_wins:
        winner = "first"
    else:
        winner = "second"
    return PreferenceVerdict(winner=winner, scores=(float(score_a), float(score_b)))


def sequence_log_likelihood(encoder: SequenceModel, flow: FlowModel, embeddings: np.ndarray) -> float:
    """
    Log likelihood of the final latent z_T under the flow, both models frozen.
    """
    if flow.dim != encoder.config.model_dim:
        raise DimensionError(f"Flow of width {flow.dim} does not fit encoder latents of width {encoder.config.model_dim}")
    _, latents = forward(encoder, embeddings)
    return float(log_prob(flow, latents.final))


def flow_preference(encoder: SequenceModel, flow: FlowModel, seq_a: np.ndarray, seq_b: np.ndarray) -> PreferenceVerdict:
    return verdict(sequence_log_likelihood(encoder, flow, seq_a), sequence_log_likelihood(encoder, flow, seq_b))


def vae_preference(vae: SequenceModel, seq_a: np.ndarray, seq_b: np.ndarray) -> PreferenceVerdict:
    """
    The sequence whose final posterior mean lies closer to the prior mean wins.
    """
    if vae.kind is not ModelKind.VAE:
        raise UsageError(f"VAE preference needs a VAE, got {vae.kind.value}")
    return verdict(vae_latent_distance(vae, seq_a), vae_latent_distance(vae, seq_b), higher_wins=False)


def absolute_horizon(h: int, mode: HorizonMode, episode_len: int) -> int:
    match mode:
        case "percent":
            return int(round(h / 100 * episode_len))
        case "absolute":
            return h
        case _:
            raise ValueError(f"Unknown horizon mode {mode}")


def corrupted_embeddings(record: SequenceRecord, h: int, seed: int, max_len: int, gym: BuildingGym | None = None) -> np.ndarray:
    actions = horizon_policy_actions(record.constraints, record.partition, h, seed, gym)
    return subsample(replay(record.constraints, record.partition, actions, gym), max_len).embeddings()


def preference_accuracy(
    scorer: Scorer,
    records: Sequence[SequenceRecord],
    h: int,
    mode: HorizonMode,
    seed: int,
    max_len: int,
    gym: BuildingGym | None = None,
) -> float:
    """
    Share of (expert, corrupted) pairs in which the expert wins, ties count half.
    """
    if not records:
        raise ValueError("Preference accuracy needs at least one expert record")
    score = 0.0
    for i, record in enumerate(records):
        expert = subsample(from_record(record, gym=gym), max_len).embeddings()
        horizon = absolute_horizon(h, mode, len(record.actions))
        corrupted = corrupted_embeddings(record, horizon, pymassing._util.derive_seed(seed, i, horizon), max_len, gym)
        match scorer(expert, corrupted).winner:
            case "first":
                score += 1.0
            case "tie":
                score += 0.5
    return score / len(records)


def preference_experiment(
    scorer: Scorer,
    records: Sequence[SequenceRecord],
    horizons: Sequence[int],
    seed: int,
    mode: HorizonMode = "percent",
    reruns: int = 1,
    max_len: int = 39,
    gym: BuildingGym | None = None,
) -> List[PreferenceRow]:
    """
    Accuracy of a preference scorer against corrupted counterparts of the expert records at every horizon level.
    """
    rows: List[PreferenceRow] = []
    for h in horizons:
        runs = [preference_accuracy(scorer, records, h, mode, pymassing._util.derive_seed(seed, r), max_len, gym) for r in range(max(reruns, 1))]
        rows.append(PreferenceRow(horizon=h, mode=mode, accuracy=float(np.mean(runs)), std=float(np.std(runs)), runs=runs))
        logger.info("Horizon %s (%s): accuracy %.3f +- %.3f", h, mode, rows[-1].accuracy, rows[-1].std)
    return rows
