from dataclasses import dataclass
from logging import getLogger
from typing import List, Literal, Sequence

import numpy as np
from scipy import linalg

from pymassing.errors import DomainError, StatisticsError

logger = getLogger(__name__)

Covariance = Literal["full", "diag"]

SYMMETRY_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        if self.cov.shape != (self.mean.shape[0], self.mean.shape[0]):
            raise DomainError(f"Covariance shape {self.cov.shape} does not fit a mean of length {self.mean.shape[0]}")


def fit_gaussian(samples: np.ndarray, eps: float = 1e-6, covariance: Covariance = "full") -> GaussianStats:
    """
    Sample mean and unbiased covariance plus eps * I. The diagonal mode keeps only the variances.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise StatisticsError(f"Gaussian fit needs at least 2 samples, got shape {samples.shape}")
    mean = samples.mean(axis=0)
    match covariance:
        case "full":
            cov = np.atleast_2d(np.cov(samples, rowvar=False))
        case "diag":
            cov = np.diag(samples.var(axis=0, ddof=1))
        case _:
            raise ValueError(f"Unknown covariance mode {covariance}")
    return GaussianStats(mean=mean, cov=cov + eps * np.eye(samples.shape[1]))


def matrix_sqrt_psd(m: np.ndarray) -> np.ndarray:
    """
    S with S @ S == M for symmetric PSD M, by symmetric eigendecomposition with negative eigenvalues clipped to 0.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"Square root needs a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOLERANCE * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise DomainError("Square root needs a symmetric matrix")
    w, v = linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """
    ||m_a - m_b|| + Tr(C_a + C_b - 2 (C_a C_b)^(1/2)). The mean term is not squared, unlike classical FID.
    The cross term uses the symmetric form sqrt(C_a) C_b sqrt(C_a), which has the same trace.
    """
    if a.mean.shape != b.mean.shape:
        raise DomainError(f"Statistics of width {a.mean.shape[0]} and {b.mean.shape[0]} can not be compared")
    root_a = matrix_sqrt_psd(a.cov)
    inner = root_a @ b.cov @ root_a
    cross = matrix_sqrt_psd((inner + inner.T) / 2)
    mean_term = float(np.linalg.norm(a.mean - b.mean))
    return mean_term + float(np.trace(a.cov) + np.trace(b.cov) - 2 * np.trace(cross))


def sequential_fid(
    reference_by_t: Sequence[np.ndarray],
    candidate_by_t: Sequence[np.ndarray],
    eps: float = 1e-6,
    covariance: Covariance = "full",
) -> List[float]:
    """
    f_t for every timestep both sides share. Each entry of the inputs is an (N_t, dim) latent set.
    """
    steps = min(len(reference_by_t), len(candidate_by_t))
    if len(reference_by_t) != len(candidate_by_t):
        logger.info("Reference has %s steps and candidate %s, comparing the first %s", len(reference_by_t), len(candidate_by_t), steps)
    curve: List[float] = []
    for t in range(steps):
        reference = fit_gaussian(reference_by_t[t], eps, covariance)
        candidate = fit_gaussian(candidate_by_t[t], eps, covariance)
        curve.append(frechet_distance(reference, candidate))
    return curve


def group_by_step(latents: Sequence[np.ndarray], min_count: int = 2) -> List[np.ndarray]:
    """
    Regroups per sequence (T_i, dim) latents into per step (N_t, dim) sets.
    Grouping stops at the first step with fewer than min_count sequences.
    """
    groups: List[np.ndarray] = []
    t = 0
    while True:
        rows = [z[t] for z in latents if z.shape[0] > t]
        if len(rows) < max(min_count, 1):
            return groups
        groups.append(np.stack(rows))
        t += 1
