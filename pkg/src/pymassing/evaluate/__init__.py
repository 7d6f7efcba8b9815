from .fid import GaussianStats, fit_gaussian, frechet_distance, group_by_step, matrix_sqrt_psd, sequential_fid
from .preference import (
    PreferenceRow,
    PreferenceVerdict,
    corrupted_embeddings,
    flow_preference,
    preference_accuracy,
    preference_experiment,
    sequence_log_likelihood,
    vae_preference,
    verdict,
)
