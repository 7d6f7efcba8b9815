from .sequence import (
    LatentSequence,
    ModelKind,
    ModelOutput,
    ModelSpec,
    SequenceModel,
    forward,
    load_model,
    posterior_mean,
    save_model,
    vae_latent_distance,
)
from .train import AccuracyReport, TrainResult, batch_loss, make_batch, reconstruction_accuracy, record_embeddings, train
