from typing import Literal, Tuple

import msgspec

SCHEMA_VERSION = 1

Scale = Literal["desk", "paper", "full"]


class GridConfig(msgspec.Struct, frozen=True):
    dims: Tuple[int, int, int] = (10, 10, 10)
    footprint: Tuple[float, float] = (3.0, 9.0)
    height: Tuple[float, float] = (3.0, 5.0)


class GymConfig(msgspec.Struct, frozen=True):
    max_steps: int = 810
    far_tolerance: float = 1e-9


class DatasetConfig(msgspec.Struct, frozen=True):
    path: str = "data"
    n: int = 500
    train_fraction: float = 6612 / 7296
    min_raw_len: int = 100
    max_subsampled_len: int = 39
    far: Tuple[float, float] = (1.0, 5.0)
    office_share: Tuple[float, float] = (0.6, 0.85)
    workers: int = 4
    histogram_bucket: int = 50


class ModelConfig(msgspec.Struct, frozen=True):
    layers: int = 4
    heads: int = 8
    model_dim: int = 128
    max_len: int = 40
    beta: float = 1.0


class TrainConfig(msgspec.Struct, frozen=True):
    optimizer: Literal["sgd", "adam"] = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    batch_size: int = 8
    epochs: int = 40
    patience: int = 5


class FlowConfig(msgspec.Struct, frozen=True):
    coupling_layers: int = 5
    hidden_dim: int = 128
    optimizer: Literal["sgd", "adam"] = "adam"
    lr: float = 1e-3
    momentum: float = 0.0
    batch_size: int = 64
    epochs: int = 300


class EvalConfig(msgspec.Struct, frozen=True):
    horizons_percent: Tuple[int, ...] = (0, 25, 50, 75, 100)
    horizons_absolute: Tuple[int, ...] = (0, 100, 200, 300, 400)
    pairs: int = 100
    reruns: int = 3
    covariance: Literal["full", "diag"] = "full"
    fid_eps: float = 1e-6
    ablation_layers: Tuple[int, ...] = (4, 8)
    ablation_heads: Tuple[int, ...] = (2, 4, 8)
    ablation_epochs: int = 20


class RolloutSettings(msgspec.Struct, frozen=True):
    prefix_len: int = 5
    horizon: int = 50
    count: int = 100


class ServiceConfig(msgspec.Struct, frozen=True):
    host: str = "127.0.0.1"
    port: int = 8080
    max_states: int = 200
    max_horizon: int = 200
    avd_checkpoint: str | None = None
    encoder_checkpoint: str | None = None
    flow_checkpoint: str | None = None
    static_dir: str | None = None


class RunConfig(msgspec.Struct, frozen=True):
    """
    Everything a run needs. All seeds are explicit, the scale preset decides the model dimensions.
    """

    schema_version: int = SCHEMA_VERSION
    scale: Scale = "desk"
    seed: int = 7
    out: str = "out"
    grid: GridConfig = GridConfig()
    gym: GymConfig = GymConfig()
    dataset: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    flow: FlowConfig = FlowConfig()
    evaluation: EvalConfig = EvalConfig()
    rollout: RolloutSettings = RolloutSettings()
    service: ServiceConfig = ServiceConfig()


def desk() -> RunConfig:
    return RunConfig()


def full() -> RunConfig:
    """
    Model sizes of the full scale experiments: 4 layers, 8 heads, 2048 wide latents, 5 couplings of width 2048.
    """
    return RunConfig(
        scale="paper",
        dataset=DatasetConfig(n=10_000, max_subsampled_len=82),
        model=ModelConfig(model_dim=2048, max_len=83),
        train=TrainConfig(optimizer="sgd", lr=1e-3, momentum=0.0),
        flow=FlowConfig(hidden_dim=2048, optimizer="sgd"),
        evaluation=EvalConfig(pairs=684),
    )


def preset(scale: Scale) -> RunConfig:
    match scale:
        case "desk":
            return desk()
        case "paper" | "full":
            return full()
        case _:
            raise ValueError(f"Unknown scale preset {scale}")
