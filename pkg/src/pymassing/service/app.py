from dataclasses import dataclass, field
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Type, TypeVar

import msgspec
import numpy as np
from flask import Blueprint, Flask, Response, current_app, request, send_from_directory

from pymassing.agent.heuristic import sample_feasible_constraints
from pymassing.autocomplete import RolloutConfig, rollout
from pymassing.dataset.sequence import DesignSequence, replay, subsample
from pymassing.defaults import RunConfig
from pymassing.errors import DimensionError, LengthError, MassingError, UsageError
from pymassing.evaluate.preference import flow_preference
from pymassing.flow.realnvp import FlowModel, load_flow
from pymassing.gym.constraints import ConstraintRanges
from pymassing.gym.env import BuildingGym
from pymassing.models.sequence import SequenceModel, load_model
from pymassing.neural.checkpoint import checkpoint_hash
from pymassing.service.wire import (
    ApiAction,
    AutocompleteRequest,
    AutocompleteResponse,
    ErrorResponse,
    ExpertResponse,
    HealthResponse,
    MalformedStateError,
    PreferenceRequest,
    PreferenceResponse,
    encode,
    from_api,
    to_api,
)
from pymassing.voxel import DesignState, GridPartition

logger = getLogger(__name__)

T = TypeVar("T")

EXTENSION = "pymassing"


@dataclass(frozen=True)
class ServiceState:
    """
    Frozen checkpoints shared by every request. Nothing in here changes after startup.
    """

    config: RunConfig
    avd: SequenceModel | None = None
    encoder: SequenceModel | None = None
    flow: FlowModel | None = None
    hashes: Dict[str, str] = field(default_factory=dict)

    @property
    def grid(self) -> GridPartition:
        return GridPartition.uniform(*self.config.grid.dims)


class Unavailable(Exception):
    pass


def load_state(config: RunConfig) -> ServiceState:
    service = config.service
    hashes: Dict[str, str] = {}
    avd = encoder = flow = None
    if service.avd_checkpoint:
        avd = load_model(service.avd_checkpoint)
        hashes["avd"] = checkpoint_hash(service.avd_checkpoint)
    if service.encoder_checkpoint:
        encoder = load_model(service.encoder_checkpoint)
        hashes["encoder"] = checkpoint_hash(service.encoder_checkpoint)
    if service.flow_checkpoint:
        flow = load_flow(service.flow_checkpoint)
        hashes["flow"] = checkpoint_hash(service.flow_checkpoint)
    logger.info("Service loaded checkpoints %s", sorted(hashes))
    return ServiceState(config=config, avd=avd, encoder=encoder, flow=flow, hashes=hashes)


def _state() -> ServiceState:
    state = current_app.extensions.get(EXTENSION)
    if state is None:
        raise Unavailable("Checkpoints are not loaded")
    return state


def _json(obj: msgspec.Struct, status: int = 200) -> Response:
    return Response(encode(obj), status=status, mimetype="application/json")


def _body(type: Type[T]) -> T:
    return msgspec.json.decode(request.get_data(), type=type)


api = Blueprint("api", __name__, url_prefix="/api")


@api.errorhandler(msgspec.ValidationError)
@api.errorhandler(msgspec.DecodeError)
@api.errorhandler(MalformedStateError)
@api.errorhandler(UsageError)
def _malformed(e: Exception) -> Response:
    return _json(ErrorResponse(error="malformed", detail=str(e)), 400)


@api.errorhandler(DimensionError)
@api.errorhandler(LengthError)
def _mismatch(e: Exception) -> Response:
    return _json(ErrorResponse(error="dimension", detail=str(e)), 422)


@api.errorhandler(Unavailable)
def _unavailable(e: Exception) -> Response:
    return _json(ErrorResponse(error="unavailable", detail=str(e)), 503)


@api.errorhandler(MassingError)
def _domain(e: Exception) -> Response:
    logger.warning("Request failed: %s", e)
    return _json(ErrorResponse(error=type(e).__name__, detail=str(e)), 422)


@api.post("/autocomplete")
def autocomplete() -> Response:
    state = _state()
    if state.avd is None:
        raise Unavailable("No AVD checkpoint loaded")
    body = _body(AutocompleteRequest)
    service = state.config.service
    if not 1 <= len(body.states) <= service.max_states:
        raise MalformedStateError(f"Between 1 and {service.max_states} states are accepted, got {len(body.states)}")
    if not len(body.states) < body.horizon <= service.max_horizon:
        raise MalformedStateError(f"Horizon must exceed the prefix length {len(body.states)} and be at most {service.max_horizon}")
    prefix = [from_api(s, state.grid) for s in body.states]
    sequence = rollout(state.avd, prefix, RolloutConfig(prefix_len=len(prefix), horizon=body.horizon))
    monotonic = all((b.occupancy() >= a.occupancy()).all() for a, b in zip(sequence.states, sequence.states[1:]))
    return _json(AutocompleteResponse(states=[to_api(s) for s in sequence.states], monotonic=monotonic))


@api.post("/preference")
def preference() -> Response:
    state = _state()
    if state.encoder is None or state.flow is None:
        raise Unavailable("Encoder and flow checkpoints are required")
    body = _body(PreferenceRequest)
    if not body.a or not body.b:
        raise MalformedStateError("Both sequences need at least one state")
    limit = state.config.service.max_states
    if len(body.a) > limit or len(body.b) > limit:
        raise MalformedStateError(f"At most {limit} states per sequence are accepted")
    a = [from_api(s, state.grid) for s in body.a]
    b = [from_api(s, state.grid) for s in body.b]
    # subsampling may append the final state, one past the stride grid
    max_len = state.encoder.config.max_len - 1
    result = flow_preference(state.encoder, state.flow, posted_embeddings(a, max_len), posted_embeddings(b, max_len))
    return _json(PreferenceResponse(winner=result.winner, scores=result.scores))


def posted_embeddings(states: List[DesignState], max_len: int) -> np.ndarray:
    """
    Posted sequences are subsampled to the encoder's max length the same way the training data was.
    """
    return subsample(DesignSequence(states=tuple(states), actions=()), max_len).embeddings()


@api.get("/expert")
def expert() -> Response:
    state = _state()
    try:
        seed = int(request.args["seed"])
    except (KeyError, ValueError) as e:
        raise MalformedStateError("Query parameter seed must be an integer") from e
    if seed < 0:
        raise MalformedStateError("seed must not be negative")
    config = state.config
    gym = BuildingGym.from_config(config)
    constraints, grid, actions = sample_feasible_constraints(
        seed,
        dims=gym.dims,
        ranges=ConstraintRanges(far=config.dataset.far, office_share=config.dataset.office_share),
        partition_ranges=gym.partition_ranges,
        gym=gym,
    )
    sequence = replay(constraints, grid, actions, gym)
    return _json(
        ExpertResponse(
            seed=seed,
            constraints=constraints,
            partition=grid,
            actions=[ApiAction(x=a.x, y=a.y, z=a.z, room_code=int(a.room)) for a in actions],
            states=[to_api(s) for s in sequence.states],
        )
    )


@api.get("/health")
def health() -> Response:
    state = _state()
    ready = state.avd is not None and state.encoder is not None and state.flow is not None
    return _json(HealthResponse(status="ready" if ready else "partial", checkpoints=dict(state.hashes)))


def create_app(state: ServiceState | None = None, static_dir: str | None = None) -> Flask:
    """
    Application factory. Without a state every API call answers 503.
    """
    app = Flask(__name__, static_folder=None)
    if state is not None:
        app.extensions[EXTENSION] = state
    app.register_blueprint(api)

    if static_dir:
        root = Path(static_dir).resolve()

        @app.get("/")
        def index() -> Response:
            return send_from_directory(root, "index.html")

        @app.get("/<path:filename>")
        def static_files(filename: str) -> Response:
            return send_from_directory(root, filename)

    return app


def serve(config: RunConfig) -> None:
    app = create_app(load_state(config), config.service.static_dir)
    logger.info("Serving on %s:%s", config.service.host, config.service.port)
    app.run(host=config.service.host, port=config.service.port, threaded=True)
