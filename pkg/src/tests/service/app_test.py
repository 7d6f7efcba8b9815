import msgspec
import numpy as np
import pytest

from pymassing.defaults import GridConfig, RunConfig, ServiceConfig
from pymassing.errors import DimensionError
from pymassing.flow import FlowModel, FlowSpec
from pymassing.models import ModelKind, ModelSpec, SequenceModel
from pymassing.neural import AttentionConfig
from pymassing.service import ServiceState, create_app, from_api, to_api
from pymassing.service.app import posted_embeddings
from pymassing.service.wire import ApiDesignState, MalformedStateError
from pymassing.voxel import DesignState, GridPartition, RoomType

GRID = GridPartition.uniform(2, 2, 2)


def model(kind: ModelKind) -> SequenceModel:
    return SequenceModel(ModelSpec(kind=kind, attention=AttentionConfig(input_dim=8, model_dim=8, layers=1, heads=2, max_len=6)))


@pytest.fixture
def client():
    flow = FlowModel(FlowSpec(dim=8, coupling_layers=2, hidden_dim=8))
    config = RunConfig(grid=GridConfig(dims=(2, 2, 2)), service=ServiceConfig(max_states=10, max_horizon=12))
    state = ServiceState(config=config, avd=model(ModelKind.AVD), encoder=model(ModelKind.VDR), flow=flow, hashes={"avd": "a", "encoder": "e", "flow": "f"})
    return create_app(state).test_client()


def states(n: int = 2) -> list:
    state = DesignState.empty(GRID)
    out = [to_api(state)]
    for i in range(1, n):
        state = state.with_room(i % 2, 1, 0, RoomType.LOBBY)
        out.append(to_api(state))
    return msgspec.to_builtins(out)


def test_health(client):
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.get_json() == {"status": "ready", "checkpoints": {"avd": "a", "encoder": "e", "flow": "f"}}


def test_without_checkpoints_every_call_is_unavailable():
    client = create_app().test_client()
    assert client.get("/api/health").status_code == 503
    response = client.post("/api/autocomplete", json={"states": states(), "horizon": 4})
    assert response.status_code == 503
    assert response.get_json()["error"] == "unavailable"


def test_partial_health():
    state = ServiceState(config=RunConfig(grid=GridConfig(dims=(2, 2, 2))), avd=model(ModelKind.AVD), hashes={"avd": "a"})
    client = create_app(state).test_client()
    assert client.get("/api/health").get_json()["status"] == "partial"
    assert client.post("/api/preference", json={"a": states(), "b": states()}).status_code == 503


def test_autocomplete_echoes_prefix(client):
    prefix = states(3)
    response = client.post("/api/autocomplete", json={"states": prefix, "horizon": 7})
    assert response.status_code == 200
    body = response.get_json()
    assert len(body["states"]) == 7
    assert body["monotonic"] is True
    assert [{"dims": s["dims"], "codes": s["codes"]} for s in body["states"][:3]] == [{"dims": list(s["dims"]), "codes": list(s["codes"])} for s in prefix]


def test_autocomplete_is_deterministic(client):
    request = {"states": states(2), "horizon": 5}
    assert client.post("/api/autocomplete", json=request).get_json() == client.post("/api/autocomplete", json=request).get_json()


@pytest.mark.parametrize(
    "body",
    [
        b"not json",
        b'{"states": []}',
        b'{"states": [], "horizon": 4}',
        b'{"states": [{"dims": [2, 2, 2], "codes": [9, 0, 0, 0, 0, 0, 0, 0]}], "horizon": 4}',
        b'{"states": [{"dims": [2, 2, 2], "codes": [0, 0, 0, 0, 0, 0, 0, 0]}], "horizon": 1}',
        b'{"states": [{"dims": [2, 2, 2], "codes": [0, 0, 0, 0, 0, 0, 0, 0]}], "horizon": 13}',
    ],
)
def test_malformed_requests(client, body):
    response = client.post("/api/autocomplete", data=body, content_type="application/json")
    assert response.status_code == 400
    assert response.get_json()["error"] == "malformed"


def test_dimension_mismatch(client):
    wrong = [{"dims": [2, 2, 3], "codes": [0] * 12}]
    response = client.post("/api/autocomplete", json={"states": wrong, "horizon": 4})
    assert response.status_code == 422
    short = [{"dims": [2, 2, 2], "codes": [0] * 7}]
    assert client.post("/api/autocomplete", json={"states": short, "horizon": 4}).status_code == 422


def test_identical_preference_ties(client):
    response = client.post("/api/preference", json={"a": states(3), "b": states(3)})
    assert response.status_code == 200
    body = response.get_json()
    assert body["winner"] == "tie"
    assert body["scores"][0] == body["scores"][1]


def test_preference_swaps_with_its_inputs(client):
    a, b = states(2), states(3)
    forward = client.post("/api/preference", json={"a": a, "b": b}).get_json()
    backward = client.post("/api/preference", json={"a": b, "b": a}).get_json()
    assert forward["scores"] == backward["scores"][::-1]


def test_preference_needs_states(client):
    assert client.post("/api/preference", json={"a": [], "b": states()}).status_code == 400


def test_long_posted_sequences_fit_the_encoder():
    state = DesignState.empty(GRID)
    sequence = [state] * 20
    assert posted_embeddings(sequence, 5).shape[0] <= 6


def test_expert_is_deterministic():
    client = create_app(ServiceState(config=RunConfig())).test_client()
    first = client.get("/api/expert?seed=3")
    assert first.status_code == 200
    assert first.get_json() == client.get("/api/expert?seed=3").get_json()
    body = first.get_json()
    assert len(body["states"]) == len(body["actions"]) + 1
    assert set(body["states"][0]["codes"]) == {0}
    assert client.get("/api/expert?seed=x").status_code == 400
    assert client.get("/api/expert").status_code == 400


def test_static_ui(tmp_path):
    (tmp_path / "index.html").write_text("<html>ui</html>")
    (tmp_path / "style.css").write_text("body {}")
    client = create_app(static_dir=str(tmp_path)).test_client()
    assert client.get("/").status_code == 200
    assert client.get("/style.css").data == b"body {}"
    assert client.get("/missing.js").status_code == 404


def test_wire_conversion():
    state = DesignState.empty(GRID).with_room(1, 0, 1, RoomType.OFFICE)
    api = to_api(state, with_partition=True)
    assert api.codes[5] == 6
    assert from_api(api, GridPartition.uniform(2, 2, 2, size=3.0)) == state
    with pytest.raises(MalformedStateError):
        from_api(ApiDesignState(dims=(2, 2, 2), codes=[-1] + [0] * 7), GRID)
    with pytest.raises(DimensionError):
        from_api(ApiDesignState(dims=(2, 2, 2), codes=[0] * 9), GRID)
    np.testing.assert_array_equal(from_api(to_api(state), GRID).rooms, state.rooms)
