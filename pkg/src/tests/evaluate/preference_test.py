import numpy as np
import pytest

from pymassing.dataset.generate import build_record
from pymassing.defaults import RunConfig
from pymassing.errors import DimensionError, UsageError
from pymassing.evaluate import (
    PreferenceVerdict,
    corrupted_embeddings,
    flow_preference,
    preference_accuracy,
    preference_experiment,
    sequence_log_likelihood,
    vae_preference,
    verdict,
)
from pymassing.evaluate.preference import absolute_horizon
from pymassing.flow import FlowModel, FlowSpec
from pymassing.models import ModelKind, ModelSpec, SequenceModel
from pymassing.neural import AttentionConfig


def model(kind: ModelKind, input_dim: int = 6) -> SequenceModel:
    return SequenceModel(ModelSpec(kind=kind, attention=AttentionConfig(input_dim=input_dim, model_dim=8, layers=1, heads=2, max_len=10)))


def flow() -> FlowModel:
    rng = np.random.default_rng(0)
    f = FlowModel(FlowSpec(dim=8, coupling_layers=2, hidden_dim=8))
    for coupling in f.couplings:
        coupling.out.weight.data = rng.normal(scale=0.2, size=coupling.out.weight.shape)
    return f


def sequences() -> tuple:
    rng = np.random.default_rng(1)
    return rng.integers(0, 8, size=(4, 6)) / 7, rng.integers(0, 8, size=(5, 6)) / 7


def test_verdict():
    assert verdict(1.0, 0.5).winner == "first"
    assert verdict(0.5, 1.0).winner == "second"
    assert verdict(0.5, 1.0, higher_wins=False).winner == "first"
    assert verdict(2.0, 2.0) == PreferenceVerdict(winner="tie", scores=(2.0, 2.0))


def test_flow_preference_is_antisymmetric():
    encoder, f = model(ModelKind.VDR), flow()
    a, b = sequences()
    forward = flow_preference(encoder, f, a, b)
    backward = flow_preference(encoder, f, b, a)
    assert forward.scores == backward.scores[::-1]
    assert {forward.winner, backward.winner} in ({"first", "second"}, {"tie"})


def test_identical_sequences_tie():
    encoder, f = model(ModelKind.VDR), flow()
    a, _ = sequences()
    assert flow_preference(encoder, f, a, a.copy()).winner == "tie"
    vae = model(ModelKind.VAE)
    assert vae_preference(vae, a, a.copy()).winner == "tie"


def test_vae_preference_prefers_smaller_distance():
    vae = model(ModelKind.VAE)
    a, b = sequences()
    result = vae_preference(vae, a, b)
    expected = "first" if result.scores[0] < result.scores[1] else "second"
    assert result.winner == expected
    with pytest.raises(UsageError):
        vae_preference(model(ModelKind.AVD), a, b)


def test_width_mismatch():
    a, _ = sequences()
    with pytest.raises(DimensionError):
        sequence_log_likelihood(model(ModelKind.VDR), FlowModel(FlowSpec(dim=4)), a)


def test_absolute_horizon():
    assert absolute_horizon(50, "percent", 300) == 150
    assert absolute_horizon(0, "percent", 300) == 0
    assert absolute_horizon(100, "percent", 300) == 300
    assert absolute_horizon(200, "absolute", 300) == 200
    with pytest.raises(ValueError):
        absolute_horizon(1, "relative", 300)


@pytest.fixture(scope="module")
def records() -> list:
    config = RunConfig()
    return [r for r in (build_record(i, 21, config) for i in range(2)) if r is not None]


def always(winner: str):
    def scorer(a: np.ndarray, b: np.ndarray) -> PreferenceVerdict:
        return PreferenceVerdict(winner=winner, scores=(0.0, 0.0))

    return scorer


def occupancy(a: np.ndarray, b: np.ndarray) -> PreferenceVerdict:
    return verdict(float(a[-1].sum()), float(b[-1].sum()))


def test_preference_accuracy_counts_ties_half(records):
    assert preference_accuracy(always("first"), records, 50, "percent", 0, 9) == 1.0
    assert preference_accuracy(always("second"), records, 50, "percent", 0, 9) == 0.0
    assert preference_accuracy(always("tie"), records, 50, "percent", 0, 9) == 0.5
    # the full horizon corrupts nothing, every pair is identical
    assert preference_accuracy(occupancy, records, 100, "percent", 0, 9) == 0.5


def test_full_horizon_corruption_ignores_the_seed(records):
    record = records[0]
    corrupted = corrupted_embeddings(record, len(record.actions), 3, 9)
    again = corrupted_embeddings(record, len(record.actions), 4, 9)
    np.testing.assert_array_equal(corrupted, again)
    assert corrupted.shape[0] <= 10
    np.testing.assert_array_equal(corrupted[0], 0.0)


def test_preference_experiment_rows(records):
    rows = preference_experiment(always("tie"), records, [0, 50], seed=1, mode="percent", reruns=2, max_len=9)
    assert [r.horizon for r in rows] == [0, 50]
    assert all(r.accuracy == 0.5 and r.std == 0.0 and len(r.runs) == 2 for r in rows)
    with pytest.raises(ValueError):
        preference_accuracy(always("tie"), [], 0, "percent", 0, 9)


def test_random_pairs_are_antisymmetric_and_self_tie():
    encoder, f, vae = model(ModelKind.VDR), flow(), model(ModelKind.VAE)
    rng = np.random.default_rng(2)
    swapped = {"first": "second", "second": "first", "tie": "tie"}
    for _ in range(50):
        a = rng.integers(0, 8, size=(int(rng.integers(2, 9)), 6)) / 7
        b = rng.integers(0, 8, size=(int(rng.integers(2, 9)), 6)) / 7
        for scorer in (lambda x, y: flow_preference(encoder, f, x, y), lambda x, y: vae_preference(vae, x, y)):
            forward, backward = scorer(a, b), scorer(b, a)
            assert backward.winner == swapped[forward.winner]
            assert forward.scores == backward.scores[::-1]
            assert scorer(a, a.copy()).winner == "tie"
