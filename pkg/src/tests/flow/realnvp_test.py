import math

import numpy as np
import pytest

from pymassing.defaults import FlowConfig
from pymassing.errors import CheckpointError, DimensionError
from pymassing.flow import FlowModel, FlowSpec, forward, inverse, layer_log_dets, load_flow, log_prob, save_flow, train_flow
from pymassing.flow.realnvp import half_mask
from pymassing.neural.checkpoint import load_checkpoint, save_checkpoint


def perturbed(dim: int = 8, seed: int = 0) -> FlowModel:
    flow = FlowModel(FlowSpec(dim=dim, coupling_layers=4, hidden_dim=16, seed=seed))
    rng = np.random.default_rng(seed)
    for coupling in flow.couplings:
        coupling.out.weight.data = rng.normal(scale=0.3, size=coupling.out.weight.shape)
        coupling.out.bias.data = rng.normal(scale=0.3, size=coupling.out.bias.shape)
    flow.shift = rng.normal(size=dim)
    flow.scale = rng.uniform(0.5, 2.0, size=dim)
    return flow


def test_fresh_flow_is_identity():
    flow = FlowModel(FlowSpec(dim=6, coupling_layers=3, hidden_dim=8))
    z = np.random.default_rng(1).normal(size=(4, 6))
    u, log_det = forward(flow, z)
    np.testing.assert_array_equal(u, z)
    np.testing.assert_array_equal(log_det, 0.0)


def test_log_prob_at_origin():
    flow = FlowModel(FlowSpec(dim=6, coupling_layers=3, hidden_dim=8))
    assert log_prob(flow, np.zeros(6)) == pytest.approx(-3 * math.log(2 * math.pi))


def test_inverse_recovers_input():
    flow = perturbed()
    z = np.random.default_rng(2).normal(size=(5, 8))
    u, _ = forward(flow, z)
    assert not np.allclose(u, z)
    np.testing.assert_allclose(inverse(flow, u), z, atol=1e-10)
    np.testing.assert_allclose(inverse(flow, u[0]), z[0], atol=1e-10)


def test_log_det_matches_jacobian():
    flow = perturbed()
    z = np.random.default_rng(3).normal(size=8)
    eps = 1e-6
    jacobian = np.zeros((8, 8))
    for i in range(8):
        up, down = z.copy(), z.copy()
        up[i] += eps
        down[i] -= eps
        jacobian[:, i] = (forward(flow, up)[0] - forward(flow, down)[0]) / (2 * eps)
    _, log_det = forward(flow, z)
    _, expected = np.linalg.slogdet(jacobian)
    assert log_det == pytest.approx(expected, abs=1e-5)


def test_layer_contributions_add_up():
    flow = perturbed()
    z = np.random.default_rng(4).normal(size=(3, 8))
    _, total = forward(flow, z)
    layers = layer_log_dets(flow, z)
    assert len(layers) == 4
    np.testing.assert_allclose(sum(layers) - np.log(flow.scale).sum(), total)


def test_masks_alternate():
    np.testing.assert_array_equal(half_mask(4, 0), [1, 1, 0, 0])
    np.testing.assert_array_equal(half_mask(4, 1), [0, 0, 1, 1])
    np.testing.assert_array_equal(half_mask(5, 2), [1, 1, 0, 0, 0])


def test_zero_learning_rate_keeps_parameters():
    flow = perturbed()
    before = flow.state_dict()
    train_flow(flow, np.random.default_rng(5).normal(size=(10, 8)), FlowConfig(optimizer="sgd", lr=0.0, epochs=2, batch_size=4), seed=0, standardize=False)
    for name, value in flow.state_dict().items():
        np.testing.assert_array_equal(value, before[name], err_msg=name)


def test_training_lowers_nll():
    rng = np.random.default_rng(6)
    latents = rng.normal(size=(64, 4)) * [1.0, 0.1, 3.0, 1.0] + [0.0, 2.0, -1.0, 0.5]
    latents[:, 3] += latents[:, 0] ** 2
    flow = FlowModel(FlowSpec(dim=4, coupling_layers=4, hidden_dim=16))
    result = train_flow(flow, latents, FlowConfig(optimizer="adam", lr=1e-2, epochs=40, batch_size=16), seed=0)
    assert len(result.nll) == 40
    assert result.nll[-1] < result.nll[0]
    assert np.isfinite(log_prob(flow, latents)).all()


def test_training_is_deterministic():
    latents = np.random.default_rng(7).normal(size=(20, 4))
    hyper = FlowConfig(optimizer="adam", lr=1e-2, epochs=3, batch_size=8)
    a = FlowModel(FlowSpec(dim=4, coupling_layers=2, hidden_dim=8))
    b = FlowModel(FlowSpec(dim=4, coupling_layers=2, hidden_dim=8))
    assert train_flow(a, latents, hyper, seed=1) == train_flow(b, latents, hyper, seed=1)


def test_checkpoint_round_trip(tmp_path):
    flow = perturbed(seed=8)
    save_flow(flow, tmp_path / "flow.ckpt")
    loaded = load_flow(tmp_path / "flow.ckpt")
    z = np.random.default_rng(9).normal(size=(3, 8))
    np.testing.assert_array_equal(log_prob(loaded, z), log_prob(flow, z))


def test_width_mismatch():
    flow = FlowModel(FlowSpec(dim=4, coupling_layers=2, hidden_dim=8))
    with pytest.raises(DimensionError):
        log_prob(flow, np.zeros(5))
    with pytest.raises(DimensionError):
        inverse(flow, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        train_flow(flow, np.zeros((0, 4)), FlowConfig(), seed=0)


def test_density_integrates_to_one():
    flow = FlowModel(FlowSpec(dim=2, coupling_layers=4, hidden_dim=16, seed=1))
    rng = np.random.default_rng(10)
    for coupling in flow.couplings:
        coupling.out.weight.data = rng.normal(scale=0.1, size=coupling.out.weight.shape)
        coupling.out.bias.data = rng.normal(scale=0.1, size=coupling.out.bias.shape)
    axis = np.linspace(-10.0, 10.0, 501)
    step = axis[1] - axis[0]
    x, y = np.meshgrid(axis, axis, indexing="ij")
    density = np.exp(log_prob(flow, np.stack([x.ravel(), y.ravel()], axis=-1)))
    assert density.sum() * step * step == pytest.approx(1.0, abs=1e-2)


def test_standard_normal_nll_per_dim():
    rng = np.random.default_rng(11)
    train, held_out = rng.normal(size=(512, 4)), rng.normal(size=(512, 4))
    flow = FlowModel(FlowSpec(dim=4, coupling_layers=2, hidden_dim=8))
    train_flow(flow, train, FlowConfig(optimizer="adam", lr=1e-3, epochs=5, batch_size=64), seed=0)
    nll_per_dim = -np.mean(log_prob(flow, held_out)) / 4
    assert nll_per_dim == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=0.1)


def test_held_out_data_beats_uniform_noise():
    rng = np.random.default_rng(12)
    latents = rng.normal(size=(256, 4)) * [1.0, 0.5, 2.0, 1.0]
    latents[:, 3] += np.sin(latents[:, 0])
    flow = FlowModel(FlowSpec(dim=4, coupling_layers=4, hidden_dim=16))
    train_flow(flow, latents[:192], FlowConfig(optimizer="adam", lr=1e-2, epochs=30, batch_size=32), seed=0)
    noise = rng.uniform(-6.0, 6.0, size=(64, 4))
    assert np.mean(log_prob(flow, latents[192:])) > np.mean(log_prob(flow, noise))


def test_checkpoint_carries_masks(tmp_path):
    flow = perturbed(seed=13)
    save_flow(flow, tmp_path / "flow.ckpt")
    spec, tensors = load_checkpoint(tmp_path / "flow.ckpt", "flow", FlowSpec)
    for i in range(spec.coupling_layers):
        np.testing.assert_array_equal(tensors[f"mask.{i}"], half_mask(spec.dim, i))
    tensors["mask.1"] = half_mask(spec.dim, 0)
    save_checkpoint(tmp_path / "tampered.ckpt", "flow", spec, tensors)
    with pytest.raises(CheckpointError):
        load_flow(tmp_path / "tampered.ckpt")
