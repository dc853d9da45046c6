import numpy as np
import pytest

from hybridqrl import model, nn, pqc
from hybridqrl.checkpoint import checkpoint_hash, load_checkpoint, read_header, save_checkpoint
from hybridqrl.errors import ArchitectureError, ArgumentError, CheckpointError, ConfigurationError, StateError
from hybridqrl.gradcheck import central_difference, model_gradient_error, relative_error


def full_net(model_type="hybrid", **kw):
    return model.build_net(model.NetSpec(model_type=model_type, **kw), seed=0)


def test_baseline_hybrid_counts():
    net = full_net()
    sizes = net.group_sizes()
    assert net.spec.latent == 16
    assert sizes["pqc"] == 60
    assert sizes["preproc"] == 3136 * 16 + 16
    assert sizes["postproc"] == 4 * 3 + 3
    assert net.q_values(np.zeros((84, 84, 4), np.uint8)).shape == (3,)


def test_larger_circuit_latent():
    spec = model.NetSpec(n_qubits=6, n_layers=6)
    assert spec.latent == 36
    assert pqc.PqcArchitecture(6, 6).n_params == 126


def test_classical_counts_and_latent_equality():
    hybrid = full_net()
    classical = full_net("classical", latent_dim=16)
    sizes = classical.group_sizes()
    assert sizes["hidden"] == 8704
    assert sizes["bottleneck"] == 3136 * 16 + 16
    assert classical.spec.latent == hybrid.spec.latent
    unconstrained = full_net("classical-unconstrained")
    assert unconstrained.group_sizes()["hidden"] == 3136 * 512 + 512
    assert "bottleneck" not in unconstrained.group_sizes()


def test_groups_cover_every_parameter_once():
    for mt in model.MODEL_TYPES:
        net = model.build_net(model.tiny_spec(mt), seed=1)
        arrays = [a for arrs in net.param_groups().values() for a in arrs]
        assert len({id(a) for a in arrays}) == len(arrays) == len(net.named_params())
        assert set(net.param_groups()) == set(model.GROUPS[mt])


def test_zero_weight_forward_reduces_to_circuit():
    with nn.float64_mode():
        net = model.build_net(model.tiny_spec(dtype="float64"), seed=2)
    for layer in net.conv:
        layer.params["W"][...] = 0
        layer.params["b"][...] = 0
    net.preproc.params["W"][...] = 0
    net.preproc.params["b"][...] = 0
    obs = np.random.default_rng(0).random((8, 8, 1))
    expz = pqc.pqc_forward(net.arch, net.theta, np.zeros(net.arch.n_features))
    w, b = net.postproc.params["W"], net.postproc.params["b"]
    assert np.abs(net.q_values(obs) - (expz @ w + b)).max() <= 1e-12


def test_observation_shape_checked():
    net = model.build_net(model.tiny_spec(), seed=0)
    with pytest.raises(ArgumentError):
        net.q_values(np.zeros((9, 8, 1)))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        model.NetSpec(model_type="transformer")
    with pytest.raises(ConfigurationError):
        model.NetSpec(preproc_activation="relu")
    with pytest.raises(ConfigurationError):
        model.NetSpec(input_shape=(84, 84, 3))


@pytest.mark.parametrize("model_type", model.MODEL_TYPES)
def test_end_to_end_gradients(model_type):
    assert model_gradient_error(model_type, seed=0) <= 1e-4


def test_end_to_end_gradient_direct():
    # one independent FD sweep over the pqc and preproc groups of the tiny hybrid
    spec = model.tiny_spec(dtype="float64")
    net = model.build_net(spec, seed=5)
    rng = np.random.default_rng(5)
    obs = rng.random((2, 8, 8, 1))
    u = rng.normal(size=(2, 3))
    net.forward(obs)
    grads = net.backward(u)
    for group in ("pqc", "preproc"):
        arr = net.param_groups()[group][0]

        def f(v, arr=arr):
            saved = arr.copy()
            arr[...] = v
            out = np.array([np.sum(net.forward(obs) * u)])
            arr[...] = saved
            return out

        fd = central_difference(f, arr.copy())[0].reshape(arr.shape)
        assert relative_error(grads[group][0], fd) <= 1e-4


def test_zero_upstream_zero_grads():
    net = model.build_net(model.tiny_spec(dtype="float64"), seed=3)
    net.forward(np.random.default_rng(1).random((3, 8, 8, 1)))
    grads = net.backward(np.zeros((3, 3)))
    assert all(not g.any() for arrs in grads.values() for g in arrs)


def test_backward_needs_forward():
    with pytest.raises(StateError):
        model.build_net(model.tiny_spec(), seed=0).backward(np.zeros((1, 3)))


def test_frozen_pqc_group():
    net = model.build_net(model.tiny_spec(dtype="float64"), seed=4)
    theta = net.theta.copy()
    opt = nn.Adam(net.param_groups(), {"conv": 1e-3, "preproc": 1e-3, "pqc": 0.0, "postproc": 1e-3})
    net.forward(np.random.default_rng(2).random((2, 8, 8, 1)))
    opt.step(net.backward(np.ones((2, 3))))
    assert np.array_equal(net.theta, theta)
    assert not np.array_equal(net.postproc.params["b"], 0)


def test_clone_is_independent_and_sync_is_exact():
    online = model.build_net(model.tiny_spec(), seed=6)
    target = model.clone_target(online)
    before = target.theta.copy()
    online.theta += 0.5
    online.preproc.params["W"] *= 2
    assert np.array_equal(target.theta, before)
    model.sync_target(target, online)
    for (_, _, a), (_, _, b) in zip(target.named_params(), online.named_params()):
        assert np.array_equal(a, b)
    obs = np.random.default_rng(3).random((4, 8, 8, 1))
    assert np.array_equal(target.forward(obs), online.forward(obs))


def test_sync_rejects_other_architecture():
    a = model.build_net(model.tiny_spec(), seed=0)
    b = model.build_net(model.tiny_spec(n_qubits=3), seed=0)
    with pytest.raises(ArchitectureError):
        model.sync_target(a, b)


@pytest.mark.parametrize("model_type", model.MODEL_TYPES)
def test_checkpoint_round_trip(tmp_path, model_type):
    net = model.build_net(model.tiny_spec(model_type), seed=7)
    path = save_checkpoint(net, tmp_path / "net.ckpt", {"note": "x"})
    loaded = load_checkpoint(path)
    obs = np.random.default_rng(4).random((3, 8, 8, 1))
    assert np.array_equal(loaded.forward(obs), net.forward(obs))
    header = read_header(path)
    assert header["metadata"] == {"note": "x"}
    assert header["groups"] == net.group_sizes()
    assert header["arithmetic"] == "float32"


def test_checkpoint_reports_pqc_params(tmp_path):
    path = save_checkpoint(full_net(), tmp_path / "base.ckpt")
    assert read_header(path)["pqc_params"] == 60


def test_checkpoint_is_deterministic(tmp_path):
    a = save_checkpoint(model.build_net(model.tiny_spec(), seed=8), tmp_path / "a.ckpt")
    b = save_checkpoint(model.build_net(model.tiny_spec(), seed=8), tmp_path / "b.ckpt")
    assert checkpoint_hash(a) == checkpoint_hash(b)


def test_checkpoint_errors(tmp_path):
    path = save_checkpoint(model.build_net(model.tiny_spec(n_qubits=4, n_layers=1), seed=0), tmp_path / "q4.ckpt")
    with pytest.raises(ArchitectureError):
        load_checkpoint(path, expected=model.tiny_spec(n_qubits=6, n_layers=1))
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0xFF
    (tmp_path / "bad.ckpt").write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
    text = path.read_bytes().replace(b'"format_version": 1', b'"format_version": 9')
    (tmp_path / "v9.ckpt").write_bytes(text)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "v9.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"hello")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.ckpt")
