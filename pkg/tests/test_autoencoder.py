"""Autoencoder: layout arithmetic, gradient oracles, Adam, checkpoints."""

import numpy as np
import pytest

from streamcl.autoencoder import (
    AdamHyper,
    AdamState,
    ArchSpec,
    Autoencoder,
    ParamSet,
    apply_update,
    layout,
    param_count,
)
from streamcl.checkpoint import load_checkpoint, round_trip_f32, save_checkpoint
from streamcl.errors import ConfigError, NumericFailureError

TINY = ArchSpec(input_dim=4, conv_channels=(2,), latent_dim=2)


def _count_by_hand(input_dim, channels, latent):
    # independent recount of every tensor in the network
    k3 = 27
    n = 0
    c_in = 1
    d = input_dim
    for c in channels:
        n += c * c_in * k3 + c
        c_in = c
        d //= 2
    feats = channels[-1] * d**3
    n += latent * feats + latent  # encoder dense
    n += feats * latent + feats  # decoder dense
    for c in list(channels[-2::-1]) + [1]:
        n += c_in * c * k3 + c
        c_in = c
    return n


def test_param_count_default_arch():
    arch = ArchSpec()
    assert param_count(arch) == _count_by_hand(16, (8, 16, 32), 32) == 51745


def test_param_count_tiny_arch():
    assert param_count(TINY) == _count_by_hand(4, (2,), 2) == 193


def test_layout_is_contiguous_partition():
    slots = layout(ArchSpec())
    pos = 0
    for s in slots:
        assert s.offset == pos
        assert s.size == int(np.prod(s.shape))
        pos += s.size
    assert pos == param_count(ArchSpec())


def test_tensor_flat_round_trip():
    model = Autoencoder(TINY)
    params = model.init_params(seed=5)
    rebuilt = ParamSet.from_tensors(TINY, params.to_tensors())
    assert rebuilt.flat.tobytes() == params.flat.tobytes()


def test_tensor_views_alias_flat():
    model = Autoencoder(TINY)
    params = model.init_params(seed=5)
    params.tensor("enc_fc.bias")[:] = 7.0
    slot = next(s for s in layout(TINY) if s.name == "enc_fc.bias")
    assert np.all(params.flat[slot.offset : slot.offset + slot.size] == 7.0)


def test_init_deterministic_and_bounded():
    model = Autoencoder(TINY)
    a = model.init_params(seed=1)
    b = model.init_params(seed=1)
    c = model.init_params(seed=2)
    assert a.flat.tobytes() == b.flat.tobytes()
    assert a.flat.tobytes() != c.flat.tobytes()
    for s in layout(TINY):
        t = a.flat[s.offset : s.offset + s.size]
        if s.fan_in is None:
            assert not np.any(t)
        else:
            assert np.max(np.abs(t)) <= 1.0 / np.sqrt(s.fan_in)


def test_arch_validation():
    with pytest.raises(ConfigError):
        ArchSpec(input_dim=6, conv_channels=(2, 2))  # 6 not divisible by 4
    with pytest.raises(ConfigError):
        ArchSpec(conv_channels=())
    with pytest.raises(ConfigError):
        ArchSpec(latent_dim=0)


def test_shapes_through_network():
    model = Autoencoder(TINY)
    params = model.init_params(seed=0)
    x = np.random.default_rng(0).standard_normal((4, 4, 4))
    e = model.encode(params, x)
    assert e.shape == (2,)
    y = model.decode(params, e)
    assert y.shape == (4, 4, 4)
    with pytest.raises(ValueError):
        model.encode(params, x[:2])
    with pytest.raises(ValueError):
        model.decode(params, np.zeros(3))


def test_latent_is_tanh_bounded():
    model = Autoencoder(TINY)
    params = model.init_params(seed=3)
    x = 100.0 * np.random.default_rng(1).standard_normal((4, 4, 4))
    assert np.all(np.abs(model.encode(params, x)) < 1.0)


def test_zero_params_propagate_zero():
    model = Autoencoder(TINY)
    params = ParamSet(TINY, np.zeros(param_count(TINY)))
    x = np.random.default_rng(2).standard_normal((4, 4, 4))
    assert not np.any(model.encode(params, x))
    assert not np.any(model.reconstruct(params, x))


def _fd_slope(loss_fn, params, i, h=1e-6):
    plus = params.copy()
    plus.flat[i] += h
    minus = params.copy()
    minus.flat[i] -= h
    return (loss_fn(plus) - loss_fn(minus)) / (2.0 * h)


def _probe_coords(arch):
    # middle of every tensor, so each layer's gradient path gets exercised
    return [s.offset + s.size // 2 for s in layout(arch)]


def test_recon_grad_matches_finite_differences():
    model = Autoencoder(TINY)
    params = model.init_params(seed=7)
    rng = np.random.default_rng(11)
    batch = [rng.standard_normal((4, 4, 4)) for _ in range(2)]
    loss, grad = model.recon_loss_and_grad(params, batch)
    assert abs(loss - model.recon_loss(params, batch)) < 1e-12
    for i in _probe_coords(TINY):
        fd = _fd_slope(lambda p: model.recon_loss(p, batch), params, i)
        assert abs(fd - grad[i]) <= 1e-6 * max(1.0, abs(fd))


def test_latent_cycle_grad_matches_finite_differences():
    model = Autoencoder(TINY)
    params = model.init_params(seed=13)
    rng = np.random.default_rng(17)
    latents = [np.tanh(rng.standard_normal(2)) for _ in range(3)]
    loss, grad = model.latent_cycle_loss_and_grad(params, latents)
    assert abs(loss - model.latent_cycle_loss(params, latents)) < 1e-12
    for i in _probe_coords(TINY):
        fd = _fd_slope(lambda p: model.latent_cycle_loss(p, latents), params, i)
        assert abs(fd - grad[i]) <= 1e-6 * max(1.0, abs(fd))


def test_batch_gradient_is_mean_of_singles():
    model = Autoencoder(TINY)
    params = model.init_params(seed=4)
    rng = np.random.default_rng(5)
    batch = [rng.standard_normal((4, 4, 4)) for _ in range(3)]
    loss_b, grad_b = model.recon_loss_and_grad(params, batch)
    singles = [model.recon_loss_and_grad(params, [x]) for x in batch]
    assert abs(loss_b - np.mean([s[0] for s in singles])) < 1e-12
    assert np.allclose(grad_b, np.mean([s[1] for s in singles], axis=0), atol=1e-12)


def test_empty_batch_rejected():
    model = Autoencoder(TINY)
    params = model.init_params(seed=0)
    with pytest.raises(ValueError):
        model.recon_loss(params, [])
    with pytest.raises(ValueError):
        model.latent_cycle_loss_and_grad(params, [])


def test_adam_first_step_magnitude():
    # with fresh moments, the bias-corrected update is lr * sign(g)
    model = Autoencoder(TINY)
    params = model.init_params(seed=0)
    n = param_count(TINY)
    grad = np.where(np.arange(n) % 2 == 0, 3.0, -0.5)
    hyper = AdamHyper(lr=0.1)
    new_params, state = apply_update(params, grad, AdamState.zeros(n), hyper)
    delta = new_params.flat - params.flat
    assert np.allclose(delta, -0.1 * np.sign(grad), atol=1e-8)
    assert state.step == 1


def test_adam_zero_gradient_is_identity():
    model = Autoencoder(TINY)
    params = model.init_params(seed=1)
    n = param_count(TINY)
    new_params, state = apply_update(params, np.zeros(n), AdamState.zeros(n), AdamHyper())
    assert new_params.flat.tobytes() == params.flat.tobytes()
    assert state.step == 1


def test_adam_rejects_non_finite_gradient():
    model = Autoencoder(TINY)
    params = model.init_params(seed=1)
    n = param_count(TINY)
    grad = np.zeros(n)
    grad[0] = np.nan
    with pytest.raises(NumericFailureError):
        apply_update(params, grad, AdamState.zeros(n), AdamHyper())
    with pytest.raises(ValueError):
        apply_update(params, np.zeros(n - 1), AdamState.zeros(n), AdamHyper())


def test_adam_moment_recursion():
    # second step against the closed-form moment recursions
    model = Autoencoder(TINY)
    params = model.init_params(seed=2)
    n = param_count(TINY)
    rng = np.random.default_rng(9)
    g1, g2 = rng.standard_normal(n), rng.standard_normal(n)
    h = AdamHyper()
    p1, s1 = apply_update(params, g1, AdamState.zeros(n), h)
    p2, s2 = apply_update(p1, g2, s1, h)
    m2 = h.beta1 * ((1 - h.beta1) * g1) + (1 - h.beta1) * g2
    v2 = h.beta2 * ((1 - h.beta2) * g1**2) + (1 - h.beta2) * g2**2
    step = h.lr * (m2 / (1 - h.beta1**2)) / (np.sqrt(v2 / (1 - h.beta2**2)) + h.eps)
    assert np.allclose(p2.flat, p1.flat - step, atol=1e-14)


def test_checkpoint_round_trip(tmp_path):
    model = Autoencoder(TINY)
    params = model.init_params(seed=21)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path, TINY)
    assert loaded.flat.tobytes() == round_trip_f32(params).flat.tobytes()


def test_checkpoint_arch_mismatch(tmp_path):
    model = Autoencoder(TINY)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model.init_params(seed=0))
    with pytest.raises(ConfigError):
        load_checkpoint(path, ArchSpec(input_dim=4, conv_channels=(2,), latent_dim=3))


def test_checkpoint_corruption(tmp_path):
    model = Autoencoder(TINY)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, model.init_params(seed=0))
    data = path.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(data[:-8])
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "trunc.bin", TINY)
    (tmp_path / "hdr.bin").write_bytes(b"NOPE" + data[4:])
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "hdr.bin", TINY)
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "missing.bin", TINY)


def test_round_trip_f32_quantizes():
    model = Autoencoder(TINY)
    params = model.init_params(seed=8)
    params.flat[0] = 0.1  # not representable in binary32
    rt = round_trip_f32(params)
    assert rt.flat[0] != 0.1
    assert abs(rt.flat[0] - 0.1) < 1e-7
