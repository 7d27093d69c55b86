"""Segmentation network: init determinism, forward contracts, gradients."""

import numpy as np
import pytest

from gazeseg.errors import ShapeError, ValidationError
from gazeseg.nn import (
    ModelConfig,
    build_network,
    load_network,
    predict,
    save_network,
)
from gazeseg.nn.optim import Adam, SGDMomentum, cosine_lr, make_optimizer

from oracles import fd_gradient, jitter_params, relative_error

TINY = ModelConfig(depth=1, base_channels=2, feature_dim=2)


def test_same_seed_identical_parameters():
    a = build_network(TINY, seed=5)
    b = build_network(TINY, seed=5)
    assert a.params.keys() == b.params.keys()
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])


def test_different_seeds_differ():
    a = build_network(TINY, seed=5)
    b = build_network(TINY, seed=6)
    assert any(
        not np.array_equal(a.params[n], b.params[n]) for n in a.params
    )


def test_forward_shapes_and_normalization_64x64_depth3():
    net = build_network(ModelConfig(depth=3, base_channels=4, feature_dim=6), seed=0)
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(64, 64)).astype(np.float32)
    phi, p = predict(net, image)
    assert phi.shape == (64, 64, 6)
    assert p.shape == (64, 64, 2)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


def test_probabilities_strictly_inside_unit_interval():
    net = build_network(TINY, seed=1)
    image = np.random.default_rng(1).uniform(size=(8, 8))
    _, p = predict(net, image)
    assert np.all(p > 0.0) and np.all(p < 1.0)


def test_predict_composes_classifier_bit_exact():
    net = build_network(TINY, seed=2)
    image = np.random.default_rng(2).uniform(size=(8, 8))
    phi, p = predict(net, image)
    np.testing.assert_array_equal(net.classify(phi), p)


def test_predict_batch_axis_handling():
    net = build_network(TINY, seed=3)
    rng = np.random.default_rng(3)
    batch = rng.uniform(size=(3, 8, 8, 1)).astype(np.float32)
    phi_b, p_b = predict(net, batch)
    assert phi_b.shape == (3, 8, 8, 2) and p_b.shape == (3, 8, 8, 2)
    # single-image calls match the corresponding batch slice
    phi_0, p_0 = predict(net, batch[0, :, :, 0])
    np.testing.assert_allclose(p_0, p_b[0], atol=1e-6)


def test_forward_deterministic():
    image = np.random.default_rng(4).uniform(size=(8, 8))
    runs = [predict(build_network(TINY, seed=7), image)[1] for _ in range(2)]
    np.testing.assert_array_equal(runs[0], runs[1])


def test_input_size_not_divisible_raises_shape_error():
    net = build_network(ModelConfig(depth=3, base_channels=2, feature_dim=2), seed=0)
    with pytest.raises(ShapeError):
        predict(net, np.zeros((12, 16)))  # 12 not divisible by 8
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 8, 8, 3)))  # wrong channel count


def test_model_config_validation():
    with pytest.raises(ValidationError):
        ModelConfig(depth=0)
    with pytest.raises(ValidationError):
        ModelConfig(base_channels=0)
    with pytest.raises(ValidationError):
        ModelConfig(feature_dim=0)


def test_gradients_match_finite_differences():
    # scalar loss L = sum(c * p) over a fixed random c; analytic grads for
    # every parameter tensor against central differences
    net = build_network(TINY, seed=11, dtype=np.float64)
    jitter_params(net, seed=12)
    rng = np.random.default_rng(13)
    x = rng.uniform(size=(1, 4, 4, 1))
    c = rng.normal(size=(1, 4, 4, 2))

    def loss():
        phi, tape = net.forward_features(x)
        p = net.classify(phi)
        return float((c * p).sum()), phi, tape, p

    value, phi, tape, p = loss()
    dphi, g_grads = net.classify_backward(phi, p, c)
    f_grads, _ = net.features_backward(tape, dphi)
    analytic = {**f_grads, **g_grads}

    for name in net.params:
        p_arr = net.params[name]

        def f_of(v, name=name):
            net.params[name] = v
            out = loss()[0]
            net.params[name] = p_arr
            return out

        numeric = fd_gradient(f_of, p_arr)
        err = relative_error(analytic[name], numeric)
        assert err < 1e-4, f"{name}: fd mismatch {err}"


def test_checkpoint_round_trip_bit_exact(tmp_path):
    net = build_network(ModelConfig(depth=2, base_channels=3, feature_dim=4), seed=21)
    jitter_params(net, seed=22)  # non-initial state must survive too
    path = tmp_path / "net.npz"
    save_network(net, path)
    back = load_network(path)
    assert back.config == net.config
    assert back.init_seed == net.init_seed
    assert back.dtype == net.dtype
    assert back.params.keys() == net.params.keys()
    for name in net.params:
        np.testing.assert_array_equal(back.params[name], net.params[name])
    image = np.random.default_rng(23).uniform(size=(8, 8))
    np.testing.assert_array_equal(predict(net, image)[1], predict(back, image)[1])


# -- optimizers ------------------------------------------------------------


def test_adam_single_step_matches_closed_form():
    # with zero state, one step moves each param by -lr * g / (|g| + eps)
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -1.5, 0.0])}
    opt = Adam(lr=0.1, eps=1e-8)
    opt.step(p, g)
    expected = np.array([1.0, -2.0, 3.0]) - 0.1 * np.array(
        [0.5 / (0.5 + 1e-8), -1.5 / (1.5 + 1e-8), 0.0]
    )
    np.testing.assert_allclose(p["w"], expected, rtol=1e-12)


def test_sgd_momentum_accumulates():
    p = {"w": np.zeros(2)}
    g = {"w": np.ones(2)}
    opt = SGDMomentum(lr=1.0, momentum=0.5)
    opt.step(p, g)  # buf = 1, p = -1
    opt.step(p, g)  # buf = 1.5, p = -2.5
    np.testing.assert_allclose(p["w"], [-2.5, -2.5])


def test_optimizer_state_round_trip():
    rng = np.random.default_rng(31)
    p1 = {"w": rng.normal(size=4).copy()}
    opt1 = Adam(lr=0.05)
    opt1.step(p1, {"w": rng.normal(size=4)})
    p2 = {"w": p1["w"].copy()}  # params + optimizer state both snapshot here
    state = {k: np.array(v) for k, v in opt1.state_dict().items()}
    opt2 = Adam(lr=0.05)
    opt2.load_state_dict(state)
    g = rng.normal(size=4)
    opt1.step(p1, {"w": g})
    opt2.step(p2, {"w": g})
    np.testing.assert_array_equal(p1["w"], p2["w"])


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 100, 1e-2, 1e-4) == pytest.approx(1e-2)
    assert cosine_lr(99, 100, 1e-2, 1e-4) == pytest.approx(1e-4)
    mid = cosine_lr(49.5, 100, 1e-2, 1e-4)
    assert 1e-4 < mid < 1e-2


def test_make_optimizer_rejects_unknown():
    assert isinstance(make_optimizer("adam"), Adam)
    assert isinstance(make_optimizer("sgd"), SGDMomentum)
    with pytest.raises(ValidationError):
        make_optimizer("lion")
    with pytest.raises(ValidationError):
        Adam(lr=0.0)
    with pytest.raises(ValidationError):
        SGDMomentum(momentum=1.0)
