import math

import numpy as np
import pytest

from gkftrack.gkf import (
    GainNetConfig, GainNetwork, NonFiniteGainError, TrackHidden, compute_features, compute_gain, gkf_step,
    gkf_update, run_sequence, selection_gain,
)
from gkftrack.motion import LinearModel, MotionModel
from gkftrack.neural import Tape
from gkftrack.neural import autodiff as ad
from gkftrack.trainer import gain_gradient_closed_form

from oracles import central_differences, relative_error

CTRA = MotionModel("CTRA")
X0 = np.array([1.0, 2.0, 0.0, 1.8, 4.5, 1.6, 5.0, 0.2, 0.3, 0.05])


def tiny(model=CTRA, h=4) -> GainNetConfig:
    return GainNetConfig(model.state_dim, model.obs_dim, hidden_q=h, hidden_p=h, hidden_s=h, bridge_dim=h, head_dim=h)


def randomized(config, seed):
    """Random weights and biases so no unit sits at a relu kink or a zero gradient."""
    rng = np.random.default_rng(seed)
    net = GainNetwork.initialize(config, seed)
    for k, v in net.params.items():
        net.params[k] = v + rng.normal(0, 0.3, v.shape)
    net.invalidate()
    return net


def observations(model, x0, n, seed, dt=0.5):
    rng = np.random.default_rng(seed)
    x = x0.copy()
    out = []
    for _ in range(n):
        x = model.f(x, dt)
        y = model.h(x) + rng.normal(0, 0.1, model.obs_dim)
        out.append(y)
    return out


# -------------------------------------------------------------- structure
def test_default_sizes_follow_dimensions():
    c = GainNetConfig(10, 7).resolved()
    assert (c.hidden_q, c.hidden_p, c.hidden_s, c.bridge_dim, c.head_dim) == (200, 200, 98, 49, 140)
    shapes = c.param_shapes()
    assert shapes["head_2.W"] == (70, 140)
    assert shapes["embed_q.W"] == (200, 20)
    assert shapes["embed_s.W"] == (98, 49 + 14)


def test_wrong_parameter_shapes_rejected():
    net = GainNetwork.initialize(tiny())
    params = dict(net.params)
    params["head_2.b"] = np.zeros(3)
    with pytest.raises(ValueError):
        GainNetwork(net.config, params)
    with pytest.raises(ValueError):
        GainNetwork.initialize(tiny(), gain=np.zeros((7, 10)))


# --------------------------------------------------------------- features
def test_first_update_features_only_innovation():
    net = GainNetwork.initialize(tiny())
    hidden = TrackHidden.reset(net.config, X0)
    prior = CTRA.f(X0, 0.5)
    y = CTRA.h(prior) + 0.1
    f = compute_features(hidden, ad.Var(prior), y, CTRA).values()
    assert not f["dx_update"].any() and not f["dx_evolution"].any() and not f["dy_obs"].any()
    np.testing.assert_allclose(f["dy_innovation"], 0.1)


def test_scripted_three_frame_features():
    m = LinearModel([[1.0, 1.0], [0.0, 1.0]], [[1.0, 0.0]], np.eye(2), [[1.0]])
    net = GainNetwork.initialize(GainNetConfig(2, 1), gain=[[0.5], [0.25]])
    hidden = TrackHidden.reset(net.config, [0.0, 1.0])
    # frame 1: prior (1, 1), y = 3 -> innovation 2, posterior (2, 1.5)
    post1, hidden = gkf_step(net, hidden, [3.0], m, 1.0)
    np.testing.assert_allclose(post1.value, [2.0, 1.5])
    # frame 2: prior (3.5, 1.5), y = 3.5 -> features from frame 1
    prior2 = ad.Var(np.array([3.5, 1.5]))
    f = compute_features(hidden, prior2, np.array([3.5]), m).values()
    np.testing.assert_allclose(f["dx_update"], [1.0, 0.5])  # posterior1 - prior1
    np.testing.assert_allclose(f["dx_evolution"], [2.0, 0.5])  # posterior1 - seed state
    np.testing.assert_allclose(f["dy_obs"], [0.5])  # y2 - y1
    np.testing.assert_allclose(f["dy_innovation"], [0.0])
    post2, hidden = gkf_update(net, hidden, prior2, [3.5], m)
    f = compute_features(hidden, ad.Var(np.array([5.0, 1.5])), np.array([6.0]), m).values()
    np.testing.assert_allclose(f["dx_update"], [0.0, 0.0])
    np.testing.assert_allclose(f["dx_evolution"], [1.5, 0.0])
    np.testing.assert_allclose(f["dy_obs"], [2.5])
    np.testing.assert_allclose(f["dy_innovation"], [1.0])


def test_stationary_object_features_vanish():
    m = LinearModel(np.eye(2), [[1.0, 0.0], [0.0, 1.0]], np.eye(2), np.eye(2))
    net = GainNetwork.initialize(GainNetConfig(2, 2), gain=0.5 * np.eye(2))
    hidden = TrackHidden.reset(net.config, [0.0, 0.0])
    y = np.array([1.0, -2.0])
    for _ in range(80):
        _, hidden = gkf_step(net, hidden, y, m, 1.0)
    prior = ad.Var(hidden.last_posterior.value.copy())
    f = compute_features(hidden, prior, y, m).values()
    for v in f.values():
        assert np.abs(v).max() < 1e-12


# -------------------------------------------------------------- gain / step
def test_zero_network_gives_zero_gain_and_prior():
    net = GainNetwork.zeros(tiny())
    hidden = TrackHidden.reset(net.config, X0)
    ys = observations(CTRA, X0, 1, 0)
    post, _ = gkf_step(net, hidden, ys[0], CTRA, 0.5)
    np.testing.assert_allclose(post.value, CTRA.f(X0, 0.5))


def test_zero_innovation_keeps_prior_for_any_gain():
    net = randomized(tiny(), 1)
    hidden = TrackHidden.reset(net.config, X0)
    prior = CTRA.f(X0, 0.5)
    post, _ = gkf_step(net, hidden, CTRA.h(prior), CTRA, 0.5)
    np.testing.assert_allclose(post.value, prior, atol=1e-12)


def test_compute_gain_is_pure():
    net = randomized(tiny(), 2)
    hidden = TrackHidden.reset(net.config, X0)
    f = compute_features(hidden, ad.Var(CTRA.f(X0, 0.5)), observations(CTRA, X0, 1, 3)[0], CTRA)
    K1, h1 = compute_gain(net, hidden, f)
    K2, h2 = compute_gain(net, hidden, f)
    np.testing.assert_array_equal(K1.value, K2.value)
    np.testing.assert_array_equal(h1.h_s.value, h2.h_s.value)
    assert K1.shape == (10, 7)


def test_hand_set_gain_two_frames():
    m = LinearModel([[1.0]], [[1.0]], [[0.0]], [[1.0]])
    net = GainNetwork.initialize(GainNetConfig(1, 1), gain=[[0.3]])
    post = run_sequence(net, m, [0.0], [[1.0], [2.0]])
    assert post[0].value[0] == pytest.approx(0.3)
    assert post[1].value[0] == pytest.approx(0.3 + 0.3 * (2.0 - 0.3))


def test_coasting_returns_prior_and_keeps_hidden():
    net = randomized(tiny(), 3)
    hidden = TrackHidden.reset(net.config, X0)
    _, hidden = gkf_step(net, hidden, observations(CTRA, X0, 1, 4)[0], CTRA, 0.5)
    post, h2 = gkf_step(net, hidden, None, CTRA, 0.5)
    np.testing.assert_allclose(post.value, CTRA.f(hidden.last_posterior.value, 0.5))
    assert h2.h_q is hidden.h_q and h2.h_s is hidden.h_s
    assert h2.last_observation is hidden.last_observation


def test_flipped_heading_observation_is_turned_back():
    net = GainNetwork.initialize(tiny(), gain=selection_gain(CTRA, 0.5))
    hidden = TrackHidden.reset(net.config, X0)
    prior = CTRA.f(X0, 0.5)
    y = CTRA.h(prior)
    y[6] = y[6] + math.pi
    post, _ = gkf_step(net, hidden, y, CTRA, 0.5, flip_heading=True)
    assert post.value[8] == pytest.approx(prior[8], abs=1e-9)
    post, _ = gkf_step(net, hidden, y, CTRA, 0.5, flip_heading=False)
    assert abs(post.value[8] - prior[8]) > 1.0


def test_non_finite_gain_raises_with_features():
    net = GainNetwork.initialize(tiny(), gain=selection_gain(CTRA, 0.5))
    net.params["head_2.b"][0] = np.inf
    net.invalidate()
    hidden = TrackHidden.reset(net.config, X0)
    with pytest.raises(NonFiniteGainError, match="features"):
        gkf_step(net, hidden, observations(CTRA, X0, 1, 0)[0], CTRA, 0.5)


# -------------------------------------------------------------- gradients
def sequence_loss(net, pv, ys, targets):
    post = run_sequence(net, CTRA, X0, ys, 0.5, pv=pv)
    return ad.total([ad.sum_squares(p - t) for p, t in zip(post, targets)])


@pytest.mark.parametrize("seed", [0, 1])
def test_full_network_gradient_matches_finite_differences(seed):
    net = randomized(tiny(), seed)
    ys = observations(CTRA, X0, 5, seed)
    rng = np.random.default_rng(seed + 10)
    targets = [CTRA.f(X0, 0.5 * (k + 1)) + rng.normal(0, 0.1, 10) for k in range(5)]
    tape = Tape()
    grads = tape.backward(sequence_loss(net, net.bind(tape), ys, targets))

    def value():
        net.invalidate()
        return float(sequence_loss(net, net.bind(), ys, targets).value)

    fd = central_differences(value, net.params, 1e-5)
    for k in net.params:
        assert relative_error(grads[k], fd[k]) < 1e-4, k


def test_gain_gradient_closed_form_matches_tape():
    rng = np.random.default_rng(7)
    for _ in range(100):
        m, n = rng.integers(1, 11), rng.integers(1, 8)
        K, dy, dX = rng.normal(size=(m, n)), rng.normal(size=n), rng.normal(size=m)
        tape = Tape()
        Kv = tape.watch("K", K)
        g = tape.backward(ad.sum_squares(ad.matvec(Kv, dy) - dX))["K"]
        np.testing.assert_allclose(gain_gradient_closed_form(K, dy, dX), g, atol=1e-8)


def test_gain_gradient_zero_innovation_is_zero():
    assert not gain_gradient_closed_form(np.ones((3, 2)), np.zeros(2), np.ones(3)).any()


# ------------------------------------------------ learned gain on a toy
def test_trained_scalar_gain_approaches_steady_state():
    from gkftrack.experiments import ToyConfig, toy_sequences
    from gkftrack.trainer import TrainConfig, train_on_sequences

    cfg = ToyConfig(epochs=1)
    model = LinearModel([[cfg.a]], [[1.0]], [[cfg.q]], [[cfg.r]], [[1.0]])
    net = GainNetwork.initialize(GainNetConfig(1, 1), 0)
    train_on_sequences(net, model, toy_sequences(cfg, cfg.n_train, 0), TrainConfig(epochs=1, max_lr=cfg.max_lr), 1.0)
    b = cfg.r * (1 - cfg.a ** 2) - cfg.q
    p = (-b + math.sqrt(b * b + 4 * cfg.q * cfg.r)) / 2
    k_ss = p / (p + cfg.r)
    # read the emitted gain off each update: K = (posterior - prior) / innovation
    _, ys, _ = toy_sequences(cfg, 1, 99)[0]
    hidden = TrackHidden.reset(net.config, [0.0])
    gains = []
    for y in ys:
        prior = cfg.a * hidden.last_posterior.value[0]
        post, hidden = gkf_step(net, hidden, y, model, 1.0)
        if abs(y[0] - prior) > 0.2:
            gains.append((post.value[0] - prior) / (y[0] - prior))
    late = np.array(gains[20:])
    assert np.mean(np.abs(late - k_ss)) < 0.05
