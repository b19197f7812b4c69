import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gkftrack.geometry import wrap_angle
from gkftrack.motion import KINDS, LinearModel, MotionModel, f_predict, jacobian_f, jacobian_h

finite = st.floats(-5, 5, allow_nan=False)


def _state(model: MotionModel, draw_vals):
    x = np.array(draw_vals[: model.state_dim], dtype=float)
    x[3:6] = np.abs(x[3:6]) + 0.5
    x[model.heading_index] = wrap_angle(x[model.heading_index])
    return x


def _fd_jacobian(fn, x, eps=1e-6):
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = eps
        d = fn(x + e) - fn(x - e)
        cols.append(d / (2 * eps))
    J = np.stack(cols, axis=1)
    return J


@pytest.mark.parametrize("kind", KINDS)
def test_dimensions_and_observation(kind):
    m = MotionModel(kind)
    assert m.state_dim == {"CV": 9, "CA": 11, "CTRA": 10, "Bicycle": 10}[kind]
    x = np.arange(m.state_dim, dtype=float) * 0.1
    y = m.h(x)
    assert y.shape == (7,)
    np.testing.assert_array_equal(jacobian_h(m) @ x, y)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=40, deadline=None)
@given(vals=st.lists(finite, min_size=11, max_size=11), dt=st.floats(0.05, 1.0))
def test_jacobian_matches_finite_differences(kind, vals, dt):
    m = MotionModel(kind)
    x = _state(m, vals)
    # keep the heading away from the wrap seam so differencing stays smooth
    x[m.heading_index] = float(np.clip(x[m.heading_index], -2.5, 2.5))
    J = jacobian_f(m, x, dt)

    def fn(z):
        out = m.f(z, dt)
        k = m.heading_index
        out[k] = z[k] + wrap_angle(out[k] - z[k])
        return out

    np.testing.assert_allclose(J, _fd_jacobian(fn, x), atol=2e-5, rtol=1e-5)


def test_ctra_quarter_turn_example():
    m = MotionModel("CTRA")
    x = np.zeros(10)
    x[3:6] = 1.0
    x[6] = 1.0  # speed
    x[9] = math.pi / 2  # turn rate
    out = m.f(x, 1.0)
    assert out[0] == pytest.approx(2 / math.pi, abs=1e-12)
    assert out[1] == pytest.approx(2 / math.pi, abs=1e-12)
    assert out[8] == pytest.approx(math.pi / 2)


@settings(max_examples=50, deadline=None)
@given(v=st.floats(0, 15), a=st.floats(-3, 3), th=st.floats(-3, 3), dt=st.floats(0.1, 1))
def test_ctra_small_turn_rate_is_continuous(v, a, th, dt):
    m = MotionModel("CTRA")
    x = np.array([0, 0, 0, 1, 1, 1, v, a, th, 0.0])
    below = m.f(np.r_[x[:9], 0.5e-6], dt)
    above = m.f(np.r_[x[:9], 2e-6], dt)
    straight = m.f(x, dt)
    np.testing.assert_allclose(below[:2], straight[:2], atol=1e-4)
    np.testing.assert_allclose(above[:2], straight[:2], atol=1e-4)


def test_cv_and_ca_closed_forms():
    cv = MotionModel("CV")
    x = np.zeros(9)
    x[7:9] = (2.0, -1.0)
    np.testing.assert_allclose(cv.f(x, 0.5)[:2], [1.0, -0.5])
    ca = MotionModel("CA")
    x = np.zeros(11)
    x[9:11] = (2.0, 0.0)
    out = ca.f(x, 1.0)
    np.testing.assert_allclose(out[[0, 7]], [1.0, 2.0])


def test_bicycle_rear_axle_follows_arc():
    """The point beta*l/2 behind the center moves exactly like a CTRA point."""
    beta, l = 0.5, 4.0
    bic = MotionModel("Bicycle", beta=beta)
    ctra = MotionModel("CTRA")
    x = np.array([3.0, -1.0, 0.0, 2.0, l, 1.5, 6.0, 0.5, 0.3, 0.4])
    out = bic.f(x, 0.7)

    def rear(s):
        d = 0.5 * beta * s[4]
        return s[:2] - d * np.array([math.cos(s[8]), math.sin(s[8])])

    rear_next = ctra.f(np.r_[rear(x), x[2:]], 0.7)[:2]
    np.testing.assert_allclose(rear(out), rear_next, atol=1e-12)


@pytest.mark.parametrize("kind", ("CTRA", "Bicycle"))
def test_heading_stays_wrapped(kind):
    m = MotionModel(kind)
    x = np.zeros(10)
    x[3:6] = 1.0
    x[8] = math.pi - 0.01
    x[9] = 1.0
    out = m.f(x, 1.0)
    assert -math.pi <= out[8] < math.pi


@pytest.mark.parametrize("kind", KINDS)
def test_state_from_box_round_trips_velocity(kind):
    m = MotionModel(kind)
    obs = np.array([1.0, 2.0, 0.5, 1.8, 4.5, 1.6, 0.6])
    vel = (3.0 * math.cos(0.6), 3.0 * math.sin(0.6))
    x = m.state_from_box(obs, vel)
    np.testing.assert_allclose(m.h(x), obs)
    np.testing.assert_allclose(m.velocity(x), vel, atol=1e-12)


def test_invalid_kind_and_noise_lengths():
    with pytest.raises(ValueError):
        MotionModel("unicycle")
    with pytest.raises(ValueError):
        MotionModel("CV", q_diag=(1.0, 2.0))


def test_linear_model_surface():
    lm = LinearModel([[1.0, 1.0], [0.0, 1.0]], [[1.0, 0.0]], np.eye(2) * 0.1, [[1.0]])
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(f_predict(lm, x, 1.0), [3.0, 2.0])
    assert lm.state_dim == 2 and lm.obs_dim == 1
    np.testing.assert_allclose(lm.P0, np.eye(2))
