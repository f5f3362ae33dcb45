import numpy as np
import pytest

from distcoop.integrators import euler_step, get_stepper, integrate_fixed, n_steps_for, rk4_step


def rotation(t_final, dt, method="rk4"):
    a = np.array([[0.0, 1.0], [-1.0, 0.0]])
    _, ys = integrate_fixed(lambda t, y: a @ y, [1.0, 0.0], dt, t_final, method)
    return ys[-1]


def test_rk4_matches_exponential_decay():
    y = rk4_step(lambda t, y: -y, 0.0, np.array([1.0]), 0.1)
    # fourth-order Taylor polynomial of exp(-0.1)
    h = 0.1
    assert y[0] == pytest.approx(1 - h + h ** 2 / 2 - h ** 3 / 6 + h ** 4 / 24, abs=1e-15)


def test_euler_step():
    np.testing.assert_array_equal(euler_step(lambda t, y: 2 * y, 0.0, np.array([1.0]), 0.5), [2.0])


def test_rk4_exact_for_cubic_in_time():
    # dy/dt = 3 t^2 is integrated exactly by Simpson weights
    y = rk4_step(lambda t, y: np.array([3 * t ** 2]), 1.0, np.array([0.0]), 0.5)
    assert y[0] == pytest.approx(1.5 ** 3 - 1.0, abs=1e-14)


def test_rotation_accuracy():
    y = rotation(10.0, 1e-3)
    np.testing.assert_allclose(y, [np.cos(10.0), -np.sin(10.0)], atol=1e-8)


def test_step_halving_ratio():
    exact = np.array([np.cos(10.0), -np.sin(10.0)])
    e1 = np.linalg.norm(rotation(10.0, 0.1) - exact)
    e2 = np.linalg.norm(rotation(10.0, 0.05) - exact)
    assert 12 <= e1 / e2 <= 20


def test_euler_is_first_order():
    exact = np.array([np.cos(1.0), -np.sin(1.0)])
    e1 = np.linalg.norm(rotation(1.0, 0.01, "euler") - exact)
    e2 = np.linalg.norm(rotation(1.0, 0.005, "euler") - exact)
    assert 1.8 <= e1 / e2 <= 2.2


def test_recording_stride_and_times():
    ts, ys = integrate_fixed(lambda t, y: np.ones(1), [0.0], 0.1, 1.0, record_every=3)
    np.testing.assert_allclose(ts, [0.0, 0.3, 0.6, 0.9, 1.0])
    np.testing.assert_allclose(ys[:, 0], ts, atol=1e-14)


def test_bad_settings():
    with pytest.raises(ValueError):
        n_steps_for(0.0, 1.0)
    with pytest.raises(ValueError):
        n_steps_for(0.1, 0.01)
    with pytest.raises(ValueError):
        get_stepper("dopri")
