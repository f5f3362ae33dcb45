import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distcoop.config import example1, example2
from distcoop.plant import NoiseBounds, NoiseSignal, PlantModel, measure, plant_derivative


@pytest.fixture(scope="module")
def ex1_plant():
    return example1(noisy=True).parsed.plant


def test_equilibrium():
    plant = example1(noisy=False).parsed.plant
    u = [np.zeros(1)] * 6
    np.testing.assert_array_equal(plant_derivative(plant, np.zeros(4), u, 0.0), np.zeros(4))


def test_velocity_feeds_position():
    plant = example1(noisy=False).parsed.plant
    u = [np.zeros(1)] * 6
    np.testing.assert_array_equal(plant_derivative(plant, np.array([0.0, 0, 1, 0]), u, 0.0), [1, 0, 0, 0])


def test_process_noise_vanishes_at_zero(ex1_plant):
    np.testing.assert_array_equal(ex1_plant.omega(0.0), np.zeros(4))
    u = [np.zeros(1)] * 6
    np.testing.assert_array_equal(plant_derivative(ex1_plant, np.zeros(4), u, 0.0), np.zeros(4))


def test_process_noise_waveform(ex1_plant):
    t = 0.7
    expected = 0.02 * np.sin(np.array([1.0, 2.0, 3.0, 4.0]) * t)
    np.testing.assert_allclose(ex1_plant.omega(t), expected, rtol=0, atol=1e-16)


def test_sensorless_node_measures_zero():
    plant = example1(noisy=False).parsed.plant
    x = np.array([3.0, 4.0, 5.0, 6.0])
    for i in (1, 3, 4, 5):
        np.testing.assert_array_equal(measure(plant, x, i, 0.0), np.zeros(2))


def test_position_sensor():
    plant = example1(noisy=False).parsed.plant
    np.testing.assert_array_equal(measure(plant, np.array([3.0, 4.0, -1.0, 2.0]), 0, 0.0), [3, 4])


def test_unit_row_sensor():
    plant = example2(scale=5).parsed.plant
    x = np.zeros(5)
    x[2] = 7.0
    np.testing.assert_array_equal(measure(plant, x, 2, 0.0), [7.0])


def test_measure_index_range():
    plant = example2(scale=3).parsed.plant
    with pytest.raises(IndexError):
        measure(plant, np.zeros(3), 3, 0.0)


def test_dimension_checks():
    with pytest.raises(ValueError, match="columns"):
        PlantModel(np.eye(2), [np.ones((2, 1))], [np.ones((1, 3))])
    with pytest.raises(ValueError, match="rows"):
        PlantModel(np.eye(2), [np.ones((3, 1))], [np.ones((1, 2))])
    with pytest.raises(ValueError, match="square"):
        PlantModel(np.ones((2, 3)), None, [np.ones((1, 3))])
    plant = PlantModel(np.eye(2), [np.ones((2, 1))], [np.ones((1, 2))])
    with pytest.raises(ValueError):
        plant_derivative(plant, np.zeros(3), [np.zeros(1)], 0.0)
    with pytest.raises(ValueError):
        plant_derivative(plant, np.zeros(2), [np.zeros(2)], 0.0)


def test_stacked_shapes():
    plant = PlantModel(np.eye(3), [np.ones((3, 1)), np.ones((3, 2))], [np.ones((2, 3)), np.ones((1, 3))])
    assert plant.B_stacked.shape == (3, 3)
    assert plant.C_stacked.shape == (3, 3)
    np.testing.assert_array_equal(plant.output_offsets, [0, 2, 3])


def test_input_free_plant():
    plant = PlantModel(np.eye(2), None, [np.eye(2)[:1], np.eye(2)[1:]])
    assert plant.input_dims == [0, 0]
    np.testing.assert_array_equal(plant_derivative(plant, np.ones(2), [np.zeros(0)] * 2, 0.0), np.ones(2))


def test_noise_bounds_metadata(ex1_plant):
    b = ex1_plant.noise_bounds()
    assert b.omega_b == pytest.approx(0.04)  # sqrt(4 * 0.02**2)
    assert b.nu_b == pytest.approx(np.sqrt(4 * 0.02 ** 2))
    with pytest.raises(ValueError):
        NoiseBounds(-1.0, 0.0, 0.0)


def test_bounded_random_noise_respects_bound():
    sig = NoiseSignal.bounded_random(3, 0.5, seed=11)
    ts = np.linspace(0, 500, 5001)
    vals = np.array([sig(t) for t in ts])
    assert np.abs(vals).max() <= 0.5
    np.testing.assert_array_equal(sig(3.3), NoiseSignal.bounded_random(3, 0.5, seed=11)(3.3))


def test_noise_is_deterministic(ex1_plant):
    np.testing.assert_array_equal(ex1_plant.omega(12.5), ex1_plant.omega(12.5))
    np.testing.assert_array_equal(ex1_plant.nu(0, 12.5), ex1_plant.nu(0, 12.5))


vec4 = arrays(np.float64, 4, elements=st.floats(-1e3, 1e3))
scalar = arrays(np.float64, 1, elements=st.floats(-1e3, 1e3))


@settings(max_examples=100, deadline=None)
@given(vec4, vec4, st.lists(scalar, min_size=6, max_size=6), st.lists(scalar, min_size=6, max_size=6))
def test_linearity(x1, x2, u1, u2):
    plant = example1(noisy=False).parsed.plant
    lhs = plant_derivative(plant, x1 + x2, [a + b for a, b in zip(u1, u2)], 0.3)
    rhs = plant_derivative(plant, x1, u1, 0.3) + plant_derivative(plant, x2, u2, 0.3)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)
