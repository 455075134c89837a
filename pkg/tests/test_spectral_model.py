import math

import numpy as np
import pytest

from relaytherm.core.errors import ConfigurationError
from relaytherm.models import ModeVector, SpectralSystem
from relaytherm.services import spectral_model
from relaytherm.services.spectral_model import SQRT_1_PI, SQRT_2_PI, build_rod_model, load_system, validate


def test_rod_coefficients(rod2):
    assert rod2.lambdas.tolist() == [0.0, 1.0, 4.0, 9.0, 16.0]
    assert rod2.k_coeffs[0] == pytest.approx(1.0 / math.sqrt(math.pi))
    assert rod2.k_coeffs[1] == pytest.approx(-math.sqrt(2.0 / math.pi))
    assert rod2.k_coeffs[2] == pytest.approx(math.sqrt(2.0 / math.pi))
    assert rod2.m_coeffs.tolist() == [2.0, 4.0, 4.0, 0.0, 0.0]


def test_index_sets(rod2):
    assert rod2.guiding_indices.tolist() == [0, 1, 2]
    assert rod2.sensor_indices.tolist() == [1, 2]
    assert rod2.guided_indices.tolist() == [3, 4]
    assert rod2.n_sensor_modes == 2


def test_arrays_are_read_only(rod2):
    with pytest.raises(ValueError):
        rod2.m_coeffs[0] = 1.0


@pytest.mark.parametrize(
    "n_modes, overrides",
    [(0, {0: 1.0}), (3, {5: 1.0}), (3, {"x": 1.0}), (3, {1: 1.0}), (3, {0: -1.0})],
)
def test_rod_rejects_bad_input(n_modes, overrides):
    with pytest.raises(ConfigurationError):
        build_rod_model(n_modes, overrides)


def test_validate_reports_m_and_kappa(rod2):
    report = validate(rod2)
    assert report.ok
    # the sensed modes cancel: m1 K1 + m2 K2 = 0
    assert report.M == pytest.approx(2.0 * SQRT_1_PI)
    assert report.kappa == 9.0


def test_validate_without_guided_modes():
    system = build_rod_model(3, {0: 1.0, 1: 1.0, 2: 1.0})
    assert math.isinf(validate(system).kappa)


@pytest.mark.parametrize(
    "lambdas, m, k, violation",
    [
        ([1.0, 2.0], [1.0, 1.0], [1.0, 1.0], "lambda0_nonzero"),
        ([0.0, -1.0], [1.0, 1.0], [1.0, 1.0], "lambda_nonpositive"),
        ([0.0, 4.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], "lambda_not_sorted"),
        ([0.0, 1.0], [0.0, 1.0], [1.0, 1.0], "m0_nonpositive"),
        ([0.0, 1.0], [1.0, 1.0], [-1.0, 1.0], "k0_nonpositive"),
        ([0.0, 1.0], [1.0, math.nan], [1.0, 1.0], "non_finite_coefficients"),
    ],
)
def test_validate_violations(lambdas, m, k, violation):
    report = validate(SpectralSystem(np.array(lambdas), np.array(m), np.array(k)))
    assert not report.ok
    assert violation in report.violations


def test_system_rejects_length_mismatch():
    with pytest.raises(ConfigurationError):
        SpectralSystem(np.zeros(2), np.ones(3), np.ones(2))


def test_load_rod_shorthand_matches_builder(rod2):
    system = load_system({"rod": {"n_modes": 5, "m": {"0": 2.0, "1": 4.0, "2": 4.0}}})
    np.testing.assert_array_equal(system.m_coeffs, rod2.m_coeffs)
    np.testing.assert_array_equal(system.k_coeffs, rod2.k_coeffs)


def test_descriptor_round_trip(rod32):
    again = load_system(spectral_model.system_to_descriptor(rod32))
    np.testing.assert_array_equal(again.lambdas, rod32.lambdas)
    np.testing.assert_array_equal(again.m_coeffs, rod32.m_coeffs)


@pytest.mark.parametrize(
    "descriptor",
    [
        {"rod": {"n_modes": 3, "m": {"0": 1.0}}, "m": [1.0]},
        {"rod": {"m": {"0": 1.0}}},
        {"lambdas": [0.0, 1.0], "m": [1.0, 1.0]},
        {"lambdas": [0.0, 1.0], "m": [1.0], "k": [1.0, 1.0]},
        {"lambdas": [1.0, 2.0], "m": [1.0, 1.0], "k": [1.0, 1.0]},
    ],
)
def test_load_rejects_bad_descriptors(descriptor):
    with pytest.raises(ConfigurationError):
        load_system(descriptor)


def test_rod_field_of_constant_mode(single_mode):
    x = np.linspace(0.0, math.pi, 7)
    field = spectral_model.rod_field(single_mode, ModeVector(np.array([2.0])), x)
    np.testing.assert_allclose(field, 2.0 * SQRT_1_PI)


def test_rod_field_of_first_cosine(rod2):
    values = np.zeros(5)
    values[1] = 1.0
    x = np.array([0.0, math.pi / 2, math.pi])
    field = spectral_model.rod_field(rod2, ModeVector(values), x)
    np.testing.assert_allclose(field, [SQRT_2_PI, 0.0, -SQRT_2_PI], atol=1e-15)
