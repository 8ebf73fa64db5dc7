import numpy as np
import pytest

from bcslab.analysis import passivity_deviation, spectral_abscissa
from bcslab.bcsnode import restricted_generator, transfer, validate
from bcslab.errors import ConfigError
from bcslab.models import (
    ScoleConfig,
    Wave1DConfig,
    Wave2DConfig,
    build_scole,
    build_wave1d,
    build_wave2d,
    frequency_root_fit,
    scole_boundary_node,
    scole_free_spectrum,
    scole_model,
    scole_series_transfer,
    sine_product_integrals,
    wave1d_grid,
    wave1d_internal_transfer_exact,
    wave1d_model,
    wave1d_smooth_states,
    wave2d_frequencies,
)
from bcslab.numerics import eigenvalues
from bcslab.synthesis import assemble_closed_loop, stabilized_pair


def test_single_mode_wave2d_coupling():
    plant, _ = build_wave2d(Wave2DConfig(modes_per_axis=1))
    assert plant.opBi[1, 0] == pytest.approx((0.5 + 1 / np.pi) ** 2, rel=1e-12)


def test_sine_integrals_closed_form():
    c = sine_product_integrals(3)
    # diagonal: int_{1/4}^{3/4} 2 sin^2(k pi s) ds
    for k in range(1, 4):
        exact = 0.5 - (np.sin(1.5 * k * np.pi) - np.sin(0.5 * k * np.pi)) / (2 * k * np.pi)
        assert c[k - 1, k - 1] == pytest.approx(exact, abs=1e-14)
    np.testing.assert_allclose(c, c.T, atol=1e-15)


def test_wave2d_free_spectrum_and_skewness():
    n = 4
    plant, _ = build_wave2d(Wave2DConfig(modes_per_axis=n))
    ev = eigenvalues(restricted_generator(plant).matA)
    expected = np.pi * np.sqrt(wave2d_frequencies(n)) / np.pi
    np.testing.assert_allclose(np.sort(ev.imag[ev.imag > 0]), np.sort(expected), rtol=1e-12)
    ma = plant.gram @ plant.opA
    assert np.linalg.norm(ma + ma.T) / np.linalg.norm(ma) <= 1e-12
    assert passivity_deviation(plant) <= 1e-12


def test_wave2d_closed_loop_is_stable():
    plant, gains = build_wave2d(Wave2DConfig(modes_per_axis=5))
    assert validate(plant).valid
    closed = assemble_closed_loop(plant, gains)
    assert spectral_abscissa(closed.triangular.matA) < 0


def test_config_validation():
    with pytest.raises(ConfigError):
        Wave2DConfig(modes_per_axis=0)
    with pytest.raises(ConfigError):
        Wave2DConfig(modes_per_axis=2, input_rank=5)
    with pytest.raises(ConfigError):
        Wave1DConfig(grid_points=2)
    with pytest.raises(ConfigError):
        Wave1DConfig(ell_i=0.0)
    with pytest.raises(ConfigError):
        ScoleConfig(elements=1)
    with pytest.raises(ConfigError):
        ScoleConfig(EI_profile=lambda x: x - 0.5)


def test_wave1d_uncontrolled_spectrum():
    plant, _ = build_wave1d(Wave1DConfig(grid_points=200))
    ev = eigenvalues(restricted_generator(plant).matA)
    # the rigid mode is a 2x2 Jordan block, so roundoff splits it by about sqrt(eps) ||A||
    assert np.sort(np.abs(ev))[1] <= 1e-5
    freqs = np.sort(ev.imag[ev.imag > 1e-6])[:3]
    np.testing.assert_allclose(freqs, np.pi * np.arange(1, 4), rtol=1e-3)


def test_wave1d_transfer_second_order():
    errs = []
    for n in (50, 100):
        node = wave1d_model(Wave1DConfig(grid_points=n)).internal
        errs.append(np.linalg.norm(transfer(node, 1 + 5j).Pval - wave1d_internal_transfer_exact(1 + 5j)))
    assert 3 <= errs[0] / errs[1] <= 5


def test_wave1d_internal_node_is_lossless():
    node = wave1d_model(Wave1DConfig(grid_points=60)).internal
    assert passivity_deviation(node) <= 1e-8


def test_wave1d_default_closed_loop_is_stable():
    model = wave1d_model(Wave1DConfig())
    pair = stabilized_pair(model.plant, model.gains)
    assert spectral_abscissa(pair.genK) < 0 and spectral_abscissa(pair.genL) < 0


def test_smooth_states_sample_the_same_functions():
    coarse = wave1d_smooth_states(wave1d_grid(20), 3, seed=5, copies=1)
    fine = wave1d_smooth_states(wave1d_grid(40), 3, seed=5, copies=1)
    # velocity block: grid values at x = 0, 0.05, ..., 1 versus every other fine node
    np.testing.assert_allclose(coarse[-21:], fine[-41::2], atol=1e-12)
    assert wave1d_smooth_states(wave1d_grid(20), 2).shape[0] == 2 * coarse.shape[0]


@pytest.fixture(scope="module")
def scole():
    return scole_model(ScoleConfig(elements=30))


def test_scole_nodes_valid_and_lossless(scole):
    assert validate(scole.plant).valid
    assert validate(build_scole(ScoleConfig(elements=4))[0]).valid
    assert passivity_deviation(scole.plant, samples=1000) <= 1e-8


def test_scole_spectrum_asymptotics(scole):
    values, _ = scole_free_spectrum(scole.plant)
    fit = frequency_root_fit(values)
    assert fit.r_squared > 0.999 and fit.slope > 0


def test_scole_series_transfer(scole):
    lam = 1 + 2j
    bordered = transfer(scole_boundary_node(scole.plant), lam).Pval[0, 0]
    assert abs(scole_series_transfer(scole.plant, lam) - bordered) <= 1e-2 * abs(bordered)


def test_scole_gains_stabilize_observer(scole):
    pair = stabilized_pair(scole.plant, scole.gains)
    assert spectral_abscissa(pair.genL) < 0
    assert spectral_abscissa(pair.genK) < 0


def test_root_fit_needs_three_frequencies():
    with pytest.raises(ConfigError):
        frequency_root_fit(np.array([1j, 4j, -1j]))
    fit = frequency_root_fit(1j * (np.arange(1, 41) + 0.3) ** 2)
    assert fit.r_squared == pytest.approx(1.0) and fit.slope == pytest.approx(1.0)
