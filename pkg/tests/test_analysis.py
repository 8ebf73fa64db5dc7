import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bcslab.analysis import (
    SweepPoint,
    classify,
    coercivity_constant,
    horizon_checkpoints,
    hinf_bound,
    passivity_check,
    passivity_deviation,
    peak_frequencies,
    polynomial_exponent_estimate,
    resolvent_norm,
    resolvent_sweep,
    spectral_abscissa,
    stability_report,
    triangular_abscissa_defect,
    vertical_line_grid,
    wellposedness_constant,
)
from bcslab.bcsnode import DiscreteBoundaryNode, restricted_generator
from bcslab.errors import IllConditionedFit
from bcslab.models import ScoleConfig, Wave1DConfig, scole_boundary_node, scole_model, wave1d_model, wave1d_smooth_states
from bcslab.numerics import GramMatrix
from bcslab.sampling import random_gram, random_node, random_stable_pair
from bcslab.synthesis import assemble_closed_loop


def diagonal_model(count):
    k = np.arange(1, count + 1)
    return np.diag(1j * k - 0.1 / k**2)


def test_abscissa_examples():
    assert spectral_abscissa(np.diag([-1.0, -2.0])) == -1.0
    plant = scole_model(ScoleConfig(elements=20)).plant
    assert abs(spectral_abscissa(restricted_generator(plant))) <= 1e-8
    assert spectral_abscissa(np.diag([-1.0, 5j - 0.1]), band=1.0) == -1.0


def test_scalar_resolvent():
    sweep = resolvent_sweep(np.array([[-1.0]]), [0.0])
    assert sweep[0].resnorm == pytest.approx(1.0)


def test_diagonal_model_resolvent_and_exponent():
    a = diagonal_model(40)
    s = np.arange(5, 31, dtype=float)
    sweep = resolvent_sweep(a, s)
    k = np.arange(5, 31)
    np.testing.assert_allclose([p.resnorm for p in sweep], k**2 / 0.1, rtol=1e-8)
    fit = polynomial_exponent_estimate(sweep, (5, 30))
    assert 0.45 <= fit.alpha_hat <= 0.55
    assert fit.slope == pytest.approx(2.0, abs=1e-6)


@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_sweep_matches_explicit_weighted_formula(n, seed):
    rng = np.random.default_rng(seed)
    gram = random_gram(rng, n)
    # A = F^{-1} D F is normal in the M inner product with eigenvalues d
    d = -rng.uniform(0.1, 2.0, n) + 1j * rng.uniform(-5, 5, n)
    f = gram.factor
    a = np.linalg.solve(f, np.diag(d) @ f)
    s = np.sort(rng.uniform(-6, 6, 5))
    sweep = resolvent_sweep(a, s, gram=gram)
    expected = [1 / np.abs(1j * si - d).min() for si in s]
    np.testing.assert_allclose([p.resnorm for p in sweep], expected, rtol=1e-8)


def test_sweep_flags_singular_points_and_checks_order():
    sweep = resolvent_sweep(np.diag([1j, 2j]), [0.5, 1.0, 1.5])
    assert sweep[1].singular and np.isinf(sweep[1].resnorm)
    assert not sweep[0].singular
    with pytest.raises(ValueError):
        resolvent_sweep(np.eye(2), [1.0, 1.0])


def test_resolvent_norm_against_svd(rng):
    a = rng.standard_normal((12, 12))
    lam = 0.5 + 3j
    expected = 1 / np.linalg.svd(lam * np.eye(12) - a, compute_uv=False)[-1]
    assert resolvent_norm(a, lam) == pytest.approx(expected, rel=1e-10)


@given(st.floats(0.3, 4.0), st.floats(0.01, 100.0))
def test_exponent_exact_on_power_law(p, c):
    s = np.geomspace(5, 500, 20)
    sweep = [SweepPoint(si, c * si**p) for si in s]
    fit = polynomial_exponent_estimate(sweep)
    assert fit.slope == pytest.approx(p, rel=1e-12)
    assert fit.alpha_hat == pytest.approx(1 / p, rel=1e-12)


def test_synthetic_slope_two_gives_half():
    sweep = [SweepPoint(s, s**2) for s in np.linspace(5, 50, 10)]
    assert polynomial_exponent_estimate(sweep).alpha_hat == pytest.approx(0.5, abs=1e-12)


def test_narrow_band_is_ill_conditioned():
    sweep = [SweepPoint(s, s**2) for s in np.linspace(5, 50, 10)]
    with pytest.raises(IllConditionedFit):
        polynomial_exponent_estimate(sweep, (5, 20))


def test_classification():
    assert classify(-0.5, None) == "exponential"
    assert classify(0.0, None) == "marginal"
    fit = polynomial_exponent_estimate([SweepPoint(s, s**2) for s in np.linspace(5, 50, 10)])
    assert classify(-1e-12, fit) == "polynomial(0.5)"


def test_stability_report_on_diagonal_model():
    a = diagonal_model(200)
    peaks = peak_frequencies(a, (5, 50))
    np.testing.assert_allclose(peaks, np.arange(5, 51))
    report = stability_report(a, band=(5, 50))
    assert report.classification_hint.startswith("polynomial")
    assert 0.45 <= report.slope_fit.alpha_hat <= 0.55
    assert all(b.s > a.s for a, b in zip(report.sweep, report.sweep[1:]))


def test_shifted_generator_violates_passivity(rng):
    node = scole_model(ScoleConfig(elements=8)).plant
    assert passivity_check(node) <= 1e-8
    shifted = node.replace(opA=node.opA + np.eye(node.n))
    # unit M-norm samples: Re<(A + I)x, x> - Re<Bx, Cx> = ||x||_M^2 = 1
    assert passivity_check(shifted) == pytest.approx(1.0, rel=1e-8)
    # damping the whole state breaks the equality case symmetrically
    damped = node.replace(opA=node.opA - 0.5 * np.eye(node.n))
    assert passivity_deviation(damped) == pytest.approx(0.5, rel=1e-8)


def test_passivity_needs_matching_dimensions(rng):
    with pytest.raises(ValueError):
        passivity_check(random_node(rng, 5, 1, 1, 2))


@given(st.integers(0, 2**32 - 1))
def test_passivity_invariant_under_unitary_coordinates(seed):
    rng = np.random.default_rng(seed)
    node = random_node(rng, 6, 2, 2, 2)
    # T maps new coordinates to old; M-unitary means T^T M T = I
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    t = np.linalg.solve(node.metric.factor, q)
    moved = DiscreteBoundaryNode(
        np.linalg.solve(t, node.opA @ t), node.opB @ t, node.opC @ t, node.opQ, np.linalg.solve(t, node.opBi), np.eye(6)
    )
    a = passivity_check(node, seed=3)
    # the same samples in the new coordinates: x_new = T^{-1} x_old
    samples = np.random.default_rng(3).standard_normal((6, 256))
    samples = samples / np.sqrt(node.metric.norm_sq(samples))
    lhs_old = np.einsum("ij,ij->j", samples, node.gram @ node.opA @ samples) - np.einsum("ij,ij->j", node.opB @ samples, node.opC @ samples)
    xn = np.linalg.solve(t, samples)
    lhs_new = np.einsum("ij,ij->j", xn, moved.opA @ xn) - np.einsum("ij,ij->j", moved.opB @ xn, moved.opC @ xn)
    np.testing.assert_allclose(lhs_new, lhs_old, atol=1e-10 * max(1.0, np.abs(lhs_old).max()))
    assert a == pytest.approx(lhs_old.max(), abs=1e-10 * max(1.0, abs(a)))


def test_hinf_trivial_and_scalar_examples():
    res = hinf_bound(lambda lam: np.zeros((1, 1)), np.eye(1), [1.0, 2 + 3j])
    assert res.supremum == pytest.approx(1.0)
    # P(lam) = 1/lam from x' = u, y = x
    node = DiscreteBoundaryNode(np.zeros((1, 1)), np.zeros((0, 1)), np.ones((1, 1)), np.zeros((0, 1)), np.ones((1, 1)), np.eye(1))
    grid = vertical_line_grid([1.0, 2.0, 5.0], 100.0, 300)
    res = hinf_bound(node, np.eye(1), grid, sign=+1)
    exact = max(abs(lam / (lam + 1)) for lam in grid)
    assert res.supremum == pytest.approx(exact, rel=1e-10)
    assert res.supremum < 1


def test_collocated_bound_on_small_beam():
    plant = scole_model(ScoleConfig(elements=10)).plant
    k = np.eye(1)
    res = hinf_bound(scole_boundary_node(plant), k, vertical_line_grid([0.1, 1, 10], 50, 60), sign=+1, c=coercivity_constant(k))
    assert res.holds and res.lemma_bound == pytest.approx(1.0)


def test_vertical_grid_layout():
    g = vertical_line_grid([0.1, 1.0, 10.0], 50.0, 200)
    assert g.size == 200
    assert set(np.round(g.real, 12)) == {0.1, 1.0, 10.0}
    assert np.abs(g.imag).max() == 50.0


def test_contraction_constant_is_at_most_one():
    # x' = -x with no input and output: the energy ratio is e^{-2t}
    node = DiscreteBoundaryNode(-np.eye(2), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 0)), np.zeros((2, 0)), np.eye(2))
    est = wellposedness_constant(node, 2.0, probes=4, dt=0.01)
    assert est.constM <= 1 + 1e-4


def test_checkpoints_nest():
    a = set(horizon_checkpoints(4.0, 0.01))
    b = set(horizon_checkpoints(8.0, 0.01))
    assert a <= b and max(a) == 400 and min(a) >= 64


@pytest.fixture(scope="module")
def small_loop():
    model = wave1d_model(Wave1DConfig(grid_points=30))
    return assemble_closed_loop(model.plant, model.gains), model


def test_wellposedness_monotone_in_horizon_and_probes(small_loop):
    closed, model = small_loop
    states = wave1d_smooth_states(model.grid, 6, seed=3)
    kw = dict(seed=1, outputs=model.external_outputs, initial_states=states, input_cutoff=10.0)
    by_tau = [wellposedness_constant(closed, tau, 3, **kw).constM for tau in (1.0, 2.0, 4.0)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(by_tau, by_tau[1:]))
    by_probes = [wellposedness_constant(closed, 2.0, p, **kw).constM for p in (1, 2, 4)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(by_probes, by_probes[1:]))
    assert by_probes[0] >= 1.0 - 1e-9


@given(st.integers(0, 2**32 - 1))
def test_triangular_abscissa_equals_worst_block(seed):
    rng = np.random.default_rng(seed)
    plant, gains = random_stable_pair(rng, 10)
    closed = assemble_closed_loop(plant, gains)
    a_e = restricted_generator(closed.extended).matA
    assert triangular_abscissa_defect(closed.pair.genK.matA, closed.pair.genL.matA, a_e) <= 1e-8
    assert spectral_abscissa(a_e) == pytest.approx(-0.25, abs=1e-8)


def test_gram_weighted_norm_differs_from_euclidean(rng):
    gram = GramMatrix(np.diag([1.0, 100.0]))
    a = np.array([[-1.0, 1.0], [0.0, -1.0]])
    assert resolvent_norm(a, 0.0, gram) != pytest.approx(resolvent_norm(a, 0.0))
