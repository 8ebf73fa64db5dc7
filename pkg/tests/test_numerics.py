import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from bcslab.errors import NoConvergence, SingularMatrix
from bcslab.numerics import (
    GramMatrix,
    eigen_spectrum,
    eigenvalues,
    implicit_midpoint_step,
    real_matmul,
    solve_bordered,
    solve_linear,
    weighted_min_singular,
)


def spd(rng, n):
    x = rng.standard_normal((n, n))
    return x @ x.T / n + np.eye(n)


def test_solve_identity_and_diagonal():
    np.testing.assert_allclose(solve_linear(np.eye(3), np.array([1.0, 2, 3])), [1, 2, 3])
    np.testing.assert_allclose(solve_linear(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])


def test_solve_matches_lu_oracle(rng):
    a = rng.standard_normal((8, 8)) + 8 * np.eye(8)
    b = rng.standard_normal(8)
    np.testing.assert_allclose(solve_linear(a, b), sla.lu_solve(sla.lu_factor(a), b), rtol=1e-10)


def test_solve_singular_raises():
    with pytest.raises(SingularMatrix):
        solve_linear(np.array([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(SingularMatrix):
        solve_linear(np.array([[np.nan, 0.0], [0.0, 1.0]]), np.ones(2))


def test_backward_mode_accepts_badly_scaled_systems():
    a = np.diag([1e12, 1.0])
    a[0, 1] = 1e11
    x = solve_linear(a, np.array([1.0, 1.0]), tol=1e-12, backward=True)
    assert np.linalg.norm(a @ x - [1, 1]) <= 1e-12 * (np.linalg.norm(a) * np.linalg.norm(x) + np.sqrt(2))


def test_bordered_identity_blocks():
    x1, x2 = solve_bordered(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), np.eye(1), np.array([1.0, 2.0]), np.array([3.0]))
    np.testing.assert_allclose(x1, [1, 2])
    np.testing.assert_allclose(x2, [3])


def test_bordered_matches_assembled_solve(rng):
    a11, a12 = rng.standard_normal((2, 2)) + 3 * np.eye(2), rng.standard_normal((2, 2))
    a21, a22 = rng.standard_normal((2, 2)), rng.standard_normal((2, 2)) + 3 * np.eye(2)
    b1, b2 = rng.standard_normal(2), rng.standard_normal(2)
    x1, x2 = solve_bordered(a11, a12, a21, a22, b1, b2)
    full = np.linalg.solve(np.block([[a11, a12], [a21, a22]]), np.concatenate([b1, b2]))
    np.testing.assert_allclose(np.concatenate([x1, x2]), full, rtol=1e-12)


def test_eigen_spectrum_ordering():
    spec = eigen_spectrum(np.diag([1.0, -2.0, 3j]))
    np.testing.assert_allclose(spec.values, [1.0, 3j, -2.0])


def test_dirichlet_laplacian_spectrum():
    n = 50
    h = 1.0 / n
    lap = (np.diag(-2 * np.ones(n - 1)) + np.diag(np.ones(n - 2), 1) + np.diag(np.ones(n - 2), -1)) / h**2
    top = eigenvalues(lap)[:3]
    exact = -(np.arange(1, 4) * np.pi) ** 2
    np.testing.assert_allclose(top, exact, rtol=1e-2)


def test_eigen_spectrum_rejects_non_square():
    with pytest.raises(NoConvergence):
        eigen_spectrum(np.ones((2, 3)))


def test_weighted_min_singular_examples(rng):
    m = GramMatrix(spd(rng, 4))
    assert weighted_min_singular(np.eye(4), m) == pytest.approx(1.0)
    assert weighted_min_singular(np.diag([2.0, 0.5]), GramMatrix.identity(2)) == pytest.approx(0.5)


def test_weighted_min_singular_svd_oracle(rng):
    a = rng.standard_normal((6, 6))
    mm = spd(rng, 6)
    f = sla.cholesky(mm)
    oracle = np.linalg.svd(f @ a @ np.linalg.inv(f), compute_uv=False)[-1]
    assert weighted_min_singular(a, GramMatrix(mm)) == pytest.approx(oracle, rel=1e-9)


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_min_singular_times_resolvent_norm_is_one(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    mm = spd(rng, n)
    gram = GramMatrix(mm)
    lam = 0.3 + 2.0j
    shifted = lam * np.eye(n) - a
    f = gram.factor
    inv_norm = np.linalg.norm(f @ np.linalg.inv(shifted) @ np.linalg.inv(f), 2)
    assert weighted_min_singular(shifted, gram) * inv_norm == pytest.approx(1.0, rel=1e-8)


def test_gram_factor_and_norms(rng):
    mm = spd(rng, 5)
    g = GramMatrix(mm)
    np.testing.assert_allclose(g.factor.conj().T @ g.factor, mm, atol=1e-12)
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert g.norm_sq(x) == pytest.approx(np.real(x.conj() @ mm @ x))
    np.testing.assert_allclose(g.from_unit(g.to_unit(x)), x)
    with pytest.raises(ValueError):
        GramMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        GramMatrix(-np.eye(2))


def test_real_matmul_matches_plain_product(rng):
    a = rng.standard_normal((4, 3))
    x = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    np.testing.assert_allclose(real_matmul(a, x), a @ x)
    np.testing.assert_allclose(real_matmul(a, x.real), a @ x.real)


def test_midpoint_trivial_and_scalar():
    x = np.array([1.0, 2.0])
    np.testing.assert_allclose(implicit_midpoint_step(np.zeros((2, 2)), None, x, None, 0.1), x)
    step = implicit_midpoint_step(np.array([[-1.0]]), None, np.array([1.0]), None, 0.1)[0]
    # local error of the Cayley transform is dt^3/12
    assert abs(step - np.exp(-0.1)) <= 0.1**3 / 12 * 1.01


@given(st.integers(1, 12), st.floats(1e-3, 10.0), st.integers(0, 2**32 - 1))
def test_midpoint_preserves_norm_of_skew_generator(n, dt, seed):
    rng = np.random.default_rng(seed)
    mm = spd(rng, n)
    s = rng.standard_normal((n, n))
    # A = M^{-1} S with S skew is skew-adjoint in the M inner product
    a = np.linalg.solve(mm, s - s.T)
    g = GramMatrix(mm)
    x = rng.standard_normal(n)
    nxt = implicit_midpoint_step(a, None, x, None, dt)
    assert np.sqrt(g.norm_sq(nxt)) == pytest.approx(np.sqrt(g.norm_sq(x)), rel=1e-10)
