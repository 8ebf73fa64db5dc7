"""Dense linear-algebra kernels used throughout the package.

All operator matrices are plain numpy arrays (real or complex).  The energy
inner product of a state space is carried by :class:`GramMatrix`, which caches
its upper Cholesky factor ``F`` with ``M = F^H F`` so that ``||x||_M = ||F x||``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, SingularMatrix

SOLVE_TOL = 1e-10
EIG_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Hermitian positive definite matrix defining ``<x, y>_M = y^H M x``."""

    matrix: np.ndarray
    _factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"Gram matrix must be square, got shape {m.shape}")
        scale = max(np.abs(m).max(initial=0.0), 1e-300)
        if np.abs(m - m.conj().T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("Gram matrix is not Hermitian to 1e-12 relative")
        try:
            factor = sla.cholesky(m, lower=False) if m.size else m.copy()
        except np.linalg.LinAlgError as exc:
            raise ValueError("Gram matrix is not positive definite") from exc
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_factor", factor)

    @classmethod
    def identity(cls, n: int) -> "GramMatrix":
        return cls(np.eye(n))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def factor(self) -> np.ndarray:
        """Upper triangular ``F`` with ``M = F^H F``."""
        return self._factor

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        """Map coordinates ``x`` to ``F x`` where the M-norm becomes Euclidean."""
        return real_matmul(self._factor, x)

    def from_unit(self, z: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_unit`."""
        return sla.solve_triangular(self._factor, z, lower=False)

    def congruence(self, a: np.ndarray) -> np.ndarray:
        """Return ``F a F^{-1}``, the matrix of ``a`` in M-orthonormal coordinates."""
        fa = self._factor @ a
        # fa F^{-1} = (F^{-T} fa^T)^T
        return sla.solve_triangular(self._factor, fa.T, lower=False, trans="T").T

    def inner(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Column-wise ``<x, y>_M``."""
        return np.sum(np.conj(y) * (self.matrix @ x), axis=0)

    def norm_sq(self, x: np.ndarray) -> np.ndarray:
        """Column-wise ``||x||_M^2`` (a scalar for a vector argument)."""
        z = real_matmul(self._factor, x)
        return np.sum(np.abs(z) ** 2, axis=0)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Return ``M^{-1} b`` via the cached factor."""
        return sla.cho_solve((self._factor, False), b)


def real_matmul(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``a @ x`` that keeps BLAS speed when a real ``a`` meets a complex ``x``."""
    if np.isrealobj(a) and np.iscomplexobj(x):
        return a @ np.ascontiguousarray(x.real) + 1j * (a @ np.ascontiguousarray(x.imag))
    return a @ np.ascontiguousarray(x)


def _relative_residual(a: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    bn = np.linalg.norm(b)
    r = np.linalg.norm(a @ x - b)
    if bn == 0.0:
        return float(r)
    return float(r / bn)


def _lu(a: np.ndarray):
    if a.shape[0] != a.shape[1]:
        raise SingularMatrix(f"matrix must be square, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise SingularMatrix("matrix has non-finite entries")
    try:
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularMatrix
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(a, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrix(str(exc)) from exc
    d = np.abs(np.diag(lu))
    if d.size and (d.min() == 0.0 or d.min() < np.finfo(float).eps * d.max() * 1e-3):
        raise SingularMatrix("pivot growth exceeds threshold")
    return lu, piv


def solve_linear(a: np.ndarray, b: np.ndarray, tol: float = SOLVE_TOL, backward: bool = False) -> np.ndarray:
    """Solve ``a x = b`` by LU and enforce ``||a x - b|| <= tol ||b||``.

    With ``backward=True`` the normwise backward error
    ``||a x - b|| / (||a|| ||x|| + ||b||)`` is checked instead, which is the
    attainable target for badly scaled operators such as stiff FEM generators.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    lu, piv = _lu(a)
    x = sla.lu_solve((lu, piv), b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("solve produced non-finite values")
    if backward:
        res = np.linalg.norm(a @ x - b)
        err = res / max(np.linalg.norm(a) * np.linalg.norm(x) + np.linalg.norm(b), np.finfo(float).tiny)
    else:
        err = _relative_residual(a, x, b)
    if err > tol:
        raise SingularMatrix("solve residual exceeds tolerance")
    return x


def solve_bordered(a11, a12, a21, a22, b1, b2, tol: float = SOLVE_TOL):
    """Solve the block system ``[[a11, a12], [a21, a22]] [x1; x2] = [b1; b2]``.

    The blocks are assembled into one dense matrix; both block residuals are
    checked relative to the full right-hand side.
    """
    a11 = np.atleast_2d(a11)
    n1 = a11.shape[0]
    a22 = np.asarray(a22).reshape(-1, np.asarray(a22).shape[-1] if np.asarray(a22).size else 0)
    n2 = a22.shape[0]
    a12 = np.asarray(a12).reshape(n1, n2)
    a21 = np.asarray(a21).reshape(n2, n1)
    big = np.block([[a11, a12], [a21, a22]]) if n2 else a11
    b1 = np.asarray(b1)
    b2 = np.asarray(b2)
    vec = b1.ndim == 1
    rhs = np.concatenate([b1.reshape(n1, -1), b2.reshape(n2, -1)], axis=0)
    x = solve_linear(big, rhs, tol=tol)
    x1, x2 = x[:n1], x[n1:]
    if vec:
        return x1[:, 0], x2[:, 0]
    return x1, x2


class Spectrum(NamedTuple):
    """Eigenvalues sorted by real part descending, with matching eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray


def sort_by_real_part(values: np.ndarray) -> np.ndarray:
    """Index permutation ordering eigenvalues by Re descending, then Im descending."""
    return np.lexsort((-values.imag, -values.real))


def eigen_spectrum(a: np.ndarray, tol: float = EIG_TOL) -> Spectrum:
    """Eigendecomposition with a residual check ``||Av - lv|| <= tol ||A|| ||v||``."""
    a = np.asarray(a)
    if a.shape[0] != a.shape[1]:
        raise NoConvergence(f"matrix must be square, got {a.shape}")
    if a.size == 0:
        return Spectrum(np.zeros(0, complex), np.zeros((0, 0), complex))
    try:
        w, v = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    order = sort_by_real_part(w)
    w, v = w[order], v[:, order]
    anorm = np.linalg.norm(a, 2) if a.shape[0] <= 400 else np.linalg.norm(a, "fro")
    res = np.linalg.norm(a @ v - v * w, axis=0)
    if np.any(res > tol * max(anorm, np.finfo(float).tiny) * np.linalg.norm(v, axis=0)):
        raise NoConvergence("eigenpair residual exceeds tolerance")
    return Spectrum(w, v)


def eigenvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues only, sorted like :func:`eigen_spectrum`."""
    a = np.asarray(a)
    if a.size == 0:
        return np.zeros(0, complex)
    try:
        w = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return w[sort_by_real_part(w)]


def min_singular(a: np.ndarray) -> float:
    """Smallest singular value of a square matrix."""
    if a.size == 0:
        return np.inf
    try:
        s = np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return float(s[-1])


def weighted_min_singular(a: np.ndarray, gram: GramMatrix) -> float:
    """Smallest singular value of ``a`` measured in the M-norm, ``sigma_min(F a F^{-1})``."""
    try:
        b = gram.congruence(np.asarray(a))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularMatrix(str(exc)) from exc
    return min_singular(b)


def implicit_midpoint_step(a, b, x, u_mid, dt: float) -> np.ndarray:
    """One step ``x+ = (I - dt/2 A)^{-1} ((I + dt/2 A) x + dt B u_mid)``."""
    a = np.atleast_2d(np.asarray(a))
    n = a.shape[0]
    x = np.asarray(x)
    rhs = x + 0.5 * dt * (a @ x)
    if b is not None and np.size(b):
        rhs = rhs + dt * (np.atleast_2d(b) @ np.asarray(u_mid))
    return solve_linear(np.eye(n) - 0.5 * dt * a, rhs)


def orthonormal_complement_split(b: np.ndarray, rtol: float = 1e-10):
    """Split C^n into ``ker b`` and its orthogonal complement.

    Returns ``(kernel, complement, rank)`` with orthonormal columns.  Rows of
    ``b`` are normalised before the rank decision, which uses a pivoted QR of
    ``b^H`` and is linear in ``n`` for a fixed number of rows.
    """
    b = np.atleast_2d(b)
    n = b.shape[1]
    if b.shape[0] == 0:
        return np.eye(n), np.zeros((n, 0)), 0
    norms = np.linalg.norm(b, axis=1)
    keep = norms > 0
    bs = b[keep] / norms[keep, None]
    q, r, _ = sla.qr(bs.conj().T, mode="full", pivoting=True)
    d = np.abs(np.diag(r))
    rank = int(np.sum(d > rtol * max(d.max(initial=0.0), 1.0))) if d.size else 0
    return q[:, rank:], q[:, :rank], rank


def null_space(x: np.ndarray, atol: float):
    """Orthonormal bases of the null space of ``x`` and of its complement in the domain."""
    k = x.shape[1]
    if x.shape[0] == 0 or k == 0:
        return np.eye(k), np.zeros((k, 0))
    _, s, vh = np.linalg.svd(x, full_matrices=True)
    r = int(np.sum(s > atol))
    v = vh.conj().T
    return v[:, r:], v[:, :r]
