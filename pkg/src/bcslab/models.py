"""The three case studies as discrete boundary nodes with their prescribed gains.

* ``build_wave2d``: sine-Galerkin wave equation on the unit square with
  distributed control on the centre box and observation on its complement.
* ``build_wave1d``: finite-difference Neumann wave equation on (0, 1) with
  boundary control at 0 and collocated-free observation at 1.
* ``build_scole``: Hermite-cubic Euler-Bernoulli beam with a rigid tip body.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla

from .bcsnode import DiscreteBoundaryNode, RestrictedGenerator, restricted_generator
from .errors import ConfigError
from .numerics import GramMatrix, eigen_spectrum
from .synthesis import GainSet

# ---------------------------------------------------------------- 2D wave


@dataclass(frozen=True)
class Wave2DConfig:
    modes_per_axis: int = 24
    input_rank: int | None = None
    control_box: tuple[float, float] = (0.25, 0.75)

    def __post_init__(self):
        if int(self.modes_per_axis) < 1:
            raise ConfigError("modes_per_axis must be at least 1")
        if tuple(self.control_box) != (0.25, 0.75):
            raise ConfigError("the control box is fixed to [1/4, 3/4]^2")
        rank = self.rank
        if not 1 <= rank <= self.modes_per_axis ** 2:
            raise ConfigError(f"input_rank must lie in [1, N^2], got {rank}")

    @property
    def rank(self) -> int:
        return self.modes_per_axis ** 2 if self.input_rank is None else int(self.input_rank)


def sine_product_integrals(n: int, a: float = 0.25, b: float = 0.75) -> np.ndarray:
    """``c[k, j] = int_a^b 2 sin(k pi s) sin(j pi s) ds`` for k, j = 1..n, in closed form."""
    k = np.arange(1, n + 1)[:, None].astype(float)
    j = np.arange(1, n + 1)[None, :].astype(float)
    diff = (k - j) * np.pi
    tot = (k + j) * np.pi
    same = k == j

    def antiderivative(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.where(same, s, np.sin(diff * s) / np.where(same, 1.0, diff))
        return first - np.sin(tot * s) / tot

    return antiderivative(b) - antiderivative(a)


def wave2d_frequencies(n: int) -> np.ndarray:
    """``pi^2 (k^2 + m^2)`` in the state ordering (k major)."""
    kk, mm = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
    return (np.pi ** 2 * (kk ** 2 + mm ** 2)).ravel().astype(float)


def build_wave2d(cfg: Wave2DConfig) -> tuple[DiscreteBoundaryNode, GainSet]:
    """Galerkin node in the basis ``2 sin(k pi x) sin(m pi y)``; state ``(w, w_t)`` coefficients."""
    n = cfg.modes_per_axis
    c1 = sine_product_integrals(n, *cfg.control_box)
    cc = np.kron(c1, c1)
    nn = n * n
    lam = wave2d_frequencies(n)
    zero = np.zeros((nn, nn))
    opA = np.block([[zero, np.eye(nn)], [-np.diag(lam), zero]])
    gram = sla.block_diag(np.diag(lam), np.eye(nn))
    order = np.argsort(lam, kind="stable")[: cfg.rank]
    opBi = np.vstack([np.zeros((nn, cfg.rank)), cc[:, order]])
    opC = np.hstack([zero, np.eye(nn) - cc])
    plant = DiscreteBoundaryNode(
        opA=opA,
        opB=np.zeros((0, 2 * nn)),
        opC=opC,
        opQ=np.zeros((0, cfg.rank)),
        opBi=opBi,
        gram=GramMatrix(gram),
        labels={"X": "H1_0 x L2 (sine span)", "U": "L2(control box)", "Y": "L2(complement)", "Ub": "{0}"},
    )
    gains = GainSet(
        opK=-opBi.T @ gram,
        opL=np.zeros((0, nn)),
        opLi=-np.linalg.solve(gram, opC.T),
    )
    return plant, gains


# ---------------------------------------------------------------- 1D wave


@dataclass(frozen=True)
class Wave1DConfig:
    grid_points: int = 200
    kappa0: float = 1.0
    kappa1: float = 1.0
    ell_b: float = 1.0
    ell_i: float = 0.05

    def __post_init__(self):
        if int(self.grid_points) < 4:
            raise ConfigError("grid_points must be at least 4")
        for name in ("kappa0", "kappa1", "ell_b", "ell_i"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class Wave1DGrid:
    """Finite-difference building blocks on the uniform grid with N cells."""

    N: int
    h: float
    weights: np.ndarray  # trapezoid weights, sum 1
    stiffness: np.ndarray  # P1 stiffness on N+1 nodes
    left_flux: np.ndarray  # one-sided second-order w'(0)
    right_flux: np.ndarray  # one-sided second-order w'(1)
    lift: np.ndarray  # (N+1) x N map z -> zero-mean nodal values

    @property
    def laplacian(self) -> np.ndarray:
        bs = np.zeros_like(self.stiffness)
        bs[0] = -self.left_flux
        bs[-1] = self.right_flux
        return (-self.stiffness + bs) / self.weights[:, None]


def wave1d_grid(N: int) -> Wave1DGrid:
    h = 1.0 / N
    nodes = N + 1
    weights = np.full(nodes, h)
    weights[0] = weights[-1] = h / 2
    stiff = np.zeros((nodes, nodes))
    for j in range(N):
        stiff[j:j + 2, j:j + 2] += np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
    s0 = np.zeros(nodes)
    s0[:3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
    sn = np.zeros(nodes)
    sn[-3:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    embed = np.vstack([np.zeros((1, N)), np.eye(N)])
    lift = embed - np.outer(np.ones(nodes), weights @ embed)
    return Wave1DGrid(N, h, weights, stiff, s0, sn, lift)


@dataclass(frozen=True, eq=False)
class Wave1DModel:
    """Plant, gains and the auxiliary operators used in the analysis of the 1D wave."""

    plant: DiscreteBoundaryNode
    gains: GainSet
    internal: DiscreteBoundaryNode
    external_outputs: np.ndarray  # (w_t(0), w_t(1), what_t(0)) on the extended state
    grid: Wave1DGrid

    def state_from_functions(self, w: Callable, wt: Callable) -> np.ndarray:
        """DOF vector ``(mean, z, v)`` sampling displacement ``w`` and velocity ``wt``."""
        return wave1d_state(self.grid, w, wt)


def wave1d_state(grid: Wave1DGrid, w: Callable, wt: Callable) -> np.ndarray:
    xs = np.linspace(0.0, 1.0, grid.N + 1)
    wv = np.asarray(w(xs), dtype=float)
    mean = grid.weights @ wv
    z = wv[1:] - wv[0]
    return np.concatenate([[mean], z, np.asarray(wt(xs), dtype=float)])


def wave1d_smooth_states(grid: Wave1DGrid, count: int, seed: int = 0, modes: int = 4, copies: int = 2) -> np.ndarray:
    """Columns of ``copies`` stacked DOF vectors sampling random low-order smooth profiles.

    Displacement and velocity are random combinations of ``1, x^2`` and
    ``cos(k pi x)``, ``k <= modes``, with coefficients drawn from ``seed``; the
    same seed gives the same functions on every grid.
    """
    rng = np.random.default_rng(seed)
    cols = []
    for _ in range(count):
        parts = []
        for _ in range(copies):
            cw, cv = rng.standard_normal((2, modes + 2))

            def profile(c):
                return lambda x: c[0] + c[1] * x**2 + sum(c[k + 1] * np.cos(k * np.pi * x) for k in range(1, modes + 1))

            parts.append(wave1d_state(grid, profile(cw), profile(cv)))
        cols.append(np.concatenate(parts))
    return np.column_stack(cols)


def build_wave1d(cfg: Wave1DConfig) -> tuple[DiscreteBoundaryNode, GainSet]:
    model = wave1d_model(cfg)
    return model.plant, model.gains


def wave1d_model(cfg: Wave1DConfig) -> Wave1DModel:
    """Finite-difference node on ``x = (mean of w, w - mean, w_t)``.

    The zero-mean displacement is stored through the differences
    ``z_j = w_j - w_0`` so that the state space has no constraint; the Gram
    matrix realizes ``|x1|^2 + ||x2'||^2 + ||x3||^2`` with the P1 stiffness and
    trapezoid mass.  Boundary fluxes use one-sided second-order stencils and
    the two boundary rows of the velocity equation carry the constraint force.
    """
    N = int(cfg.grid_points)
    g = wave1d_grid(N)
    nodes = N + 1
    n = 1 + N + nodes
    iz = slice(1, 1 + N)
    iv = slice(1 + N, n)
    v0, vN = 1 + N, n - 1
    T = g.lift
    c = g.weights

    A = np.zeros((n, n))
    A[0, iv] = c
    A[iz, iv] = np.hstack([-np.ones((N, 1)), np.eye(N)])
    A[iv, iz] = g.laplacian @ T

    B = np.zeros((2, n))
    B[0, iz] = -g.left_flux @ T
    B[1, iz] = g.right_flux @ T

    C = np.zeros((2, n))
    C[0, 0] = 1.0
    C[0, iz] = T[-1]
    C[1, vN] = 1.0

    R = np.zeros((n, 2))
    R[v0, 0] = 1.0
    R[vN, 1] = 1.0

    gram = sla.block_diag([[1.0]], T.T @ g.stiffness @ T, np.diag(c))
    gram = 0.5 * (gram + gram.T)
    plant = DiscreteBoundaryNode(
        opA=A, opB=B, opC=C, opQ=np.array([[1.0], [0.0]]), opBi=np.zeros((n, 1)),
        gram=GramMatrix(gram), opR=R,
        labels={"X": "C x V x L2", "U": "C", "Y": "C^2 (w(1), w_t(1))", "Ub": "C^2"},
    )

    k0, k1 = cfg.kappa0, cfg.kappa1
    K = np.zeros((1, n))
    K[0, 0] = -k0
    K[0, iz] = -k0 * T[0]
    K[0, v0] += -k1
    K[0, iv] += -k0 * k1 * c
    L = np.array([[0.0, 0.0], [0.0, -cfg.ell_b]])
    Li = np.zeros((n, 2))
    Li[iv, 0] = -cfg.ell_i
    gains = GainSet(K, L, Li)

    # internal node on (z, v): inputs (-w'(0), w'(1)), outputs (w_t(0), w_t(1))
    sub = slice(1, n)
    c0 = np.zeros((2, n - 1))
    c0[0, v0 - 1] = 1.0
    c0[1, vN - 1] = 1.0
    internal = DiscreteBoundaryNode(
        opA=A[sub, sub], opB=B[:, sub], opC=c0, opQ=np.eye(2), opBi=np.zeros((n - 1, 2)),
        gram=GramMatrix(gram[sub, sub]), opR=R[sub],
        labels={"X": "V x L2", "U": "C^2", "Y": "C^2", "Ub": "C^2"},
    )

    ext = np.zeros((3, 2 * n))
    ext[0, v0] = 1.0
    ext[1, vN] = 1.0
    ext[2, n + v0] = 1.0
    return Wave1DModel(plant, gains, internal, ext, g)


def wave1d_internal_transfer_exact(lam: complex) -> np.ndarray:
    """Closed-form transfer ``[[coth, csch], [csch, coth]]`` of the internal node."""
    ct = 1.0 / np.tanh(lam)
    cs = 1.0 / np.sinh(lam)
    return np.array([[ct, cs], [cs, ct]])


# ---------------------------------------------------------------- SCOLE


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class ScoleConfig:
    elements: int = 60
    rho_profile: Callable = field(default=_one, compare=False)
    EI_profile: Callable = field(default=_one, compare=False)
    tip_mass: float = 1.0
    tip_inertia: float = 1.0
    kappa: float = 1.0
    ell: float = 1.0

    def __post_init__(self):
        if int(self.elements) < 2:
            raise ConfigError("SCOLE needs at least 2 elements")
        for name in ("tip_mass", "tip_inertia", "kappa", "ell"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        xs = np.linspace(0.0, 1.0, 101)
        for name in ("rho_profile", "EI_profile"):
            vals = np.asarray(getattr(self, name)(xs), dtype=float)
            if vals.shape != xs.shape or not np.all(vals > 0):
                raise ConfigError(f"{name} must be strictly positive on [0, 1]")


@dataclass(frozen=True, eq=False)
class ScoleModel:
    plant: DiscreteBoundaryNode
    gains: GainSet
    n_w: int  # size of the displacement block


def build_scole(cfg: ScoleConfig) -> tuple[DiscreteBoundaryNode, GainSet]:
    model = scole_model(cfg)
    return model.plant, model.gains


def scole_model(cfg: ScoleConfig) -> ScoleModel:
    """Hermite-cubic FEM node with state ``(w, v, q)``; ``p = v(1)`` is the tip velocity DOF.

    The displacement rows of ``opA`` are the exact identity ``w' = v``; the
    velocity and tip-rotation rows come from the weak form
    ``<A x, y>_X + <x, A y>_X = B x C y + C x B y``.
    """
    N = int(cfg.elements)
    h = 1.0 / N
    gx, gw = np.polynomial.legendre.leggauss(4)
    s = (gx + 1) / 2
    w = gw / 2
    shape0 = np.stack([1 - 3 * s ** 2 + 2 * s ** 3, h * (s - 2 * s ** 2 + s ** 3), 3 * s ** 2 - 2 * s ** 3, h * (-s ** 2 + s ** 3)])
    shape2 = np.stack([(-6 + 12 * s) / h ** 2, (-4 + 6 * s) / h, (6 - 12 * s) / h ** 2, (-2 + 6 * s) / h])
    nd = 2 * (N + 1)
    K = np.zeros((nd, nd))
    Mr = np.zeros((nd, nd))
    for e in range(N):
        xq = (e + s) * h
        idx = slice(2 * e, 2 * e + 4)
        K[idx, idx] += (shape2 * (np.asarray(cfg.EI_profile(xq), float) * w * h)) @ shape2.T
        Mr[idx, idx] += (shape0 * (np.asarray(cfg.rho_profile(xq), float) * w * h)) @ shape0.T
    K = K[2:, 2:]
    Mr = Mr[2:, 2:]
    nw = 2 * N
    tip_w, tip_slope = nw - 2, nw - 1
    Mv = Mr.copy()
    Mv[tip_w, tip_w] += cfg.tip_mass
    n = 2 * nw + 1
    J = cfg.tip_inertia
    gram = sla.block_diag(K, Mv, [[J]])
    gram = 0.5 * (gram + gram.T)

    ei1 = float(np.asarray(cfg.EI_profile(np.array([1.0])), float)[0])
    C = np.zeros((1, n))
    C[0, nw - 4:nw] = ei1 * np.array([6 / h ** 2, 2 / h, -6 / h ** 2, 4 / h])
    B = np.zeros((1, n))
    B[0, nw + tip_slope] = 1.0
    B[0, n - 1] = -1.0

    G = np.zeros((n, n))
    G[:nw, nw:2 * nw] = K
    G[nw:2 * nw, :nw] = -K
    G += B.T @ C
    A = np.zeros((n, n))
    A[:nw, nw:2 * nw] = np.eye(nw)
    A[nw:2 * nw] = np.linalg.solve(Mv, G[nw:2 * nw])
    A[n - 1] = G[n - 1] / J

    Bi = np.zeros((n, 1))
    Bi[n - 1, 0] = 1.0 / J
    plant = DiscreteBoundaryNode(
        opA=A, opB=B, opC=C, opQ=np.zeros((1, 1)), opBi=Bi, gram=GramMatrix(gram),
        labels={"X": "H2_l x L2 x C^2", "U": "C (torque)", "Y": "C (bending moment)", "Ub": "C"},
    )
    Kg = np.zeros((1, n))
    Kg[0, n - 1] = -cfg.kappa
    gains = GainSet(Kg, np.array([[-cfg.ell / J]]), np.zeros((n, 1)))
    return ScoleModel(plant, gains, nw)


def scole_free_spectrum(plant: DiscreteBoundaryNode, gen: RestrictedGenerator | None = None):
    """Eigenvalues ``i mu_k`` and M-normalized eigenvectors of the free generator."""
    gen = restricted_generator(plant) if gen is None else gen
    spec = eigen_spectrum(gen.matA)
    # columns of the kernel basis are M-orthonormal, so Euclidean normalization suffices
    vecs = spec.vectors / np.linalg.norm(spec.vectors, axis=0)
    return spec.values, gen.kernelBasis @ vecs


def scole_series_transfer(plant: DiscreteBoundaryNode, lam: complex, modes=None, max_frequency: float | None = None) -> complex:
    """Truncated eigenfunction series ``sum |gamma_k|^2 (1/(lam - i mu_k) - i/mu_k)``."""
    values, phis = scole_free_spectrum(plant) if modes is None else modes
    mu = values.imag
    keep = np.abs(mu) > 0
    if max_frequency is not None:
        keep &= np.abs(mu) <= max_frequency
    gam = (plant.opC @ phis)[0, keep]
    mu = mu[keep]
    return complex(np.sum(np.abs(gam) ** 2 * (1.0 / (lam - 1j * mu) - 1j / mu)))


def scole_boundary_node(plant: DiscreteBoundaryNode) -> DiscreteBoundaryNode:
    """The node ``(B, A, C, I, 0)`` whose transfer function is the collocated ``P_0``."""
    return plant.replace(opQ=np.eye(plant.n_b), opBi=np.zeros((plant.n, plant.n_b)))


class AffineFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    count: int


def frequency_root_fit(values: np.ndarray, max_frequency: float | None = None) -> AffineFit:
    """Affine least-squares fit of ``sqrt(mu_k)`` against the index ``k``.

    ``mu_k`` are the distinct positive eigenfrequencies in increasing order,
    kept up to ``max_frequency`` (a quarter of the largest by default).
    """
    mu = np.sort(values.imag[values.imag > 0])
    if max_frequency is None:
        max_frequency = 0.25 * mu.max(initial=0.0)
    mu = mu[mu <= max_frequency]
    if mu.size < 3:
        raise ConfigError("too few resolved eigenfrequencies for an affine fit")
    k = np.arange(1, mu.size + 1, dtype=float)
    y = np.sqrt(mu)
    slope, intercept = np.polyfit(k, y, 1)
    resid = y - (slope * k + intercept)
    r2 = 1.0 - np.sum(resid ** 2) / np.sum((y - y.mean()) ** 2)
    return AffineFit(float(slope), float(intercept), float(r2), int(mu.size))
