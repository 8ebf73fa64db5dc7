"""Seeded random boundary nodes and gains for identity checks and property tests."""

from __future__ import annotations

import numpy as np

from .bcsnode import DiscreteBoundaryNode
from .numerics import GramMatrix, eigenvalues
from .synthesis import GainSet, stabilized_pair


def random_gram(rng: np.random.Generator, n: int) -> GramMatrix:
    x = rng.standard_normal((n, n))
    return GramMatrix(x @ x.T / n + np.eye(n))


def random_node(rng: np.random.Generator, n: int, n_b: int, m: int, p: int) -> DiscreteBoundaryNode:
    """Dense real node with Gaussian entries and a well-conditioned Gram matrix."""
    return DiscreteBoundaryNode(
        opA=rng.standard_normal((n, n)),
        opB=rng.standard_normal((n_b, n)),
        opC=rng.standard_normal((p, n)),
        opQ=rng.standard_normal((n_b, m)),
        opBi=rng.standard_normal((n, m)),
        gram=random_gram(rng, n),
    )


def random_dimensions(rng: np.random.Generator, max_dim: int = 12) -> tuple[int, int, int, int]:
    """``(n, n_b, m, p)`` with ``2 <= n <= max_dim`` and at most ``n // 3`` boundary rows."""
    n = int(rng.integers(2, max_dim + 1))
    n_b = int(rng.integers(0, min(2, n // 3) + 1))
    m = int(rng.integers(1, 4))
    p = int(rng.integers(1, 4))
    return n, n_b, m, p


def random_gains(rng: np.random.Generator, plant: DiscreteBoundaryNode, scale: float = 0.5) -> GainSet:
    return GainSet(
        scale * rng.standard_normal((plant.m, plant.n)),
        scale * rng.standard_normal((plant.n_b, plant.p)),
        scale * rng.standard_normal((plant.n, plant.p)),
    )


def shift_generator(node: DiscreteBoundaryNode, shift: float) -> DiscreteBoundaryNode:
    """Node with ``opA - shift I``; every restricted generator moves left by ``shift``."""
    return node.replace(opA=node.opA - shift * np.eye(node.n))


def random_stable_pair(rng: np.random.Generator, max_dim: int = 12, margin: float = 0.25):
    """Plant and gains whose state-feedback and injection generators are both stable.

    A random plant is shifted so that the larger of the two abscissae equals
    ``-margin``.  Returns ``(plant, gains)``.
    """
    n, n_b, m, p = random_dimensions(rng, max_dim)
    plant = random_node(rng, n, n_b, m, p)
    gains = random_gains(rng, plant)
    pair = stabilized_pair(plant, gains)
    worst = max(_abscissa(pair.genK.matA), _abscissa(pair.genL.matA))
    return shift_generator(plant, worst + margin), gains


def _abscissa(a: np.ndarray) -> float:
    ev = eigenvalues(a)
    return float(ev.real.max()) if ev.size else -np.inf


def right_of_spectrum(*mats: np.ndarray, offset: float = 1.0) -> float:
    """A real abscissa strictly right of every eigenvalue of the given matrices."""
    return max([0.0] + [_abscissa(a) for a in mats if a.size]) + offset
