"""Finite-dimensional boundary nodes ``(B, A, C, Q, B_i)``.

A node acts on a DOF vector ``x`` in C^n with energy inner product given by
its Gram matrix.  The boundary dynamics are the descriptor system

    x' = A x + R mu + B_i u,      B x = Q u,

where the columns of ``R`` (the residual space) carry the constraint force
``mu`` that keeps the trajectory on the boundary manifold.  By default ``R`` is
``M^{-1} B^H``, which makes the homogeneous dynamics the M-orthogonal
compression of ``A`` onto ``ker B``.  Discretizations that replace boundary
rows of the PDE operator (finite differences) supply their own ``R``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.linalg as sla

from .errors import (
    ConfigError,
    NoConvergence,
    RankDeficientBoundary,
    SingularAtLambda,
    SingularMatrix,
)
from .numerics import GramMatrix, null_space, orthonormal_complement_split, solve_linear

RANK_RTOL = 1e-10
INVARIANCE_TOL = 1e-9
RESIDUAL_TOL = 1e-7

_DEFAULT_LABELS = {"Ub": "U_b", "U": "U", "X": "X", "Y": "Y"}


def _as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind not in "fc":
        a = a.astype(float)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(rows or 0, cols or 0)
    if a.ndim != 2:
        a = np.atleast_2d(a)
    if a.size == 0:
        a = a.reshape(rows if rows is not None else a.shape[0], cols if cols is not None else a.shape[1])
    return a


@dataclass(frozen=True, eq=False)
class DiscreteBoundaryNode:
    """Matrices of a boundary node together with the state-space Gram matrix.

    ``opR`` is optional; ``None`` selects the M-orthogonal residual space.
    """

    opA: np.ndarray
    opB: np.ndarray
    opC: np.ndarray
    opQ: np.ndarray
    opBi: np.ndarray
    gram: np.ndarray
    labels: dict = field(default_factory=lambda: dict(_DEFAULT_LABELS))
    opR: np.ndarray | None = None

    def __post_init__(self):
        a = _as_matrix(self.opA)
        n = a.shape[0]
        b = _as_matrix(self.opB, cols=n)
        c = _as_matrix(self.opC, cols=n)
        q = _as_matrix(self.opQ, rows=b.shape[0])
        bi = _as_matrix(self.opBi, rows=n)
        g = self.gram.matrix if isinstance(self.gram, GramMatrix) else _as_matrix(self.gram)
        object.__setattr__(self, "opA", a)
        object.__setattr__(self, "opB", b)
        object.__setattr__(self, "opC", c)
        object.__setattr__(self, "opQ", q)
        object.__setattr__(self, "opBi", bi)
        object.__setattr__(self, "gram", g)
        if isinstance(self.gram, GramMatrix):
            self.__dict__["metric"] = self.gram
        if self.opR is not None:
            object.__setattr__(self, "opR", _as_matrix(self.opR, rows=n))
        object.__setattr__(self, "labels", {**_DEFAULT_LABELS, **dict(self.labels or {})})

    @property
    def n(self) -> int:
        return self.opA.shape[0]

    @property
    def n_b(self) -> int:
        return self.opB.shape[0]

    @property
    def m(self) -> int:
        return self.opQ.shape[1]

    @property
    def p(self) -> int:
        return self.opC.shape[0]

    @cached_property
    def metric(self) -> GramMatrix:
        """The Gram matrix as a factored :class:`GramMatrix` (raises ValueError if invalid)."""
        return GramMatrix(self.gram)

    def replace(self, **changes) -> "DiscreteBoundaryNode":
        fields = dict(
            opA=self.opA, opB=self.opB, opC=self.opC, opQ=self.opQ, opBi=self.opBi,
            gram=self.metric if "gram" not in changes else changes.pop("gram"),
            labels=self.labels, opR=self.opR,
        )
        fields.update(changes)
        return DiscreteBoundaryNode(**fields)


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    boundary_rank: int
    boundary_rows: int
    gram_ok: bool
    dimensions_ok: bool
    failures: tuple[str, ...] = ()


def _dimension_failures(node: DiscreteBoundaryNode) -> list[str]:
    n, nb = node.n, node.n_b
    out = []
    checks = [
        ("opA", node.opA.shape, (n, n)),
        ("opB", node.opB.shape, (nb, n)),
        ("opC", (node.opC.shape[1],), (n,)),
        ("opQ", (node.opQ.shape[0],), (nb,)),
        ("opBi", node.opBi.shape, (n, node.m)),
        ("gram", node.gram.shape, (n, n)),
    ]
    if node.opR is not None:
        checks.append(("opR", node.opR.shape, (n, nb)))
    for name, got, want in checks:
        if tuple(got) != tuple(want):
            out.append(f"{name} has shape {tuple(got)}, expected {tuple(want)}")
    for name in ("opA", "opB", "opC", "opQ", "opBi", "gram"):
        if not np.all(np.isfinite(getattr(node, name))):
            out.append(f"{name} has non-finite entries")
    return out


def row_rank(b: np.ndarray) -> int:
    if b.shape[0] == 0:
        return 0
    s = np.linalg.svd(b, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * max(s[0], 1e-300))) if s[0] > 0 else 0


def validate(node: DiscreteBoundaryNode) -> ValidationReport:
    """Check boundary row rank, Gram positivity and dimension consistency."""
    failures = _dimension_failures(node)
    dims_ok = not failures
    gram_ok = True
    try:
        node.metric
    except ValueError as exc:
        gram_ok = False
        failures.append(str(exc))
    rank = row_rank(node.opB) if node.opB.shape[1] == node.n else 0
    if rank < node.n_b:
        failures.append(f"boundary operator has rank {rank} < {node.n_b} rows")
    return ValidationReport(
        valid=not failures,
        boundary_rank=rank,
        boundary_rows=node.n_b,
        gram_ok=gram_ok,
        dimensions_ok=dims_ok,
        failures=tuple(failures),
    )


def _require_full_rank(b: np.ndarray):
    if row_rank(b) < b.shape[0]:
        raise RankDeficientBoundary(f"boundary operator of {b.shape[0]} rows is rank deficient")


def right_inverse(node: DiscreteBoundaryNode) -> np.ndarray:
    """M-minimal-norm right inverse ``M^{-1} B^H (B M^{-1} B^H)^{-1}``."""
    return _right_inverse(node.opB, node.metric)


def _right_inverse(b: np.ndarray, gram: GramMatrix) -> np.ndarray:
    _require_full_rank(b)
    if b.shape[0] == 0:
        return np.zeros((b.shape[1], 0))
    mb = gram.solve(b.conj().T)
    try:
        return mb @ solve_linear(b @ mb, np.eye(b.shape[0]))
    except SingularMatrix as exc:
        raise RankDeficientBoundary(str(exc)) from exc


def residual_space(node: DiscreteBoundaryNode) -> np.ndarray:
    """Columns spanning the constraint-force directions (``M^{-1} B^H`` unless given)."""
    if node.opR is not None:
        return node.opR
    if node.n_b == 0:
        return np.zeros((node.n, 0))
    return node.metric.solve(node.opB.conj().T)


@dataclass(frozen=True, eq=False)
class RestrictedGenerator:
    """Compression ``A`` of ``opA`` to the invariant part of ``ker opB``.

    ``kernelBasis`` has M-orthonormal columns, so ``matA`` is the generator in
    Euclidean coordinates ``xi`` with ``x = kernelBasis @ xi``.  ``projector``
    maps DOF vectors to ``xi`` along the residual space (``projector @
    kernelBasis = I``) and ``boundary_map`` routes boundary data: for
    ``x' = opA x + R mu + f`` and ``opB x = g``, ``xi' = matA xi + projector f -
    boundary_map g``.  ``multiplier`` gives ``mu = multiplier @ xi`` for g = 0.
    """

    kernelBasis: np.ndarray
    matA: np.ndarray
    gram: GramMatrix
    projector: np.ndarray
    boundary_map: np.ndarray
    multiplier: np.ndarray
    index: int = 1

    @property
    def dim(self) -> int:
        return self.matA.shape[0]

    def resolvent(self, lam: complex, rhs: np.ndarray | None = None) -> np.ndarray:
        """``(lam - A)^{-1}`` in DOF coordinates, i.e. ``V (lam - matA)^{-1} Pi`` applied to rhs."""
        r = self.dim
        pr = self.projector if rhs is None else self.projector @ rhs
        try:
            y = solve_linear(lam * np.eye(r) - self.matA, pr)
        except SingularMatrix as exc:
            raise SingularAtLambda(lam) from exc
        return self.kernelBasis @ y


def _orth(x: np.ndarray) -> np.ndarray:
    if x.shape[1] == 0:
        return x
    return sla.orth(x)


def _invariant_kernel(a: np.ndarray, b: np.ndarray, r: np.ndarray, tol: float = INVARIANCE_TOL):
    """Largest subspace ``V`` of ``ker b`` with ``a V`` inside ``V + range r``.

    Rows of ``a`` are equilibrated first; the invariance test is unchanged by a
    left diagonal scaling and the rank decisions become scale free.
    """
    n = a.shape[0]
    d = np.linalg.norm(a, axis=1)
    # rows that are numerically zero must not be amplified
    d = np.maximum(d, 1e-6 * max(d.max(initial=0.0), 1.0))
    a_s = a / d[:, None]
    r_s = r / d[:, None]
    if b.shape[0]:
        v, _, _ = orthonormal_complement_split(b)
    else:
        v = np.eye(n, dtype=a.dtype)
    for it in range(n + 1):
        basis = _orth(np.hstack([v / d[:, None], r_s]))
        x = a_s @ v
        x = x - basis @ (basis.conj().T @ x)
        keep, _ = null_space(x, tol)
        if keep.shape[1] == v.shape[1]:
            return v, it
        if keep.shape[1] == 0:
            return v[:, :0], it
        v = _orth(v @ keep)
    raise NoConvergence("invariant-subspace recursion did not terminate")


def restrict(opA: np.ndarray, opB: np.ndarray, gram: GramMatrix, opR: np.ndarray) -> RestrictedGenerator:
    """Restricted generator of the descriptor system ``x' = opA x + opR mu``, ``opB x = 0``."""
    n = opA.shape[0]
    _require_full_rank(opB)
    nb = opB.shape[0]
    f = gram.factor
    a_hat = gram.congruence(opA)
    b_hat = sla.solve_triangular(f, opB.conj().T, lower=False, trans="C").conj().T if nb else opB
    r_hat = f @ opR
    if nb == 0:
        eye = np.eye(n)
        return RestrictedGenerator(
            kernelBasis=gram.from_unit(eye), matA=a_hat, gram=GramMatrix.identity(n),
            projector=f.copy(), boundary_map=np.zeros((n, 0)), multiplier=np.zeros((0, n)),
            index=0,
        )

    br = b_hat @ r_hat
    s_br = np.linalg.svd(br, compute_uv=False)
    scale = np.linalg.norm(b_hat, 2) * np.linalg.norm(r_hat, 2)
    index_one = s_br[-1] > 1e-8 * max(scale, 1e-300)
    if index_one:
        qb, _, _ = orthonormal_complement_split(b_hat)
        ub, _, _ = orthonormal_complement_split(r_hat.conj().T)
        index = 1
    else:
        qb, _ = _invariant_kernel(a_hat, b_hat, r_hat)
        ub, _ = _invariant_kernel(a_hat.conj().T, r_hat.conj().T, b_hat.conj().T)
        index = 2
    k = qb.shape[1]
    if ub.shape[1] != k:
        raise NoConvergence(f"left and right invariant subspaces differ in dimension ({ub.shape[1]} vs {k})")

    aq = a_hat @ qb
    coef = np.linalg.lstsq(np.hstack([qb, -r_hat]), aq, rcond=None)[0]
    # a_hat Q + r_hat F = Q T, so the constraint force is mu = F xi
    mat_a, mult = coef[:k], coef[k:]
    scale_aq = max(np.linalg.norm(aq), 1e-300)
    res = np.linalg.norm(qb @ mat_a - r_hat @ mult - aq) / scale_aq
    if res > RESIDUAL_TOL:
        raise NoConvergence(f"compressed generator residual {res:.2e} exceeds tolerance")

    uq = ub.conj().T @ qb
    try:
        pi_hat = solve_linear(uq, ub.conj().T)
    except SingularMatrix as exc:
        raise NoConvergence("projector onto the kernel is singular") from exc
    au = a_hat.conj().T @ ub
    coef_l = np.linalg.lstsq(np.hstack([ub, -b_hat.conj().T]), au, rcond=None)[0]
    g_hat = coef_l[k:]
    res_l = np.linalg.norm(ub @ coef_l[:k] - b_hat.conj().T @ g_hat - au) / max(np.linalg.norm(au), 1e-300)
    if res_l > RESIDUAL_TOL:
        raise NoConvergence(f"left invariant subspace residual {res_l:.2e} exceeds tolerance")
    bmap = solve_linear(uq, g_hat.conj().T)

    return RestrictedGenerator(
        kernelBasis=gram.from_unit(qb),
        matA=mat_a,
        gram=GramMatrix.identity(k),
        projector=pi_hat @ f,
        boundary_map=bmap,
        multiplier=mult,
        index=index,
    )


def restricted_generator(node: DiscreteBoundaryNode) -> RestrictedGenerator:
    """Generator of the homogeneous boundary dynamics, in M-orthonormal kernel coordinates."""
    return restrict(node.opA, node.opB, node.metric, residual_space(node))


@dataclass(frozen=True, eq=False)
class TransferSample:
    """State and output transfer values at one complex frequency."""

    lam: complex
    Hval: np.ndarray
    Pval: np.ndarray


def _bordered_solve(node: DiscreteBoundaryNode, lam: complex, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    n, nb = node.n, node.n_b
    r = residual_space(node)
    big = np.zeros((n + nb, n + nb), dtype=complex)
    big[:n, :n] = lam * np.eye(n) - node.opA
    big[:n, n:] = -r
    big[n:, :n] = node.opB
    f = np.asarray(f, dtype=complex).reshape(n, -1)
    g = np.asarray(g, dtype=complex).reshape(nb, f.shape[1])
    rhs = np.vstack([f, g])
    try:
        sol = solve_linear(big, rhs, tol=1e-12, backward=True)
    except SingularMatrix as exc:
        raise SingularAtLambda(lam) from exc
    return sol[:n]


def transfer(node: DiscreteBoundaryNode, lam: complex) -> TransferSample:
    """Solve ``(lam - A) x = B_i u + R mu``, ``B x = Q u`` for every unit input."""
    h = _bordered_solve(node, lam, node.opBi, node.opQ)
    return TransferSample(lam=complex(lam), Hval=h, Pval=node.opC @ h)


def boundary_transfer(node: DiscreteBoundaryNode, lam: complex) -> np.ndarray:
    """``H_b(lam)``: the response to boundary data alone (n x n_b)."""
    return _bordered_solve(node, lam, np.zeros((node.n, node.n_b)), np.eye(node.n_b))


def generalized_resolvent(node: DiscreteBoundaryNode, lam: complex, rhs: np.ndarray | None = None) -> np.ndarray:
    """``(lam - A)^{-1}`` applied to rhs (identity by default) via the bordered system."""
    f = np.eye(node.n) if rhs is None else rhs
    cols = 1 if np.ndim(f) == 1 else f.shape[1]
    x = _bordered_solve(node, lam, f, np.zeros((node.n_b, cols)))
    return x[:, 0] if np.ndim(f) == 1 else x


def adjoint_input(node: DiscreteBoundaryNode) -> np.ndarray:
    """``B_i^H M``: the M-adjoint of the interior input map (m x n)."""
    return node.opBi.conj().T @ node.gram


def adjoint_output(node: DiscreteBoundaryNode) -> np.ndarray:
    """``M^{-1} C^H``: the M-adjoint of the output map (n x p)."""
    return node.metric.solve(node.opC.conj().T)


# ---------------------------------------------------------------- serialization


def matrix_to_block(a: np.ndarray) -> dict[str, Any]:
    a = np.asarray(a)
    rows = []
    for row in a:
        rows.append(" ".join(f"{float(np.real(z))!r},{float(np.imag(z))!r}" for z in row))
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "data": rows}


def block_to_matrix(block: dict[str, Any]) -> np.ndarray:
    try:
        rows, cols = int(block["rows"]), int(block["cols"])
        data = block["data"]
        if len(data) != rows:
            raise ConfigError(f"block declares {rows} rows but has {len(data)}")
        out = np.zeros((rows, cols), dtype=complex)
        for i, line in enumerate(data):
            entries = line.split()
            if len(entries) != cols:
                raise ConfigError(f"row {i} has {len(entries)} entries, expected {cols}")
            for j, pair in enumerate(entries):
                re, im = pair.split(",")
                out[i, j] = complex(float(re), float(im))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"malformed matrix block: {exc}") from exc
    if np.all(out.imag == 0):
        return out.real.copy()
    return out


NODE_FIELDS = ("opA", "opB", "opC", "opQ", "opBi", "gram")


def node_to_dict(node: DiscreteBoundaryNode) -> dict[str, Any]:
    doc: dict[str, Any] = {name: matrix_to_block(getattr(node, name)) for name in NODE_FIELDS}
    if node.opR is not None:
        doc["opR"] = matrix_to_block(node.opR)
    doc["labels"] = dict(node.labels)
    return doc


def node_from_dict(doc: dict[str, Any]) -> DiscreteBoundaryNode:
    if not isinstance(doc, dict):
        raise ConfigError("node document must be an object")
    missing = [k for k in NODE_FIELDS if k not in doc]
    if missing:
        raise ConfigError(f"node document lacks fields {missing}")
    mats = {k: block_to_matrix(doc[k]) for k in NODE_FIELDS}
    opR = block_to_matrix(doc["opR"]) if "opR" in doc else None
    return DiscreteBoundaryNode(**mats, labels=doc.get("labels", {}), opR=opR)


def dumps_node(node: DiscreteBoundaryNode) -> str:
    return json.dumps(node_to_dict(node), indent=1)


def loads_node(text: str) -> DiscreteBoundaryNode:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"node file is not valid JSON: {exc}") from exc
    return node_from_dict(doc)


def save_node(node: DiscreteBoundaryNode, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_node(node))


def load_node(path) -> DiscreteBoundaryNode:
    try:
        with open(path) as fh:
            return loads_node(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read node file {path}: {exc}") from exc


# ---------------------------------------------------------------- realization


@dataclass(frozen=True, eq=False)
class Realization:
    """Input-state map of a node as an ODE with polynomial feedthrough.

    ``xi' = matA xi + B u`` and ``x = basis xi + sum_k feedthrough[k] u^(k)``,
    where ``u^(k)`` is the k-th time derivative of the input.
    """

    matA: np.ndarray
    inputB: np.ndarray
    basis: np.ndarray
    feedthrough: tuple[np.ndarray, ...]
    projector: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matA.shape[0]

    @property
    def order(self) -> int:
        """Highest input derivative that reaches the state."""
        nz = [k for k, e in enumerate(self.feedthrough) if np.any(e != 0)]
        return max(nz) if nz else 0


FEEDTHROUGH_TOL = 1e-7


def _input_state_response(node: DiscreteBoundaryNode, gen: RestrictedGenerator, lam: complex, b_xi: np.ndarray):
    x = transfer(node, lam).Hval
    r = gen.dim
    xi = solve_linear(lam * np.eye(r) - gen.matA, b_xi)
    return x - gen.kernelBasis @ xi, np.linalg.norm(x)


def realize(node: DiscreteBoundaryNode, gen: RestrictedGenerator | None = None) -> Realization:
    """State-space realization of the node's input-to-state map.

    The ODE part comes from the restricted generator; the remainder
    ``H(lam) - V (lam - A)^{-1} B`` is a polynomial in ``lam`` of degree at
    most one for the nodes handled here (fitted at two frequencies, verified at
    a third).
    """
    gen = restricted_generator(node) if gen is None else gen
    b_xi = gen.projector @ node.opBi - gen.boundary_map @ node.opQ
    n, m = node.n, node.m
    if m == 0:
        return Realization(gen.matA, b_xi, gen.kernelBasis, (np.zeros((n, 0)),), gen.projector)
    ev = np.linalg.eigvals(gen.matA) if gen.dim else np.zeros(1)
    sigma = max(float(np.max(ev.real)), 0.0) + 1.0
    spread = max(1.0, float(np.max(np.abs(ev.imag))) if ev.size else 1.0)
    lams = (sigma + 0.37j, sigma + 0.5 * spread + 1.1j, sigma + 2.0 - 0.71j * spread)
    resp = [_input_state_response(node, gen, lam, b_xi) for lam in lams]
    d = [r[0] for r in resp]
    e1 = (d[1] - d[0]) / (lams[1] - lams[0])
    e0 = d[0] - lams[0] * e1
    scale = max(max(r[1] for r in resp), np.linalg.norm(d[0]), np.linalg.norm(d[1]), 1e-300)
    err = np.linalg.norm(e0 + lams[2] * e1 - d[2]) / scale
    if err > FEEDTHROUGH_TOL:
        raise NoConvergence(f"input-to-state map is not affine in lambda (defect {err:.1e}); index > 2")
    if np.isrealobj(node.opA) and np.isrealobj(node.opB) and np.isrealobj(node.opQ) and np.isrealobj(node.opBi):
        e0, e1 = e0.real, e1.real
    if np.linalg.norm(e1) <= FEEDTHROUGH_TOL * scale:
        e1 = np.zeros_like(e1)
    return Realization(gen.matA, b_xi, gen.kernelBasis, (e0, e1), gen.projector)
