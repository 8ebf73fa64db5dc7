"""Node algebra and observer-based controller assembly.

Composite nodes always carry an explicit residual space built from the
residual spaces of their parts, so that the boundary dynamics of a feedback
interconnection are exactly the interconnection of the parts' dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg as sla

from .bcsnode import (
    DiscreteBoundaryNode,
    Realization,
    RestrictedGenerator,
    _require_full_rank,
    block_to_matrix,
    generalized_resolvent,
    matrix_to_block,
    realize,
    residual_space,
    restricted_generator,
    transfer,
)
from .errors import ConfigError, NoConvergence, SingularAtLambda, SingularMatrix
from .numerics import GramMatrix, solve_linear


@dataclass(frozen=True, eq=False)
class GainSet:
    """State feedback ``opK`` (m x n) and output injections ``opL`` (n_b x p), ``opLi`` (n x p)."""

    opK: np.ndarray
    opL: np.ndarray
    opLi: np.ndarray

    def check(self, plant: DiscreteBoundaryNode) -> None:
        want = {"opK": (plant.m, plant.n), "opL": (plant.n_b, plant.p), "opLi": (plant.n, plant.p)}
        for name, shape in want.items():
            got = np.shape(getattr(self, name))
            if tuple(got) != shape:
                raise ConfigError(f"gain {name} has shape {tuple(got)}, plant needs {shape}")

    @classmethod
    def zeros(cls, plant: DiscreteBoundaryNode) -> "GainSet":
        return cls(np.zeros((plant.m, plant.n)), np.zeros((plant.n_b, plant.p)), np.zeros((plant.n, plant.p)))


def gains_to_dict(g: GainSet) -> dict[str, Any]:
    return {name: matrix_to_block(np.atleast_2d(getattr(g, name))) for name in ("opK", "opL", "opLi")}


def gains_from_dict(doc: dict[str, Any]) -> GainSet:
    if not isinstance(doc, dict) or any(k not in doc for k in ("opK", "opL", "opLi")):
        raise ConfigError("gains document needs fields opK, opL, opLi")
    return GainSet(*(block_to_matrix(doc[k]) for k in ("opK", "opL", "opLi")))


def load_gains(path) -> GainSet:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read gains file {path}: {exc}") from exc
    return gains_from_dict(doc)


def save_gains(g: GainSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(gains_to_dict(g), fh, indent=1)


# ---------------------------------------------------------------- feedback


def feedback_transform(node: DiscreteBoundaryNode, K: np.ndarray) -> DiscreteBoundaryNode:
    """Close ``u = K y + v``: ``A <- A + B_i K C`` and ``B <- B - Q K C``."""
    K = np.atleast_2d(K)
    if K.shape != (node.m, node.p):
        raise ConfigError(f"feedback gain has shape {K.shape}, node needs {(node.m, node.p)}")
    new_b = node.opB - node.opQ @ K @ node.opC
    _require_full_rank(new_b)
    return node.replace(
        opA=node.opA + node.opBi @ K @ node.opC,
        opB=new_b,
        opR=residual_space(node),
    )


def feedback_resolvent(node: DiscreteBoundaryNode, K: np.ndarray, lam: complex) -> np.ndarray:
    """``(lam - A)^{-1} + H (I - K P)^{-1} K C (lam - A)^{-1}`` built from the open-loop node."""
    K = np.atleast_2d(K)
    r0 = generalized_resolvent(node, lam)
    ts = transfer(node, lam)
    core = np.eye(node.m) - K @ ts.Pval
    try:
        mid = solve_linear(core, K @ node.opC @ r0)
    except SingularMatrix as exc:
        raise SingularAtLambda(lam, "I - K P(lambda) is singular") from exc
    return r0 + ts.Hval @ mid


def feedback_transfer(node: DiscreteBoundaryNode, K: np.ndarray, lam: complex) -> np.ndarray:
    """Closed-loop transfer ``P (I - K P)^{-1}``."""
    K = np.atleast_2d(K)
    p = transfer(node, lam).Pval
    try:
        return p @ solve_linear(np.eye(node.m) - K @ p, np.eye(node.m))
    except SingularMatrix as exc:
        raise SingularAtLambda(lam, "I - K P(lambda) is singular") from exc


# ---------------------------------------------------------------- composition


def block_diag_node(*nodes: DiscreteBoundaryNode) -> DiscreteBoundaryNode:
    """Parallel composition without interconnection."""
    def bd(mats):
        return sla.block_diag(*mats) if mats else np.zeros((0, 0))

    return DiscreteBoundaryNode(
        opA=bd([nd.opA for nd in nodes]),
        opB=bd([nd.opB for nd in nodes]),
        opC=bd([nd.opC for nd in nodes]),
        opQ=bd([nd.opQ for nd in nodes]),
        opBi=bd([nd.opBi for nd in nodes]),
        gram=GramMatrix(bd([nd.gram for nd in nodes])),
        opR=bd([residual_space(nd) for nd in nodes]),
    )


def _fix_empty(a: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.zeros((rows, cols)) if np.size(a) == 0 else np.atleast_2d(a)


def couple(node1: DiscreteBoundaryNode, node2: DiscreteBoundaryNode, K1: np.ndarray, K2: np.ndarray) -> DiscreteBoundaryNode:
    """Interconnect ``u1 = K1 y2 + v1`` and ``u2 = K2 y1 + v2``."""
    K1 = _fix_empty(K1, node1.m, node2.p)
    K2 = _fix_empty(K2, node2.m, node1.p)
    if K1.shape != (node1.m, node2.p) or K2.shape != (node2.m, node1.p):
        raise ConfigError(
            f"coupling gains have shapes {K1.shape}, {K2.shape}; need {(node1.m, node2.p)}, {(node2.m, node1.p)}"
        )
    k_o = np.block([[np.zeros((node1.m, node1.p)), K1], [K2, np.zeros((node2.m, node2.p))]])
    return feedback_transform(block_diag_node(node1, node2), k_o)


def cascade(node1: DiscreteBoundaryNode, node2: DiscreteBoundaryNode, K: np.ndarray) -> DiscreteBoundaryNode:
    """Feed the output of ``node2`` into the input of ``node1`` through ``K``."""
    return couple(node1, node2, K, np.zeros((node2.m, node1.p)))


def cascade_resolvent(node1: DiscreteBoundaryNode, node2: DiscreteBoundaryNode, lam: complex, K: np.ndarray | None = None) -> np.ndarray:
    """Block resolvent ``[[R1, H1 K C2 R2], [0, R2]]`` of ``cascade(node1, node2, K)``."""
    K = np.eye(node1.m, node2.p) if K is None else np.atleast_2d(K)
    r1 = generalized_resolvent(node1, lam)
    r2 = generalized_resolvent(node2, lam)
    h1 = transfer(node1, lam).Hval
    top = np.hstack([r1, h1 @ K @ node2.opC @ r2])
    bottom = np.hstack([np.zeros((node2.n, node1.n)), r2])
    return np.vstack([top, bottom])


def _m_norm(op: np.ndarray, gram: GramMatrix) -> float:
    return float(np.linalg.norm(gram.congruence(op), 2))


def resolvent_estimate_constant(node1, node2, K, lams) -> float:
    """Smallest C with ``||R(lam)|| <= C (1 + max ||R_i(lam)||)`` over the sample, in energy norms."""
    casc = cascade(node1, node2, K)
    best = 0.0
    for lam in lams:
        r = _m_norm(generalized_resolvent(casc, lam), casc.metric)
        r1 = _m_norm(generalized_resolvent(node1, lam), node1.metric)
        r2 = _m_norm(generalized_resolvent(node2, lam), node2.metric)
        best = max(best, r / (1.0 + max(r1, r2)))
    return best


def reroute_inputs(node: DiscreteBoundaryNode, J: np.ndarray) -> DiscreteBoundaryNode:
    """Replace the input ``u`` by ``J v``."""
    return node.replace(opQ=node.opQ @ J, opBi=node.opBi @ J, opR=residual_space(node))


# ---------------------------------------------------------------- observer-based loop


@dataclass(frozen=True, eq=False)
class StabilizedPair:
    """Restricted generators of the state-feedback and output-injection blocks."""

    genK: RestrictedGenerator
    genL: RestrictedGenerator


def state_feedback_node(plant: DiscreteBoundaryNode, gains: GainSet) -> DiscreteBoundaryNode:
    """``(B - Q K, A + B_i K, C, Q, B_i)``, the plant under full state feedback."""
    new_b = plant.opB - plant.opQ @ gains.opK
    _require_full_rank(new_b)
    return plant.replace(opA=plant.opA + plant.opBi @ gains.opK, opB=new_b, opR=residual_space(plant))


def injection_node(plant: DiscreteBoundaryNode, gains: GainSet) -> DiscreteBoundaryNode:
    """``(B - L C, A + L_i C, K, L, L_i)``: the estimation-error dynamics with output ``K e``."""
    new_b = plant.opB - gains.opL @ plant.opC
    _require_full_rank(new_b)
    return DiscreteBoundaryNode(
        opA=plant.opA + gains.opLi @ plant.opC,
        opB=new_b,
        opC=gains.opK,
        opQ=gains.opL,
        opBi=gains.opLi,
        gram=plant.metric,
        opR=residual_space(plant),
    )


def stabilized_pair(plant: DiscreteBoundaryNode, gains: GainSet) -> StabilizedPair:
    """``A_K = (A + B_i K)|ker(B - Q K)`` and ``A_L = (A + L_i C)|ker(B - L C)``."""
    gains.check(plant)
    k_node = state_feedback_node(plant, gains)
    l_node = injection_node(plant, gains)
    return StabilizedPair(restricted_generator(k_node), restricted_generator(l_node))


@dataclass(frozen=True, eq=False)
class TriangularForm:
    """Closed-loop generator in the coordinates ``(x, xhat - x)``.

    ``basis`` (columns in the transformed DOF space) is ``[[V_K, F], [0, V_L]]``
    and ``matA`` is ``[[A_K, coupling], [0, A_L]]`` with respect to it.
    ``gram`` is the Gram matrix of ``basis`` in the transported energy norm.
    """

    matA: np.ndarray
    basis: np.ndarray
    gram: np.ndarray
    split: int
    realization: Realization


@dataclass(frozen=True, eq=False)
class ClosedLoopSystem:
    plant: DiscreteBoundaryNode
    gains: GainSet
    extended: DiscreteBoundaryNode
    transformS: np.ndarray
    pair: StabilizedPair
    triangular: TriangularForm

    @property
    def n(self) -> int:
        return self.plant.n


def extended_node(plant: DiscreteBoundaryNode, gains: GainSet) -> DiscreteBoundaryNode:
    """Plant plus observer-based controller on ``X x X`` with inputs ``(u1, u2)``."""
    A, B, C, Q, Bi = plant.opA, plant.opB, plant.opC, plant.opQ, plant.opBi
    K, L, Li = gains.opK, gains.opL, gains.opLi
    p, nb = plant.p, plant.n_b
    r = residual_space(plant)
    return DiscreteBoundaryNode(
        opA=np.block([[A, Bi @ K], [-Li @ C, A + Bi @ K + Li @ C]]),
        opB=np.block([[B, -Q @ K], [L @ C, B - Q @ K - L @ C]]),
        opC=np.block([[C, np.zeros_like(C)], [np.zeros_like(C), C], [np.zeros_like(K), K]]),
        opQ=np.block([[Q, np.zeros((nb, p))], [Q, L]]),
        opBi=np.block([[Bi, np.zeros((plant.n, p))], [Bi, Li]]),
        gram=GramMatrix(sla.block_diag(plant.gram, plant.gram)),
        opR=sla.block_diag(r, r),
        labels={"X": "X_e", "U": "U_e", "Y": "Y_e", "Ub": "U_be"},
    )


def similarity_transform(n: int) -> tuple[np.ndarray, np.ndarray]:
    """``S(x, xhat) = (x, xhat - x)`` and its inverse."""
    eye, zero = np.eye(n), np.zeros((n, n))
    return np.block([[eye, zero], [-eye, eye]]), np.block([[eye, zero], [eye, eye]])


def _pad(feed: tuple[np.ndarray, ...], order: int) -> list[np.ndarray]:
    out = list(feed)
    while len(out) < order + 1:
        out.append(np.zeros_like(out[0]))
    return out


def cascade_realization(upper: Realization, lower: Realization, coupling: np.ndarray) -> Realization:
    """Realization of ``upper`` driven by ``u1 + coupling @ x_lower``, ``lower`` driven by ``u2``.

    Both parts may pass the input and its first derivative to the state.  The
    composite input is ``(u1, u2)``; its state is ``(x_upper, x_lower)`` and its
    basis is block upper triangular.
    """
    if upper.order > 1 or lower.order > 1:
        raise NoConvergence("cascade realization supports first-order feedthrough only")
    tk, bk, vk = upper.matA, upper.inputB, upper.basis
    tl, bl, vl = lower.matA, lower.inputB, lower.basis
    e0k, e1k = _pad(upper.feedthrough, 1)[:2]
    e0l, e1l = _pad(lower.feedthrough, 1)[:2]
    rk, rl = tk.shape[0], tl.shape[0]
    nk, nl = vk.shape[0], vl.shape[0]
    m1, m2 = bk.shape[1], bl.shape[1]
    kv = coupling @ vl
    t = np.block([[tk, bk @ kv], [np.zeros((rl, rk)), tl]])
    b0 = np.block([[bk, bk @ coupling @ e0l], [np.zeros((rl, m1)), bl]])
    b1 = np.block([[np.zeros((rk, m1)), bk @ coupling @ e1l], [np.zeros((rl, m1 + m2))]])
    f = e0k @ kv + e1k @ kv @ tl
    w = np.block([[vk, f], [np.zeros((nl, rk)), vl]])
    z = np.zeros((nl, m1))
    g0 = np.block([[e0k, e0k @ coupling @ e0l + e1k @ kv @ bl], [z, e0l]])
    g1 = np.block([[e1k, e0k @ coupling @ e1l + e1k @ coupling @ e0l], [z, e1l]])
    g2 = np.block([[np.zeros((nk, m1)), e1k @ coupling @ e1l], [z, np.zeros((nl, m2))]])
    # shift xi -> xi - b1 u removes the input derivative from the state equation
    feed = [g0 + w @ b1, g1, g2]
    while len(feed) > 1 and not np.any(feed[-1]):
        feed.pop()
    proj = None
    if upper.projector is not None and lower.projector is not None:
        pk, pl = upper.projector, lower.projector
        proj = np.block([[pk, -pk @ f @ pl], [np.zeros((rl, nk)), pl]])
    return Realization(t, b0 + t @ b1, w, tuple(feed), proj)


def _triangular_gram(w: np.ndarray, s_inv: np.ndarray, gram_e: np.ndarray) -> np.ndarray:
    y = s_inv @ w
    g = y.conj().T @ gram_e @ y
    return 0.5 * (g + g.conj().T)


def assemble_closed_loop(plant: DiscreteBoundaryNode, gains: GainSet) -> ClosedLoopSystem:
    """Extended node of plant and observer-based controller with its triangular form."""
    gains.check(plant)
    ext = extended_node(plant, gains)
    _require_full_rank(ext.opB)
    k_node = state_feedback_node(plant, gains)
    l_node = injection_node(plant, gains)
    gen_k = restricted_generator(k_node)
    gen_l = restricted_generator(l_node)
    real_k = realize(k_node, gen_k)
    real_l = realize(l_node, gen_l)
    tri_real = cascade_realization(real_k, real_l, gains.opK)
    s, s_inv = similarity_transform(plant.n)
    tri = TriangularForm(
        matA=tri_real.matA,
        basis=tri_real.basis,
        gram=_triangular_gram(tri_real.basis, s_inv, ext.gram),
        split=gen_k.dim,
        realization=tri_real,
    )
    return ClosedLoopSystem(plant, gains, ext, s, StabilizedPair(gen_k, gen_l), tri)


def closed_loop_realization(closed: ClosedLoopSystem) -> Realization:
    """Realization of the extended node in its own coordinates ``(x, xhat)``."""
    _, s_inv = similarity_transform(closed.n)
    r = closed.triangular.realization
    proj = None if r.projector is None else r.projector @ closed.transformS
    return Realization(r.matA, r.inputB, s_inv @ r.basis, tuple(s_inv @ e for e in r.feedthrough), proj)


def matrix_level_triangularization_defect(closed: ClosedLoopSystem) -> float:
    """Relative defect of ``S A_e S^{-1} = [[A + B_i K, B_i K], [0, A + L_i C]]`` at DOF level."""
    p, g = closed.plant, closed.gains
    s, s_inv = similarity_transform(p.n)
    lhs = s @ closed.extended.opA @ s_inv
    rhs = np.block([[p.opA + p.opBi @ g.opK, p.opBi @ g.opK], [np.zeros((p.n, p.n)), p.opA + g.opLi @ p.opC]])
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))


def similarity_defect(closed: ClosedLoopSystem, gen_e: RestrictedGenerator | None = None) -> dict[str, float]:
    """Compare the compressed extended generator with the triangular form.

    With ``G = Pi_e S^{-1} W`` (triangular coordinates to extended kernel
    coordinates) the defect is ``||G^{-1} A_e G - A_tri|| / ||A_tri||``.
    Also reports how far the diagonal blocks are from ``A_K`` and ``A_L``.
    """
    gen_e = restricted_generator(closed.extended) if gen_e is None else gen_e
    _, s_inv = similarity_transform(closed.n)
    tri = closed.triangular
    if gen_e.dim != tri.matA.shape[0]:
        raise NoConvergence(f"extended kernel dimension {gen_e.dim} differs from triangular {tri.matA.shape[0]}")
    g = gen_e.projector @ (s_inv @ tri.basis)
    lhs = solve_linear(g, gen_e.matA @ g, tol=1e-8)
    scale = max(np.linalg.norm(tri.matA), 1e-300)
    k = tri.split
    diag_k = np.linalg.norm(lhs[:k, :k] - closed.pair.genK.matA) / scale
    diag_l = np.linalg.norm(lhs[k:, k:] - closed.pair.genL.matA) / scale
    lower = np.linalg.norm(lhs[k:, :k]) / scale
    return {
        "similarity": float(np.linalg.norm(lhs - tri.matA) / scale),
        "diag_K": float(diag_k),
        "diag_L": float(diag_l),
        "lower_block": float(lower),
    }


# ---------------------------------------------------------------- internal loop


def internal_loop_node(plant: DiscreteBoundaryNode, gains: GainSet) -> DiscreteBoundaryNode:
    """Controller with internal loop: ``(B - L C, A + L_i C, [C; K], [Q, L], [B_i, L_i])``."""
    gains.check(plant)
    new_b = plant.opB - gains.opL @ plant.opC
    _require_full_rank(new_b)
    return DiscreteBoundaryNode(
        opA=plant.opA + gains.opLi @ plant.opC,
        opB=new_b,
        opC=np.vstack([plant.opC, gains.opK]),
        opQ=np.hstack([plant.opQ, gains.opL]),
        opBi=np.hstack([plant.opBi, gains.opLi]),
        gram=plant.metric,
        opR=residual_space(plant),
        labels={"U": "U x Y", "Y": "Y x U"},
    )


def internal_loop_composite(plant: DiscreteBoundaryNode, gains: GainSet) -> DiscreteBoundaryNode:
    """First connection step: ``u_c2 = -y + u2`` and ``u_c1 = u``; inputs ``(u, u2)``."""
    ctrl = internal_loop_node(plant, gains)
    m, p = plant.m, plant.p
    both = block_diag_node(plant, ctrl)
    # outputs (y, yhat, y_c) -> inputs (u, u_c1, u_c2)
    k1 = np.zeros((m + m + p, p + p + m))
    k1[2 * m:, :p] = -np.eye(p)
    stepped = feedback_transform(both, k1)
    reroute = np.zeros((m + m + p, m + p))
    reroute[:m, :m] = np.eye(m)
    reroute[m:2 * m, :m] = np.eye(m)
    reroute[2 * m:, m:] = np.eye(p)
    return reroute_inputs(stepped, reroute)


def close_internal_loop(plant: DiscreteBoundaryNode, gains: GainSet) -> DiscreteBoundaryNode:
    """Second step ``u = y_c + u1`` applied to the first-step composite."""
    comp = internal_loop_composite(plant, gains)
    m, p = plant.m, plant.p
    k2 = np.zeros((m + p, p + p + m))
    k2[:m, 2 * p:] = np.eye(m)
    return feedback_transform(comp, k2)


def two_path_defect(plant: DiscreteBoundaryNode, gains: GainSet) -> float:
    """Largest relative entrywise gap between the internal-loop route and the direct assembly."""
    a = close_internal_loop(plant, gains)
    b = extended_node(plant, gains)
    worst = 0.0
    for name in ("opA", "opB", "opC", "opQ", "opBi", "gram", "opR"):
        x, y = getattr(a, name), getattr(b, name)
        if x.shape != y.shape:
            return float("inf")
        worst = max(worst, float(np.linalg.norm(x - y) / max(np.linalg.norm(y), 1.0)))
    return worst
