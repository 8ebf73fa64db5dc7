"""Stability and well-posedness diagnostics for discrete boundary nodes.

Everything here works on finite-dimensional surrogates: spectral abscissae of
restricted generators, resolvent norms along vertical lines, power-law fits of
those norms, sampled passivity inequalities, grid suprema of feedback transfer
functions and finite-horizon energy ratios measured by simulation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import cumulative_trapezoid

from .bcsnode import DiscreteBoundaryNode, RestrictedGenerator, transfer
from .errors import IllConditionedFit, SingularAtLambda, SingularMatrix
from .numerics import GramMatrix, eigenvalues, solve_linear

MIN_FIT_POINTS = 8
BOUNDED_SLOPE = 0.2
MARGINAL_TOL = 1e-8


def _generator_matrix(gen) -> tuple[np.ndarray, GramMatrix | None]:
    if isinstance(gen, RestrictedGenerator):
        return gen.matA, None
    return np.asarray(gen), None


def spectral_abscissa(gen, band: float | None = None) -> float:
    """Largest real part of the spectrum.

    With ``band`` only eigenvalues with ``|Im lam| <= band`` count; this is the
    abscissa of the resolved part of a truncated spectrum.
    """
    a, _ = _generator_matrix(gen)
    ev = eigenvalues(a)
    if band is not None:
        ev = ev[np.abs(ev.imag) <= band]
    if ev.size == 0:
        return -np.inf
    return float(ev.real.max())


def cutoff_frequency(gen) -> float:
    """``s_cut``: the largest eigenfrequency ``max |Im lam|`` of the generator."""
    a, _ = _generator_matrix(gen)
    ev = eigenvalues(a)
    return float(np.abs(ev.imag).max(initial=0.0))


def default_band(gen, s_min: float = 5.0, fraction: float = 0.25) -> tuple[float, float]:
    """Fit band ``[s_min, fraction * s_cut]`` below the discretization cutoff."""
    return (s_min, fraction * cutoff_frequency(gen))


def peak_frequencies(gen, band: tuple[float, float]) -> np.ndarray:
    """Distinct positive eigenfrequencies inside ``band``, increasing.

    Resolvent norms along ``iR`` peak near these points, so sampling there
    traces the envelope that governs the growth rate.
    """
    a, _ = _generator_matrix(gen)
    im = eigenvalues(a).imag
    lo, hi = band
    sel = im[(im >= lo) & (im <= hi)]
    if sel.size == 0:
        return sel
    sel = np.sort(sel)
    keep = np.concatenate([[True], np.diff(sel) > 1e-9 * max(hi, 1.0)])
    return sel[keep]


def resolvent_norm(a: np.ndarray, lam: complex, gram: GramMatrix | None = None, tol: float = 1e-12, maxit: int = 200) -> float:
    """``||(lam - a)^{-1}||`` in the M-norm (Euclidean when ``gram`` is None).

    Uses power iteration on the LU-factored inverse and falls back to a full
    singular value decomposition when it stalls.
    """
    a = np.asarray(a)
    if gram is not None:
        a = gram.congruence(a)
    n = a.shape[0]
    if n == 0:
        return 0.0
    shifted = lam * np.eye(n) - a
    try:
        with warnings.catch_warnings():
            # zero pivots are reported as SingularAtLambda below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(shifted, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularAtLambda(lam) from exc
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= np.finfo(float).eps * piv.max():
        raise SingularAtLambda(lam)
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(maxit):
        y = sla.lu_solve(lu, x, check_finite=False)
        z = sla.lu_solve(lu, y, trans=2, check_finite=False)
        new = np.sqrt(np.linalg.norm(z))
        x = z / np.linalg.norm(z)
        if abs(new - est) <= tol * new:
            return float(new)
        est = new
    s = np.linalg.svd(shifted, compute_uv=False)
    if s[-1] == 0.0:
        raise SingularAtLambda(lam)
    return float(1.0 / s[-1])


class SweepPoint(NamedTuple):
    s: float
    resnorm: float
    singular: bool = False


def resolvent_sweep(gen, s_grid: Sequence[float], gram: GramMatrix | None = None, line: float = 0.0) -> list[SweepPoint]:
    """Resolvent norms ``||(line + i s - A)^{-1}||`` over an increasing grid.

    Frequencies at which the shifted operator is singular are flagged with an
    infinite norm instead of aborting the sweep.
    """
    a, _ = _generator_matrix(gen)
    grid = np.asarray(s_grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("sweep frequencies must be strictly increasing")
    out = []
    for s in grid:
        try:
            out.append(SweepPoint(float(s), resolvent_norm(a, line + 1j * s, gram)))
        except SingularAtLambda:
            out.append(SweepPoint(float(s), np.inf, True))
    return out


class ExponentFit(NamedTuple):
    alpha_hat: float
    residual: float
    slope: float
    band: tuple[float, float]
    points: int


def polynomial_exponent_estimate(sweep: Sequence, band: tuple[float, float] | None = None) -> ExponentFit:
    """Least-squares slope ``p`` of ``log resnorm`` against ``log s``; ``alpha_hat = 1/p``.

    ``residual`` is the root-mean-square misfit in log space.  A non-positive
    slope means a bounded resolvent and gives ``alpha_hat = inf``.
    """
    pts = [(float(p[0]), float(p[1])) for p in sweep]
    if band is not None:
        lo, hi = band
        pts = [p for p in pts if lo <= p[0] <= hi]
    pts = [p for p in pts if p[0] > 0 and np.isfinite(p[1]) and p[1] > 0]
    if len(pts) < MIN_FIT_POINTS:
        raise IllConditionedFit(f"need at least {MIN_FIT_POINTS} sweep points in band, got {len(pts)}")
    s = np.log([p[0] for p in pts])
    r = np.log([p[1] for p in pts])
    if np.ptp(s) == 0:
        raise IllConditionedFit("band has zero width")
    design = np.column_stack([s, np.ones_like(s)])
    coef, *_ = np.linalg.lstsq(design, r, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - r) ** 2)))
    slope = float(coef[0])
    alpha = 1.0 / slope if slope > 0 else np.inf
    fit_band = (float(np.exp(s.min())), float(np.exp(s.max())))
    return ExponentFit(alpha, resid, slope, fit_band, len(pts))


@dataclass(frozen=True)
class StabilityReport:
    abscissa: float
    sweep: list
    slope_fit: ExponentFit | None
    classification_hint: str


def classify(abscissa: float, fit: ExponentFit | None, marginal_tol: float = MARGINAL_TOL) -> str:
    """``polynomial(alpha)`` when a stable generator shows resolvent growth on the band,
    ``marginal`` when the abscissa is within ``marginal_tol`` of zero (or positive),
    ``exponential`` otherwise.

    Growth is checked first: truncations of polynomially stable generators have
    eigenvalues within roundoff of the axis, so the abscissa alone cannot tell.
    """
    if abscissa < 0 and fit is not None and fit.slope > BOUNDED_SLOPE:
        return f"polynomial({fit.alpha_hat:.3g})"
    if abscissa >= -marginal_tol:
        return "marginal"
    return "exponential"


def stability_report(gen, band: tuple[float, float] | None = None, s_grid: Sequence[float] | None = None, peaks: bool = True, points: int = 40) -> StabilityReport:
    """Abscissa, resolvent sweep and power-law fit on the default or given band.

    Without an explicit grid the sweep samples the eigenfrequencies inside the
    band (``peaks=True``) or a geometric grid of ``points`` frequencies.
    """
    band = default_band(gen) if band is None else band
    if s_grid is None:
        s_grid = peak_frequencies(gen, band) if peaks else np.geomspace(band[0], band[1], points)
    sweep = resolvent_sweep(gen, s_grid)
    try:
        fit = polynomial_exponent_estimate(sweep, band)
    except IllConditionedFit:
        fit = None
    absc = spectral_abscissa(gen)
    return StabilityReport(absc, sweep, fit, classify(absc, fit))


def _passivity_deviations(node: DiscreteBoundaryNode, samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = node.n
    x = rng.standard_normal((n, samples))
    if np.iscomplexobj(node.opA) or np.iscomplexobj(node.gram):
        x = x + 1j * rng.standard_normal((n, samples))
    x = x / np.sqrt(node.metric.norm_sq(x))
    lhs = np.real(node.metric.inner(node.opA @ x, x))
    if node.n_b == 0:
        return lhs
    rhs = np.real(np.sum(np.conj(node.opC @ x) * (node.opB @ x), axis=0))
    return lhs - rhs


def passivity_check(node: DiscreteBoundaryNode, samples: int = 256, seed: int = 0) -> float:
    """Largest ``Re<Ax, x>_M - Re<Bx, Cx>`` over random states of unit M-norm.

    A value at or below a small tolerance means the impedance-passivity
    inequality holds on the sample.  Requires matching boundary and output
    dimensions; without boundary rows the boundary term is zero and the check
    reduces to dissipativity of ``opA`` in the M-inner product.
    """
    if node.n_b and node.n_b != node.p:
        raise ValueError("passivity needs as many outputs as boundary rows")
    return float(_passivity_deviations(node, samples, seed).max())


def passivity_deviation(node: DiscreteBoundaryNode, samples: int = 256, seed: int = 0) -> float:
    """Largest ``|Re<Ax, x>_M - Re<Bx, Cx>|``; small values certify the equality case."""
    if node.n_b and node.n_b != node.p:
        raise ValueError("passivity needs as many outputs as boundary rows")
    return float(np.abs(_passivity_deviations(node, samples, seed)).max())


def coercivity_constant(K: np.ndarray) -> float:
    """Largest ``c`` with ``Re K >= c I``."""
    K = np.atleast_2d(K)
    return float(np.linalg.eigvalsh(0.5 * (K + K.conj().T)).min())


@dataclass(frozen=True)
class HinfResult:
    supremum: float
    lemma_supremum: float | None
    lemma_bound: float | None
    holds: bool | None


def hinf_bound(system, K: np.ndarray, lams: Sequence[complex], sign: int = -1, c: float | None = None, tol: float = 1e-2) -> HinfResult:
    """Grid supremum of ``||(I - K P(lam))^{-1}||`` (``sign=-1``) or ``||(I + K P(lam))^{-1}||`` (``sign=+1``).

    ``system`` is a node or a callable returning ``P(lam)``.  When a
    coercivity constant ``c`` of ``Re K`` is supplied the grid supremum of
    ``||(K^{-1} + P(lam))^{-1}||`` is compared with ``||K||^2 / c * (1 + tol)``.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    K = np.atleast_2d(np.asarray(K))
    evaluate: Callable[[complex], np.ndarray]
    if isinstance(system, DiscreteBoundaryNode):
        evaluate = lambda lam: transfer(system, lam).Pval  # noqa: E731
    else:
        evaluate = lambda lam: np.atleast_2d(system(lam))  # noqa: E731
    m = K.shape[0]
    sup = 0.0
    lemma_sup = 0.0 if c is not None else None
    kinv = np.linalg.inv(K) if c is not None else None
    for lam in lams:
        p = evaluate(lam)
        try:
            inv = solve_linear(np.eye(m) + sign * K @ p, np.eye(m))
        except SingularMatrix as exc:
            raise SingularAtLambda(lam) from exc
        sup = max(sup, float(np.linalg.norm(inv, 2)))
        if c is not None:
            try:
                lem = solve_linear(kinv + p, np.eye(m))
            except SingularMatrix as exc:
                raise SingularAtLambda(lam) from exc
            lemma_sup = max(lemma_sup, float(np.linalg.norm(lem, 2)))
    if c is None:
        return HinfResult(sup, None, None, None)
    bound = float(np.linalg.norm(K, 2) ** 2 / c)
    return HinfResult(sup, lemma_sup, bound, bool(lemma_sup <= bound * (1 + tol)))


def vertical_line_grid(reals: Sequence[float], s_max: float, points: int) -> np.ndarray:
    """``points`` samples split over the lines ``Re lam = r``, ``|Im lam| <= s_max``."""
    per = [points // len(reals) + (1 if k < points % len(reals) else 0) for k in range(len(reals))]
    out = [r + 1j * np.linspace(-s_max, s_max, k) for r, k in zip(reals, per)]
    return np.concatenate(out)


@dataclass(frozen=True)
class WellPosednessEstimate:
    tau: float
    constM: float
    probes: int
    ratios: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    dt: float = float("nan")


def horizon_checkpoints(tau: float, dt: float, min_steps: int = 64) -> np.ndarray:
    """Step indices of ``tau * 2**-j`` down to ``min_steps * dt``.

    The floor does not depend on ``tau``, so the checkpoints of ``tau`` are a
    subset of those of ``2 tau``; this makes the estimate nondecreasing in the horizon.
    """
    steps = int(round(tau / dt))
    marks = []
    t = float(tau)
    while True:
        k = int(round(t / dt))
        if k < min(min_steps, steps):
            break
        marks.append(k)
        t *= 0.5
    return np.array(sorted(set(marks)), dtype=int)


def wellposedness_constant(system, tau: float, probes: int = 64, *, dt: float | None = None, seed: int = 0, outputs: np.ndarray | None = None, initial_states: np.ndarray | None = None, input_cutoff: float | None = None) -> WellPosednessEstimate:
    """Largest energy ratio ``(||x(t)||^2 + ||y||^2) / (||x0||^2 + ||u||^2)`` over probes and ``t <= tau``.

    The probe set has ``probes`` free responses from random initial states
    (or randomly scaled columns of ``initial_states``), ``probes`` forced
    responses from rest with band-limited random inputs, and ``probes`` mixed
    runs.  Probe signals do not depend on ``tau``.  Ratios are taken at the
    horizons of :func:`horizon_checkpoints`; L2 norms use the trapezoidal rule
    on the simulation grid.
    """
    from .simulate import InputSignal, prepare, run_outputs

    if tau <= 0:
        raise ValueError("tau must be positive")
    plan = prepare(system, dt=dt, outputs=outputs)
    dt = plan.dt
    n, m = plan.state_dim, plan.input_dim
    # half the grid Nyquist frequency
    cutoff = 0.5 * np.pi / dt * 0.5 if input_cutoff is None else input_cutoff
    rng = np.random.default_rng(seed)
    gram = plan.metric
    marks = horizon_checkpoints(tau, dt)

    def random_state():
        if initial_states is not None:
            cols = initial_states.shape[1]
            x = initial_states[:, rng.integers(cols)]
            return x * rng.standard_normal()
        return rng.standard_normal(n)

    ratios = []
    zero = InputSignal.zero(m)
    for k in range(3 * probes):
        kind = k % 3
        x0 = random_state() if kind != 1 else np.zeros(n)
        if kind == 0 or m == 0:
            u = zero
        else:
            u = InputSignal.band_limited(m, cutoff, seed=int(rng.integers(2**31)))
        res = run_outputs(plan, x0, u, tau, checkpoints=marks)
        y_cum = _cumulative_l2_sq(res.times, res.outputs)[marks]
        u_cum = _cumulative_l2_sq(res.times, res.inputs)[marks]
        num = res.checkpoint_energy + y_cum
        den = float(np.real(gram.norm_sq(x0))) + u_cum
        ok = den > 0
        if np.any(ok):
            ratios.append(float(np.max(num[ok] / den[ok])))
    ratios = np.asarray(ratios)
    return WellPosednessEstimate(float(tau), float(ratios.max(initial=0.0)), int(ratios.size), ratios, dt)


def _cumulative_l2_sq(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    if values.size == 0:
        return np.zeros(times.size)
    sq = np.sum(np.abs(values) ** 2, axis=1)
    return cumulative_trapezoid(sq, times, initial=0.0)


def triangular_abscissa_defect(a_k: np.ndarray, a_l: np.ndarray, a_e: np.ndarray) -> float:
    """``|abscissa(A_e) - max(abscissa(A_K), abscissa(A_L))|``."""
    return abs(spectral_abscissa(a_e) - max(spectral_abscissa(a_k), spectral_abscissa(a_l)))
