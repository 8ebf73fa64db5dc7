"""Time-domain solutions of boundary nodes and observer-based closed loops.

A node is first turned into its realization: an ODE ``xi' = T xi + B u`` on
the invariant part of the boundary kernel plus a polynomial feedthrough
``x = V xi + E0 u + E1 u' (+ E2 u'')`` that lifts the boundary data.  The ODE is
integrated with the implicit midpoint rule, in modal coordinates when the
eigenvector matrix is well conditioned and densely otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .bcsnode import DiscreteBoundaryNode, Realization, realize, restricted_generator
from .errors import IllConditionedFit
from .numerics import GramMatrix, real_matmul, solve_linear
from .synthesis import ClosedLoopSystem, closed_loop_realization

MODAL_COND_LIMIT = 1e10
COMPATIBILITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class InputSignal:
    """Input ``u(t)`` with derivatives, defined for every real ``t``.

    ``kind`` is ``zero``, ``sampled`` (cubic spline through given samples) or
    ``band-limited-random`` (a seeded sum of sinusoids below ``cutoff`` rad/s).
    """

    kind: str
    dim: int
    evaluator: Callable[[np.ndarray, int], np.ndarray] = field(repr=False)
    seed: int | None = None
    cutoff: float | None = None

    def __call__(self, t, derivative: int = 0) -> np.ndarray:
        """Values at times ``t`` as an array of shape ``(len(t), dim)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.evaluator(t, derivative)

    @classmethod
    def zero(cls, dim: int) -> "InputSignal":
        return cls("zero", dim, lambda t, k: np.zeros((t.size, dim)))

    @classmethod
    def sampled(cls, times: np.ndarray, values: np.ndarray) -> "InputSignal":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        spline = CubicSpline(np.asarray(times, dtype=float), values, axis=0)
        return cls("sampled", values.shape[1], lambda t, k: spline(t, k))

    @classmethod
    def constant(cls, value) -> "InputSignal":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(
            "sampled",
            value.size,
            lambda t, k: np.tile(value, (t.size, 1)) if k == 0 else np.zeros((t.size, value.size)),
        )

    @classmethod
    def band_limited(cls, dim: int, cutoff: float, seed: int = 0, terms: int = 16, amplitude: float = 1.0) -> "InputSignal":
        """Seeded random sum of ``terms`` cosines per channel with frequencies below ``cutoff``."""
        rng = np.random.default_rng(seed)
        freq = rng.uniform(0.0, cutoff, size=(dim, terms))
        phase = rng.uniform(0.0, 2 * np.pi, size=(dim, terms))
        amp = amplitude * rng.standard_normal((dim, terms)) / np.sqrt(terms)

        def evaluate(t, k):
            arg = freq[None] * t[:, None, None] + phase[None] + 0.5 * np.pi * k
            return np.sum(amp[None] * freq[None] ** k * np.cos(arg), axis=2)

        return cls("band-limited-random", dim, evaluate, seed=seed, cutoff=float(cutoff))


@dataclass(frozen=True)
class SimulationResult:
    times: np.ndarray
    states: np.ndarray | None
    outputs: np.ndarray
    inputs: np.ndarray
    energy: np.ndarray
    compatible: bool
    norms: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SimulationPlan:
    """Everything a run needs that does not depend on the initial state or input."""

    realization: Realization
    dt: float
    metric: GramMatrix
    outputC: np.ndarray
    opB: np.ndarray
    opQ: np.ndarray
    modal: bool
    step_factor: np.ndarray
    step_input: np.ndarray
    state_map: np.ndarray
    coordinates: np.ndarray
    output_map: np.ndarray
    real: bool

    @property
    def state_dim(self) -> int:
        return self.metric.n

    @property
    def input_dim(self) -> int:
        return self.realization.inputB.shape[1]


def _dt_from_spectrum(w: np.ndarray) -> float:
    s_cut = float(np.abs(w.imag).max(initial=0.0))
    if s_cut == 0.0:
        s_cut = float(np.abs(w).max(initial=0.0))
    return 0.5 / s_cut if s_cut > 0 else 0.5


def default_dt(mat: np.ndarray) -> float:
    """``1 / (2 s_cut)`` with ``s_cut`` the largest eigenfrequency; real spectra use the spectral radius."""
    return _dt_from_spectrum(np.linalg.eigvals(mat) if mat.size else np.zeros(0))


def _components(system):
    if isinstance(system, ClosedLoopSystem):
        ext = system.extended
        return closed_loop_realization(system), ext
    if isinstance(system, DiscreteBoundaryNode):
        return realize(system, restricted_generator(system)), system
    raise TypeError(f"cannot simulate {type(system).__name__}")


def prepare(system, dt: float | None = None, outputs: np.ndarray | None = None) -> SimulationPlan:
    """Realize ``system`` and factor the midpoint step for time step ``dt``."""
    real, node = _components(system)
    t, b = real.matA, real.inputB
    r = t.shape[0]
    w, vecs = np.linalg.eig(t) if r else (np.zeros(0), np.zeros((0, 0)))
    dt = _dt_from_spectrum(w) if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be positive")
    outC = node.opC if outputs is None else np.atleast_2d(outputs)
    is_real = not any(np.iscomplexobj(x) for x in (t, b, real.basis, node.gram, outC))
    modal = False
    if r:
        try:
            inv = np.linalg.inv(vecs)
            # 1-norm condition estimate; the inverse is needed anyway
            modal = np.linalg.norm(vecs, 1) * np.linalg.norm(inv, 1) <= MODAL_COND_LIMIT
        except np.linalg.LinAlgError:
            modal = False
    if modal:
        denom = 1 - 0.5 * dt * w
        phi = (1 + 0.5 * dt * w) / denom
        gam = (dt / denom)[:, None] * (inv @ b)
        state_map = real_matmul(real.basis, vecs)
        coords = inv
    else:
        eye = np.eye(r)
        left = eye - 0.5 * dt * t
        phi = solve_linear(left, eye + 0.5 * dt * t)
        gam = solve_linear(left, dt * b) if b.size else np.zeros((r, b.shape[1]))
        state_map = real.basis
        coords = eye
    out_map = real_matmul(outC, state_map)
    return SimulationPlan(real, dt, node.metric, outC, node.opB, node.opQ, modal, phi, gam, state_map, coords, out_map, is_real)


def _feedthrough(plan: SimulationPlan, u: InputSignal, times: np.ndarray) -> np.ndarray:
    n = plan.state_map.shape[0]
    out = np.zeros((n, times.size))
    for k, e in enumerate(plan.realization.feedthrough):
        if e.size and np.any(e):
            out = out + e @ u(times, k).T
    return out


def initial_coordinates(plan: SimulationPlan, x0: np.ndarray, u: InputSignal) -> tuple[np.ndarray, bool]:
    """Coordinates of ``x0`` after removing the lifted boundary data, plus compatibility."""
    real = plan.realization
    lifted = _feedthrough(plan, u, np.zeros(1))[:, 0]
    rest = x0 - lifted
    if real.projector is not None:
        xi = real.projector @ rest
    else:
        xi = np.linalg.lstsq(real.basis, rest, rcond=None)[0]
    recon = real.basis @ xi + lifted
    scale = max(float(np.sqrt(plan.metric.norm_sq(x0))), 1e-300)
    u0 = u(0.0)[0]
    bres = np.linalg.norm(plan.opB @ x0 - plan.opQ @ u0) if plan.opB.size else 0.0
    bscale = np.linalg.norm(plan.opB) * np.linalg.norm(x0) + np.linalg.norm(plan.opQ @ u0) if plan.opB.size else 1.0
    compatible = bres <= COMPATIBILITY_TOL * max(bscale, 1e-300)
    compatible = compatible and float(np.sqrt(plan.metric.norm_sq(x0 - recon))) <= COMPATIBILITY_TOL * scale
    return plan.coordinates @ xi, bool(compatible)


def run_prepared(plan: SimulationPlan, x0, u: InputSignal, tau: float, *, record_every: int = 1, keep_states: bool = True, norm_maps: dict | None = None) -> SimulationResult:
    """Integrate a prepared plan over ``[0, tau]``.

    ``norm_maps`` maps names to ``(L, gram)`` pairs; the result then carries
    the trace of ``||L x(t)||`` in the given Gram matrix.
    """
    if u.dim != plan.input_dim:
        raise ValueError(f"input has {u.dim} channels, system expects {plan.input_dim}")
    x0 = np.asarray(x0)
    steps = int(round(tau / plan.dt))
    if steps < 1:
        raise ValueError("tau shorter than one time step")
    dt = plan.dt
    z, compatible = initial_coordinates(plan, x0, u)
    record_every = max(1, int(record_every))
    rec_idx = np.arange(0, steps + 1, record_every)
    if rec_idx[-1] != steps:
        rec_idx = np.append(rec_idx, steps)
    zs = _march(plan, z, u, steps, rec_idx)
    times = rec_idx * dt
    x = plan.state_map @ zs + _feedthrough(plan, u, times)
    if plan.real and np.isrealobj(x0):
        x = np.ascontiguousarray(x.real)
    fx = plan.metric.to_unit(x)
    energy = np.sum(np.abs(fx) ** 2, axis=0)
    y = (plan.outputC @ x).T
    norms = {}
    for name, (lmap, gram) in (norm_maps or {}).items():
        norms[name] = np.sqrt(gram.norm_sq(lmap @ x))
    return SimulationResult(
        times=times,
        states=x.T if keep_states else None,
        outputs=y,
        inputs=u(times),
        energy=energy,
        compatible=compatible,
        norms=norms,
    )


def _march(plan: SimulationPlan, z: np.ndarray, u: InputSignal, steps: int, rec_idx: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Midpoint steps from ``z``; returns the coordinates at the step indices ``rec_idx``."""
    dt = plan.dt
    zs = np.zeros((z.size, rec_idx.size), dtype=complex)
    zs[:, 0] = z
    wanted = np.zeros(steps + 1, dtype=bool)
    wanted[rec_idx] = True
    pos = 1
    z = z.astype(complex)
    for start in range(0, steps, chunk):
        stop = min(start + chunk, steps)
        mids = (np.arange(start, stop) + 0.5) * dt
        drive = real_matmul(plan.step_input, u(mids).T) if plan.input_dim else None
        for k in range(start, stop):
            z = plan.step_factor * z if plan.modal else plan.step_factor @ z
            if drive is not None:
                z = z + drive[:, k - start]
            if wanted[k + 1]:
                zs[:, pos] = z
                pos += 1
    return zs


class OutputRun(NamedTuple):
    times: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    final_energy: float
    compatible: bool
    checkpoint_energy: np.ndarray = np.zeros(0)


def run_outputs(plan: SimulationPlan, x0, u: InputSignal, tau: float, chunk: int = 512, checkpoints=None) -> OutputRun:
    """Output trace on every step and the terminal energy, without storing states.

    ``checkpoints`` lists step indices at which the energy is also reported.
    """
    steps = int(round(tau / plan.dt))
    if steps < 1:
        raise ValueError("tau shorter than one time step")
    x0 = np.asarray(x0)
    z, compatible = initial_coordinates(plan, x0, u)
    times = np.arange(steps + 1) * plan.dt
    marks = np.unique(np.clip(np.asarray([] if checkpoints is None else checkpoints, dtype=int), 0, steps))
    zmarks = np.zeros((z.size, marks.size), dtype=complex)
    ys = np.zeros((plan.output_map.shape[0], steps + 1), dtype=complex)
    block = np.zeros((z.size, chunk + 1), dtype=complex)
    z = z.astype(complex)
    for start in range(0, steps + 1, chunk):
        stop = min(start + chunk, steps + 1)
        if plan.input_dim:
            mids = (np.arange(start, stop) - 0.5) * plan.dt
            drive = real_matmul(plan.step_input, u(mids).T)
        for k in range(start, stop):
            if k > 0:
                z = plan.step_factor * z if plan.modal else plan.step_factor @ z
                if plan.input_dim:
                    z = z + drive[:, k - start]
            block[:, k - start] = z
        ys[:, start:stop] = plan.output_map @ block[:, : stop - start]
        inside = (marks >= start) & (marks < stop)
        zmarks[:, inside] = block[:, marks[inside] - start]
    lift = _feedthrough(plan, u, times)
    ys = ys + real_matmul(plan.outputC, lift)
    x_end = plan.state_map @ z + lift[:, -1]
    x_marks = plan.state_map @ zmarks + lift[:, marks]
    if plan.real and np.isrealobj(x0):
        ys = ys.real
        x_end = x_end.real
        x_marks = x_marks.real
    energies = np.atleast_1d(plan.metric.norm_sq(x_marks)) if marks.size else np.zeros(0)
    return OutputRun(times, ys.T, u(times), float(plan.metric.norm_sq(x_end)), compatible, np.asarray(energies, dtype=float))


def run(system, x0, u: InputSignal | None, tau: float, dt: float | None = None, *, record_every: int = 1, keep_states: bool = True, outputs: np.ndarray | None = None) -> SimulationResult:
    """Simulate a node or closed loop from ``x0`` under input ``u`` up to ``tau``.

    Initial data violating the boundary condition (or the hidden constraints
    of higher-index nodes) still yield the generalised solution; the result is
    then marked ``compatible=False``.
    """
    plan = prepare(system, dt=dt, outputs=outputs)
    u = InputSignal.zero(plan.input_dim) if u is None else u
    return run_prepared(plan, x0, u, tau, record_every=record_every, keep_states=keep_states)


class ErrorTrace(NamedTuple):
    times: np.ndarray
    values: np.ndarray


def observer_error_trace(closed: ClosedLoopSystem, x0, xhat0, tau: float, dt: float | None = None, *, record_every: int = 1) -> ErrorTrace:
    """``||xhat(t) - x(t)||_M`` for the closed loop without external input."""
    n = closed.n
    plan = prepare(closed, dt=dt)
    diff = np.hstack([-np.eye(n), np.eye(n)])
    res = run_prepared(
        plan,
        np.concatenate([x0, xhat0]),
        InputSignal.zero(plan.input_dim),
        tau,
        record_every=record_every,
        keep_states=False,
        norm_maps={"error": (diff, closed.plant.metric)},
    )
    return ErrorTrace(res.times, res.norms["error"])


class DecayFit(NamedTuple):
    value: float
    window: tuple[float, float]
    residual: float


def _trace(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, SimulationResult):
        return data.times, np.sqrt(np.maximum(data.energy, 0.0))
    times, values = data
    return np.asarray(times, dtype=float), np.asarray(values, dtype=float)


def decay_fit(data, model: str = "exponential", window: tuple[float, float] | None = None) -> DecayFit:
    """Decay rate (``exponential``) or exponent (``power``) of the state norm.

    ``data`` is a :class:`SimulationResult` (its energy trace is converted to
    the norm ``sqrt(energy)``) or a ``(times, norms)`` pair.  The default window
    drops the first tenth of the horizon as transient.  For the power model it
    also stops at half the horizon so that the exponential tail of a
    truncated system stays out of the fit.  Samples below ``1e-12`` of the
    peak are ignored as round-off.
    """
    times, norms = _trace(data)
    horizon = times[-1]
    if window is None:
        window = (0.1 * horizon, horizon) if model == "exponential" else (0.1 * horizon, 0.5 * horizon)
    lo, hi = window
    sel = (times >= lo) & (times <= hi) & (norms > 1e-12 * norms.max(initial=0.0)) & (times > 0)
    if sel.sum() < 8:
        raise IllConditionedFit("fewer than 8 samples in the decay window")
    y = np.log(norms[sel])
    if model == "exponential":
        xv = times[sel]
    elif model == "power":
        xv = np.log(times[sel])
    else:
        raise ValueError(f"unknown decay model {model!r}")
    design = np.column_stack([xv, np.ones_like(xv)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return DecayFit(float(-coef[0]), (float(lo), float(hi)), resid)
