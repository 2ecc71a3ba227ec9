"""Trajectory-level collapse dynamics on a finite basis.

Two samplers produce the same physics:

* the *linear* engine evolves the unnormalized state on a noise path drawn
  from the raw Wiener measure (``Var[dB] = lam dt``) and reports the squared
  norm as the likelihood weight of that path;
* the *nonlinear* engine samples the physical ("cooked") noise directly,
  ``dB = dB0 + 2 lam dt <A>``, and renormalizes every step, so every
  trajectory has unit weight.

Collapse factors are applied as exact exponentials in the joint eigenbasis of
the collapse operators; the Hamiltonian enters through half-step unitaries on
either side of each collapse step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.linalg import expm

from .noise_paths import (
    Kernel,
    NoisePath,
    TimeGrid,
    collapse_diffusion,
    gram_matrix,
    make_rng,
    sqrt_transfer,
)
from .quantum_core import MAX_DIM, HermitianOperator, StateVector, eigendecompose, norm_squared

STEP_RULE = 0.01
COMMUTE_TOL = 1e-10
NORM_FLOOR = 1e-300
RESCALE_LOW, RESCALE_HIGH = 1e-6, 1e6
DEFAULT_EPSILON = 1e-3
DEFAULT_DWELL = 10
CHUNK = 2048


class StepSizeError(ValueError):
    """``dt * lam * spread**2`` exceeds the integration rule."""


class NormCollapseError(FloatingPointError):
    pass


def _as_op(A) -> HermitianOperator:
    return A if isinstance(A, HermitianOperator) else HermitianOperator(A)


@dataclass(frozen=True)
class CollapseOperatorSet:
    operators: tuple[HermitianOperator, ...]
    rate: float
    hamiltonian: HermitianOperator | None = None
    basis: np.ndarray = field(init=False, repr=False)
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ops = tuple(_as_op(A) for A in (self.operators if isinstance(self.operators, (list, tuple)) else [self.operators]))
        if not ops:
            raise ValueError("need at least one collapse operator")
        dim = ops[0].dim
        if dim > MAX_DIM:
            raise ValueError(f"dimension {dim} exceeds {MAX_DIM}")
        if any(A.dim != dim for A in ops):
            raise ValueError("collapse operators have different dimensions")
        if self.rate < 0:
            raise ValueError("collapse rate must be non-negative")
        H = self.hamiltonian
        if H is not None:
            H = _as_op(H)
            if H.dim != dim:
                raise ValueError("Hamiltonian dimension mismatch")
            if not np.any(H.matrix):
                H = None
        for i, Ai in enumerate(ops):
            for Aj in ops[i + 1:]:
                c = Ai.matrix @ Aj.matrix - Aj.matrix @ Ai.matrix
                scale = max(Ai.norm() * Aj.norm(), 1e-300)
                if np.max(np.abs(c)) > COMMUTE_TOL * scale:
                    raise ValueError("collapse operators do not commute")
        basis, eig = _joint_eigenbasis(ops)
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eig)

    @classmethod
    def single(cls, A, rate: float, hamiltonian=None) -> "CollapseOperatorSet":
        return cls((_as_op(A),), rate, hamiltonian)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @property
    def channels(self) -> int:
        return len(self.operators)

    def spread(self) -> float:
        """Largest eigenvalue spread over the channels."""
        return float(np.max(self.eigenvalues.max(axis=1) - self.eigenvalues.min(axis=1)))

    def check_step(self, dt: float) -> None:
        value = dt * self.rate * self.spread() ** 2
        if value > STEP_RULE * (1 + 1e-12):
            raise StepSizeError(
                f"dt*lambda*spread^2 = {value:.4g} exceeds {STEP_RULE}; use at least "
                f"{math.ceil(value / STEP_RULE)}x more steps"
            )

    def to_eigenbasis(self, amplitudes: np.ndarray) -> np.ndarray:
        return amplitudes @ self.basis.conj()

    def from_eigenbasis(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self.basis.T


def _joint_eigenbasis(ops: Sequence[HermitianOperator]) -> tuple[np.ndarray, np.ndarray]:
    """Joint eigenbasis as columns plus eigenvalues of shape ``(channels, d)``.

    Operators that are already diagonal keep the supplied basis order, so an
    outcome index is the index of the supplied basis state.
    """
    if all(not np.any(A.matrix - np.diag(np.diagonal(A.matrix))) for A in ops):
        d = ops[0].dim
        return np.eye(d, dtype=complex), np.array([np.diagonal(A.matrix).real for A in ops])
    if len(ops) == 1:
        vals, vecs = eigendecompose(ops[0])
        return vecs, vals[None, :]
    # generic real combination separates every joint eigenspace
    weights = [1.0 / math.sqrt(2 + k) + 0.1 * k for k in range(len(ops))]
    combo = sum(w * A.matrix for w, A in zip(weights, ops))
    _, vecs = eigendecompose(HermitianOperator(combo))
    eig = np.array([np.real(np.einsum("ji,jk,ki->i", vecs.conj(), A.matrix, vecs)) for A in ops])
    return vecs, eig


@dataclass(frozen=True)
class TrajectoryRecord:
    """One sampled trajectory.

    ``states[k] * exp(log_norm2[k] / 2)`` is the unnormalized state at
    ``times[k]``. For the linear engine that state is the tilted evolution
    ``exp(B A - lam t A^2) psi0`` (Trotterized with ``H``), whose squared norm
    is the likelihood ratio against the raw Wiener measure; ``weight`` is that
    value at the final time. Nonlinear records have unit weight.
    """

    times: np.ndarray
    states: np.ndarray
    log_norm2: np.ndarray
    weight: float
    basis: np.ndarray = field(repr=False)
    engine: str = "nonlinear"
    outcome: int | None = None
    outcome_time: float | None = None

    def state(self, k: int = -1) -> StateVector:
        return StateVector(self.states[k] * math.exp(0.5 * self.log_norm2[k]))

    def basis_probabilities(self) -> np.ndarray:
        c = self.states @ self.basis.conj()
        p = np.abs(c) ** 2
        return p / p.sum(axis=1, keepdims=True)


def closed_form_simple(psi0: StateVector, A, lam: float, t: float, B_t: float) -> StateVector:
    """``exp(-(B - 2 lam t A)^2 / (4 lam t)) psi0`` evaluated eigenvalue-wise."""
    if not t > 0:
        raise ValueError("t must be positive")
    A = _as_op(A)
    vals, vecs = eigendecompose(A)
    c = vecs.conj().T @ psi0.amplitudes
    c = c * np.exp(-((B_t - 2.0 * lam * t * vals) ** 2) / (4.0 * lam * t))
    return StateVector(vecs @ c, psi0.basis_labels)


def probability_density_simple(psi0: StateVector, A, lam: float, t: float, B_t: float) -> float:
    """Squared norm of the closed-form state: the density of ``B_t`` relative
    to ``dB / sqrt(2 pi lam t)``."""
    return norm_squared(closed_form_simple(psi0, A, lam, t, B_t))


def fourier_form_eval(psi0: StateVector, A, lam: float, t: float, B_t: float,
                      quadrature_nodes: int = 64) -> StateVector:
    """Gaussian-weighted superposition of unitaries, by Gauss-Hermite quadrature."""
    if not t > 0:
        raise ValueError("t must be positive")
    A = _as_op(A)
    vals, vecs = eigendecompose(A)
    eta, w = hermegauss(quadrature_nodes)
    x = (B_t - 2.0 * lam * t * vals) / math.sqrt(2.0 * lam * t)
    factor = (w[:, None] * np.exp(1j * np.outer(eta, x))).sum(axis=0) / math.sqrt(2.0 * math.pi)
    c = vecs.conj().T @ psi0.amplitudes
    return StateVector(vecs @ (factor * c), psi0.basis_labels)


def _half_step_unitary(ops: CollapseOperatorSet, dt: float) -> np.ndarray | None:
    if ops.hamiltonian is None:
        return None
    H = ops.basis.conj().T @ ops.hamiltonian.matrix @ ops.basis
    return expm(-0.5j * dt * H)


def _first_dwell(prob_max: np.ndarray, argmax: np.ndarray, eps: float, dwell: int) -> tuple[int, int] | None:
    """First index starting ``dwell`` consecutive hits on one basis state."""
    run, cand, start = 0, -1, 0
    for k in range(prob_max.size):
        if prob_max[k] >= 1.0 - eps:
            if run > 0 and argmax[k] == cand:
                run += 1
            else:
                run, cand, start = 1, int(argmax[k]), k
            if run >= dwell:
                return cand, start
        else:
            run = 0
    return None


class _Detector:
    """Vectorized online version of ``_first_dwell`` over a batch."""

    def __init__(self, n: int, eps: float, dwell: int):
        self.eps, self.dwell = eps, dwell
        self.run = np.zeros(n, dtype=np.int64)
        self.cand = np.full(n, -1, dtype=np.int64)
        self.start = np.zeros(n, dtype=np.int64)
        self.outcome = np.full(n, -1, dtype=np.int64)
        self.step = np.full(n, -1, dtype=np.int64)

    def update(self, k: int, probs: np.ndarray) -> None:
        pending = self.outcome < 0
        # probs is basis-major, shape (d, n)
        am = probs.argmax(axis=0)
        hit = probs.max(axis=0) >= 1.0 - self.eps
        cont = hit & (am == self.cand)
        fresh = hit & ~cont
        self.run = np.where(cont, self.run + 1, fresh.astype(np.int64))
        self.start = np.where(fresh, k, self.start)
        self.cand = np.where(hit, am, -1)
        done = pending & (self.run >= self.dwell)
        self.outcome[done] = self.cand[done]
        self.step[done] = self.start[done]

    @property
    def active(self) -> bool:
        return bool((self.outcome < 0).any())


@dataclass
class BatchResult:
    """Many trajectories sharing a grid; arrays are indexed trajectory-first.

    ``coeffs`` holds recorded amplitudes in the joint eigenbasis with shape
    ``(n_traj, n_records, dim)``; ``log_norm2`` the matching log rescalings.
    """

    times: np.ndarray
    coeffs: np.ndarray
    log_norm2: np.ndarray
    weights: np.ndarray
    outcomes: np.ndarray
    outcome_times: np.ndarray
    ops: CollapseOperatorSet
    engine: str

    @property
    def n_traj(self) -> int:
        return self.coeffs.shape[0]

    def record(self, i: int) -> TrajectoryRecord:
        o = int(self.outcomes[i])
        return TrajectoryRecord(
            times=self.times,
            states=self.ops.from_eigenbasis(self.coeffs[i]),
            log_norm2=self.log_norm2[i],
            weight=float(self.weights[i]),
            basis=self.ops.basis,
            engine=self.engine,
            outcome=o if o >= 0 else None,
            outcome_time=float(self.outcome_times[i]) if o >= 0 else None,
        )

    def records(self) -> list[TrajectoryRecord]:
        return [self.record(i) for i in range(self.n_traj)]

    @staticmethod
    def concatenate(parts: Sequence["BatchResult"]) -> "BatchResult":
        p0 = parts[0]
        return BatchResult(
            times=p0.times,
            coeffs=np.concatenate([p.coeffs for p in parts]),
            log_norm2=np.concatenate([p.log_norm2 for p in parts]),
            weights=np.concatenate([p.weights for p in parts]),
            outcomes=np.concatenate([p.outcomes for p in parts]),
            outcome_times=np.concatenate([p.outcome_times for p in parts]),
            ops=p0.ops,
            engine=p0.engine,
        )


def _record_steps(n_steps: int, record_every: int | None, record_steps) -> np.ndarray:
    if record_steps is not None:
        steps = np.unique(np.asarray(record_steps, dtype=int))
        if steps.min() < 0 or steps.max() > n_steps:
            raise ValueError("record step outside grid")
        return steps
    if record_every is None:
        return np.array([0, n_steps]) if n_steps > 0 else np.array([0])
    steps = np.arange(0, n_steps + 1, record_every)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def _integrate(c: np.ndarray, ops: CollapseOperatorSet, grid: TimeGrid, increments,
               cooked: bool, rec: np.ndarray, eps: float, dwell: int, renormalize: str):
    """Shared stepping loop on basis-major coefficients ``c`` of shape ``(d, n)``.

    ``increments(k)`` returns the raw Gaussian draws for step ``k`` with shape
    ``(channels, n)``. In cooked mode they are ``dB0`` and get the drift
    ``2 lam dt <A_n>``; otherwise they are the full ``dB``.
    """
    d, n = c.shape
    lam, dt = ops.rate, grid.dt
    a = ops.eigenvalues  # (channels, d)
    aT = np.ascontiguousarray(a.T)
    a2 = ((a**2).sum(axis=0) * lam * dt)[:, None]
    U = _half_step_unitary(ops, dt)
    if U is None and not np.iscomplexobj(c):
        sq = np.square
    else:
        c = c.astype(complex)
        sq = lambda z: z.real**2 + z.imag**2  # noqa: E731
    log_n2 = np.zeros(n)
    coeffs = np.empty((n, rec.size, d), dtype=complex)
    logs = np.empty((n, rec.size))
    detector = _Detector(n, eps, dwell)
    ri = 0
    drift = 2.0 * lam * dt
    for k in range(grid.n_steps + 1):
        p2 = sq(c)
        if detector.active:
            detector.update(k, p2 / p2.sum(axis=0))
        if ri < rec.size and rec[ri] == k:
            coeffs[:, ri] = c.T
            logs[:, ri] = log_n2
            ri += 1
        if k == grid.n_steps:
            break
        if U is not None:
            c = U @ c
            p2 = sq(c)
        dB = increments(k)
        if cooked:
            dB = dB + (drift / p2.sum(axis=0)) * (a @ p2)
        expo = aT @ dB - a2
        shift = expo.max(axis=0)
        expo -= shift
        c = c * np.exp(expo)
        log_n2 += 2.0 * shift
        if U is not None:
            c = U @ c
        n2 = sq(c).sum(axis=0)
        if n2.min() < NORM_FLOOR or not np.isfinite(n2).all():
            bad = int(np.argmax((n2 < NORM_FLOOR) | ~np.isfinite(n2)))
            raise NormCollapseError(f"norm underflow at step {k} in trajectory {bad}")
        if renormalize == "always":
            c = c / np.sqrt(n2)
            log_n2 += np.log(n2)
        else:
            out = (n2 < RESCALE_LOW) | (n2 > RESCALE_HIGH)
            if out.any():
                c[:, out] /= np.sqrt(n2[out])
                log_n2[out] += np.log(n2[out])
    outcome_times = np.where(detector.outcome >= 0, grid.t0 + detector.step * dt, np.nan)
    return coeffs, logs, log_n2, c, detector.outcome, outcome_times


def _initial_coeffs(psi0: StateVector, ops: CollapseOperatorSet) -> np.ndarray:
    if psi0.dim != ops.dim:
        raise ValueError("state and operator dimensions differ")
    if norm_squared(psi0) <= 0:
        raise ValueError("initial state has zero norm")
    c0 = ops.to_eigenbasis(psi0.amplitudes)
    if not np.any(c0.imag):
        c0 = c0.real.copy()
    return c0


def _chunks(n: int, size: int = CHUNK):
    for lo in range(0, n, size):
        yield lo, min(n, lo + size)


def run_nonlinear_batch(psi0: StateVector, ops: CollapseOperatorSet, grid: TimeGrid, seed: int,
                        streams: Sequence[int], record_every: int | None = None, record_steps=None,
                        epsilon: float = DEFAULT_EPSILON, dwell_steps: int = DEFAULT_DWELL,
                        check_step: bool = True) -> BatchResult:
    """Sample physical trajectories directly; trajectory ``i`` uses stream ``streams[i]``.

    Without ``record_every``/``record_steps`` only the first and last states
    are stored; outcome detection still inspects every step.
    """
    if check_step:
        ops.check_step(grid.dt)
    streams = list(streams)
    sd = math.sqrt(2.0 * collapse_diffusion(ops.rate) * grid.dt)
    c0 = _initial_coeffs(psi0, ops)
    n2 = float(np.sum(np.abs(c0) ** 2))
    c0 = c0 / math.sqrt(n2)
    rec = _record_steps(grid.n_steps, record_every, record_steps)
    parts = []
    for lo, hi in _chunks(len(streams)):
        m = hi - lo
        draws = np.empty((grid.n_steps, ops.channels, m))
        for j, s in enumerate(streams[lo:hi]):
            draws[:, :, j] = make_rng(seed, s).standard_normal((grid.n_steps, ops.channels))
        draws *= sd
        c = np.repeat(c0[:, None], m, axis=1)
        coeffs, logs, _, _, outcomes, otimes = _integrate(
            c, ops, grid, draws.__getitem__, True, rec, epsilon, dwell_steps, "always")
        # report the initial norm so recorded states reproduce psi0 at t0
        logs[:] = math.log(n2)
        parts.append(BatchResult(grid.t0 + rec * grid.dt, coeffs, logs, np.ones(m), outcomes, otimes,
                                 ops, "nonlinear"))
    return BatchResult.concatenate(parts)


def run_linear_batch(psi0: StateVector, ops: CollapseOperatorSet, grid: TimeGrid, increments: np.ndarray,
                     record_every: int | None = None, record_steps=None,
                     epsilon: float = DEFAULT_EPSILON, dwell_steps: int = DEFAULT_DWELL,
                     check_step: bool = True) -> BatchResult:
    """Tilted linear evolution on given increments ``dB`` of shape ``(n, n_steps, channels)``."""
    if check_step:
        ops.check_step(grid.dt)
    increments = np.asarray(increments, dtype=float)
    if increments.ndim == 2:
        increments = increments[:, :, None]
    n = increments.shape[0]
    if increments.shape[1:] != (grid.n_steps, ops.channels):
        raise ValueError(f"increments shape {increments.shape} does not match grid/channels")
    c0 = _initial_coeffs(psi0, ops)
    rec = _record_steps(grid.n_steps, record_every, record_steps)
    parts = []
    for lo, hi in _chunks(n):
        inc = np.ascontiguousarray(increments[lo:hi].transpose(1, 2, 0))
        c = np.repeat(c0[:, None], hi - lo, axis=1)
        coeffs, logs, log_final, c_final, outcomes, otimes = _integrate(
            c, ops, grid, inc.__getitem__, False, rec, epsilon, dwell_steps, "bounds")
        weights = (np.abs(c_final) ** 2).sum(axis=0) * np.exp(log_final)
        parts.append(BatchResult(grid.t0 + rec * grid.dt, coeffs, logs, weights, outcomes, otimes,
                                 ops, "linear"))
    return BatchResult.concatenate(parts)


def run_random_phase_batch(psi0: StateVector, ops: CollapseOperatorSet, grid: TimeGrid, seed: int,
                       streams: Sequence[int], record_every: int | None = None, record_steps=None,
                       epsilon: float = DEFAULT_EPSILON, dwell_steps: int = DEFAULT_DWELL) -> BatchResult:
    """Trajectories ``exp(-i sum_n B_n(t) A_n) psi0`` with Brownian ``B_n``, ``Var[B_n(t)] = lam t``.

    Moduli of the collapse-basis amplitudes never change, so no trajectory
    collapses even though the ensemble density matches the collapse one.
    """
    if ops.hamiltonian is not None:
        raise ValueError("random-phase trajectories are defined for H = 0")
    streams = list(streams)
    n = len(streams)
    rec = _record_steps(grid.n_steps, record_every, record_steps)
    sd = math.sqrt(2.0 * collapse_diffusion(ops.rate) * grid.dt)
    B = np.zeros((n, rec.size, ops.channels))
    for i, s in enumerate(streams):
        steps = make_rng(seed, s).standard_normal((grid.n_steps, ops.channels)) * sd
        path = np.vstack([np.zeros((1, ops.channels)), np.cumsum(steps, axis=0)])
        B[i] = path[rec]
    c0 = _initial_coeffs(psi0, ops).astype(complex)
    phase = np.einsum("irc,cd->ird", B, ops.eigenvalues)
    coeffs = c0[None, None, :] * np.exp(-1j * phase)
    det = _Detector(n, epsilon, dwell_steps)
    p0 = np.abs(c0) ** 2 / np.sum(np.abs(c0) ** 2)
    probs = np.repeat(p0[:, None], n, axis=1)
    for k in range(min(grid.n_steps + 1, dwell_steps)):
        det.update(k, probs)
    otimes = np.where(det.outcome >= 0, grid.t0 + det.step * grid.dt, np.nan)
    logs = np.full((n, rec.size), math.log(norm_squared(psi0)))
    coeffs = coeffs / math.sqrt(norm_squared(psi0))
    return BatchResult(grid.t0 + rec * grid.dt, coeffs, logs, np.ones(n), det.outcome, otimes, ops,
                       "random_phase")


def evolve_linear(psi0: StateVector, ops: CollapseOperatorSet, noise: NoisePath, record_every: int = 1,
                  epsilon: float = DEFAULT_EPSILON, dwell_steps: int = DEFAULT_DWELL) -> TrajectoryRecord:
    """Time-ordered linear evolution driven by one noise path.

    The returned weight is the probability density of ``noise`` relative to
    the raw Wiener measure with ``Var[dB] = lam dt``.
    """
    if noise.channels != ops.channels:
        raise ValueError(f"noise has {noise.channels} channels, operator set has {ops.channels}")
    dB = noise.increments().T[None, :, :]
    return run_linear_batch(psi0, ops, noise.grid, dB, record_every=record_every,
                            epsilon=epsilon, dwell_steps=dwell_steps).record(0)


def evolve_nonlinear(psi0: StateVector, ops: CollapseOperatorSet, seed: int, stream: int, grid: TimeGrid,
                     record_every: int = 1, epsilon: float = DEFAULT_EPSILON,
                     dwell_steps: int = DEFAULT_DWELL) -> TrajectoryRecord:
    """Normalized evolution under the physical noise measure (unit weight)."""
    return run_nonlinear_batch(psi0, ops, grid, seed, [stream], record_every=record_every,
                               epsilon=epsilon, dwell_steps=dwell_steps).record(0)


def raw_gauge_log_factor(increments: np.ndarray, lam: float, dt: float) -> np.ndarray:
    """``log`` of the factor turning the tilted state into the literal
    ``T exp(-(1/4 lam) int (w - 2 lam A)^2)`` state: ``-sum dB^2 / (4 lam dt)``."""
    inc = np.asarray(increments, dtype=float)
    return -(inc**2).sum(axis=tuple(range(1, inc.ndim))) / (4.0 * lam * dt)


@dataclass(frozen=True)
class LinearSample:
    """Raw-measure trajectories with the proposal correction for the endpoint."""

    batch: BatchResult
    proposal_ratio: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return self.batch.weights * self.proposal_ratio


def sample_linear_ensemble(psi0: StateVector, ops: CollapseOperatorSet, grid: TimeGrid, seed: int,
                           streams: Sequence[int], endpoint_width: float = 1.0, **kwargs) -> LinearSample:
    """Linear engine on raw-measure noise, optionally with a widened endpoint.

    Each path is a Brownian bridge (``Var[dB] = lam dt``) pinned to an
    endpoint ``B(T) ~ N(0, endpoint_width * lam * T)``. ``proposal_ratio``
    converts to raw-measure weights; ``endpoint_width = 1`` is plain raw
    sampling. Widening keeps the importance weights usable at large
    ``lam T``, where raw sampling almost never visits the collapse branches.
    """
    lam, dt, n_steps = ops.rate, grid.dt, grid.n_steps
    var_step = 2.0 * collapse_diffusion(lam) * dt
    var_end = var_step * n_steps
    streams = list(streams)
    n, ch = len(streams), ops.channels
    inc = np.empty((n, n_steps, ch))
    ratio = np.ones(n)
    t_frac = np.arange(1, n_steps + 1) / n_steps
    for i, s in enumerate(streams):
        rng = make_rng(seed, s)
        steps = rng.standard_normal((n_steps, ch)) * math.sqrt(var_step)
        if endpoint_width != 1.0:
            end = rng.standard_normal(ch) * math.sqrt(endpoint_width * var_end)
            walk = np.cumsum(steps, axis=0)
            bridge = walk - t_frac[:, None] * (walk[-1] - end)[None, :]
            steps = np.diff(np.vstack([np.zeros((1, ch)), bridge]), axis=0)
            # density ratio N(0, var_end) / N(0, w var_end) at the endpoint
            log_r = (0.5 * math.log(endpoint_width) * ch
                     - 0.5 * (end**2).sum() / var_end * (1.0 - 1.0 / endpoint_width))
            ratio[i] = math.exp(log_r)
        inc[i] = steps
    batch = run_linear_batch(psi0, ops, grid, inc, **kwargs)
    return LinearSample(batch, ratio)


def _eigen_split(A, psi0: StateVector):
    A = _as_op(A)
    vals, vecs = eigendecompose(A)
    return vals, vecs, vecs.conj().T @ psi0.amplitudes


def ou_effective_time(alpha: float, t: float) -> float:
    """``int int_0^t (alpha/2) exp(-alpha|t1 - t2|) = t - (1 - exp(-alpha t)) / alpha``."""
    return t - (-math.expm1(-alpha * t)) / alpha


def ou_weighted_noise(noise: NoisePath, alpha: float) -> float:
    """``B'(t) = int_0^t w(t1) [1 - (exp(-alpha t1) + exp(-alpha (t - t1))) / 2] dt1``.

    Each interval's weight is integrated exactly, so only the piecewise
    constant reading of ``w`` is an approximation.
    """
    g = noise.grid
    t = g.duration
    lo = np.arange(g.n_steps) * g.dt
    hi = lo + g.dt
    # int_lo^hi [1 - (e^{-a s} + e^{-a (t - s)}) / 2] ds, per interval, divided by dt
    part = (np.exp(-alpha * lo) - np.exp(-alpha * hi)) + (np.exp(-alpha * (t - hi)) - np.exp(-alpha * (t - lo)))
    mean_w = 1.0 - part / (2.0 * alpha * g.dt)
    dB = noise.increments()[0]
    return float(np.sum(dB * mean_w))


def evolve_nonmarkovian_closed(psi0: StateVector, A, lam: float, alpha: float, noise: NoisePath) -> StateVector:
    """Closed-form ``H = 0`` solution for the exponential-correlation kernel.

    Equal to ``closed_form_simple`` with ``B -> B'`` and the effective time
    ``t - (1 - exp(-alpha t)) / alpha``; the a-independent norm factor is dropped.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    t = noise.grid.duration
    vals, vecs, c = _eigen_split(A, psi0)
    if t <= 0:
        return psi0
    tau = ou_effective_time(alpha, t)
    Bp = ou_weighted_noise(noise, alpha)
    c = c * np.exp(-((Bp - 2.0 * lam * vals * tau) ** 2) / (4.0 * lam * tau))
    return StateVector(vecs @ c, psi0.basis_labels)


class ScaledState(NamedTuple):
    """Unit-norm ``state`` with ``log_norm2``: the true vector is ``state * exp(log_norm2 / 2)``."""

    state: StateVector
    log_norm2: float


def _scaled(vecs: np.ndarray, c: np.ndarray, log_amp: np.ndarray, labels) -> ScaledState:
    shift = float(np.max(log_amp[np.abs(c) > 0])) if np.any(np.abs(c) > 0) else 0.0
    v = vecs @ (c * np.exp(log_amp - shift))
    n2 = float(np.vdot(v, v).real)
    return ScaledState(StateVector(v / math.sqrt(n2), labels), math.log(n2) + 2.0 * shift)


def evolve_windowed(psi0: StateVector, A, lam: float, noise: NoisePath, kernel: Kernel,
                    window: tuple[int, int] | None = None) -> ScaledState:
    """``H = 0`` evolution whose exponent is the kernel-weighted quadratic form
    ``-(1/4 lam) sum_ij f_i G_ij f_j dt^2``, ``f = w - 2 lam A_window``.

    The collapse operator acts only on grid steps inside ``window`` (default:
    the whole grid); noise outside the window still enters the quadratic form.
    With the whole grid this is the non-Markovian evolution; with a strict
    sub-window it is the all-time-dependent variant.
    """
    if noise.channels != 1:
        raise ValueError("single-channel noise expected")
    g = noise.grid
    w = noise.to_white().values[0]
    i0, i1 = window or (0, g.n_steps)
    mask = np.zeros(g.n_steps)
    mask[i0:i1] = 1.0
    vals, vecs, c = _eigen_split(A, psi0)
    gram = gram_matrix(kernel, g) * g.dt**2
    # quadratic form expanded in powers of the eigenvalue
    Gw = gram @ w
    Gm = gram @ mask
    ww, mw, mm = float(w @ Gw), float(mask @ Gw), float(mask @ Gm)
    log_amp = -(ww - 4.0 * lam * vals * mw + 4.0 * lam**2 * vals**2 * mm) / (4.0 * lam)
    return _scaled(vecs, c, log_amp, psi0.basis_labels)


def evolve_nonmarkovian(psi0: StateVector, A, lam: float, noise: NoisePath, kernel: Kernel) -> ScaledState:
    """Discretized kernel-weighted evolution on the whole grid (``H = 0``)."""
    return evolve_windowed(psi0, A, lam, noise, kernel)


def evolve_linear_raw(psi0: StateVector, A, lam: float, noise: NoisePath,
                      window: tuple[int, int] | None = None) -> ScaledState:
    """Markovian ``H = 0`` evolution with the literal factor
    ``exp(-dt (w - 2 lam A)^2 / (4 lam))`` per step (no tilt)."""
    g = noise.grid
    w = noise.to_white().values[0]
    i0, i1 = window or (0, g.n_steps)
    mask = np.zeros(g.n_steps)
    mask[i0:i1] = 1.0
    vals, vecs, c = _eigen_split(A, psi0)
    log_amp = np.array([-(np.sum((w - 2.0 * lam * a * mask) ** 2) * g.dt) / (4.0 * lam) for a in vals])
    return _scaled(vecs, c, log_amp, psi0.basis_labels)


def evolve_time_smeared(psi0: StateVector, A, lam: float, noise: NoisePath, kernel: Kernel,
                        window: tuple[int, int] | None = None) -> ScaledState:
    """Markovian-looking evolution with a smeared collapse operator (``H = 0``).

    ``noise`` is the kernel-correlated noise of ``evolve_windowed``; it is
    smeared with ``G^(1/2)`` together with the windowed operator and the
    result is integrated as a white-noise exponent over the padded support.
    """
    g = noise.grid
    w = noise.to_white().values[0]
    i0, i1 = window or (0, g.n_steps)
    mask = np.zeros(g.n_steps)
    mask[i0:i1] = 1.0
    n = g.n_steps
    m = 4 * n
    pad = np.zeros((2, m))
    pad[0, :n], pad[1, :n] = w, mask
    h = sqrt_transfer(kernel, g.dt, m)
    ws, ms = np.fft.ifft(np.fft.fft(pad, axis=1) * h, axis=1).real
    vals, vecs, c = _eigen_split(A, psi0)
    log_amp = np.array([-(np.sum((ws - 2.0 * lam * a * ms) ** 2) * g.dt) / (4.0 * lam) for a in vals])
    return _scaled(vecs, c, log_amp, psi0.basis_labels)


def detect_outcome(record: TrajectoryRecord, epsilon: float = DEFAULT_EPSILON,
                   dwell_steps: int = DEFAULT_DWELL) -> tuple[int, float] | None:
    """First basis index held with probability ``>= 1 - epsilon`` for ``dwell_steps`` records."""
    p = record.basis_probabilities()
    am = p.argmax(axis=1)
    hit = _first_dwell(p[np.arange(p.shape[0]), am], am, epsilon, dwell_steps)
    if hit is None:
        return None
    k, idx = hit
    return k, float(record.times[idx])

