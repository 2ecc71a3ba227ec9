"""Density-matrix propagation and Monte-Carlo ensemble statistics.

The analytic propagators act in the joint eigenbasis of the collapse
operators, where an ``H = 0`` collapse only damps the off-diagonal elements.
``mc_ensemble_density`` reduces sampled trajectories (weighted linear, unit
weight nonlinear, or random-phase) to the same objects so the two pictures
can be compared number for number.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import integrate, stats
from scipy.linalg import expm

from .collapse_engine import BatchResult, CollapseOperatorSet, TrajectoryRecord
from .noise_paths import Kernel, TimeGrid, kernel_inverse_infinite, make_rng
from .quantum_core import DensityMatrix, HermitianOperator, StateVector, norm_squared

CI_LEVEL = 0.997
EXACT_BINOMIAL_BELOW = 30


def _as_ops(ops_or_A, lam: float | None = None) -> CollapseOperatorSet:
    if isinstance(ops_or_A, CollapseOperatorSet):
        return ops_or_A
    if lam is None:
        raise ValueError("a bare operator needs a collapse rate")
    return CollapseOperatorSet.single(ops_or_A, lam)


def _require_static(ops: CollapseOperatorSet) -> None:
    if ops.hamiltonian is not None:
        raise ValueError("analytic propagation is limited to H = 0; use the Lindblad or Monte-Carlo routes")


def _eigen_damping(ops: CollapseOperatorSet, exponent_per_pair: np.ndarray) -> np.ndarray:
    """``exp(-exponent * sum_n (a_j - a_k)^2)`` over basis pairs."""
    diff2 = sum(np.subtract.outer(a, a) ** 2 for a in ops.eigenvalues)
    return np.exp(-exponent_per_pair * diff2)


def _conjugate(ops: CollapseOperatorSet, rho: np.ndarray, factor: np.ndarray) -> np.ndarray:
    V = ops.basis
    return V @ ((V.conj().T @ rho @ V) * factor) @ V.conj().T


def propagate_density_analytic(rho0: DensityMatrix, ops: CollapseOperatorSet, t: float) -> DensityMatrix:
    """``rho_jk(t) = rho_jk(0) exp(-(lam t / 2) sum_n (a_j - a_k)^2)`` in the joint eigenbasis."""
    _require_static(ops)
    if t < 0:
        raise ValueError("t must be non-negative")
    factor = _eigen_damping(ops, 0.5 * ops.rate * t)
    return DensityMatrix(_conjugate(ops, rho0.matrix, factor))


def propagate_density_fourier(rho0: DensityMatrix, ops: CollapseOperatorSet, t: float,
                              quadrature_nodes: int = 64) -> DensityMatrix:
    """Gaussian-weighted sum of unitary conjugations ``exp(-i eta s A) rho exp(i eta s A)``,
    ``s = sqrt(2 lam t)``, one channel at a time (the channels commute)."""
    _require_static(ops)
    eta, w = hermgauss(quadrature_nodes)
    w = w / math.sqrt(math.pi)
    s = math.sqrt(2.0 * ops.rate * t)
    V = ops.basis
    r = V.conj().T @ rho0.matrix @ V
    for a in ops.eigenvalues:
        out = np.zeros_like(r, dtype=complex)
        for e, wi in zip(eta, w):
            u = np.exp(-1j * e * s * a)
            out += wi * (u[:, None] * r * u.conj()[None, :])
        r = out
    return DensityMatrix(V @ r @ V.conj().T)


def lindblad_superoperator(ops: CollapseOperatorSet) -> np.ndarray:
    """Generator of ``d rho/dt = -i[H, rho] - (lam/2) sum_n [A_n, [A_n, rho]]`` acting on
    row-major ``vec(rho)``."""
    d = ops.dim
    eye = np.eye(d)
    L = np.zeros((d * d, d * d), dtype=complex)
    if ops.hamiltonian is not None:
        H = ops.hamiltonian.matrix
        L += -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for A in ops.operators:
        M = A.matrix
        A2 = M @ M
        L += -0.5 * ops.rate * (np.kron(A2, eye) + np.kron(eye, A2.T) - 2.0 * np.kron(M, M.T))
    return L


def propagate_density_lindblad(rho0: DensityMatrix, ops: CollapseOperatorSet, t: float) -> DensityMatrix:
    """Exact ensemble density for any ``H`` by exponentiating the superoperator."""
    d = ops.dim
    vec = expm(lindblad_superoperator(ops) * t) @ rho0.matrix.reshape(-1)
    m = vec.reshape(d, d)
    return DensityMatrix(0.5 * (m + m.conj().T))


def kernel_double_integral(kernel: Kernel, t: float) -> float:
    """``int_0^t int_0^t G(t1 - t2) = 2 int_0^t (t - tau) G(tau) d tau``."""
    if t <= 0:
        return 0.0
    if kernel.is_delta:
        return float(t)
    val, _ = integrate.quad(lambda tau: (t - tau) * float(kernel.value(tau)), 0.0, t,
                            limit=500, epsabs=1e-13, epsrel=1e-11)
    return 2.0 * val


def nonmarkovian_density_offdiag(rho0: DensityMatrix, A, lam: float, kernel: Kernel, t: float) -> DensityMatrix:
    """``H = 0`` density with the kernel-weighted exponent
    ``-(lam/2) (a_j - a_k)^2 int int_0^t G``."""
    ops = _as_ops(A, lam)
    _require_static(ops)
    factor = _eigen_damping(ops, 0.5 * ops.rate * kernel_double_integral(kernel, t))
    return DensityMatrix(_conjugate(ops, rho0.matrix, factor))


def fterm_density_exponent(lam: float, kernel: Kernel, grid: TimeGrid, F: np.ndarray,
                           a_j: float, a_k: float) -> complex:
    """Log of ``rho_jk(T) / rho_jk(0)`` for the F-term generalization (``H = 0``, fixed ``A``).

    ``F[i, l]`` samples ``F(t_i, t_l)`` at the step midpoints; only ``l <= i``
    enters (the diagonal with half weight). The modified kernel is
    ``G'(t, t') = G(t - t') + int_0^t int_0^t' F(t, t1) Ginv(t1 - t2) F(t', t2)``
    with ``Ginv`` the whole-axis inverse of ``G``.
    """
    n, dt = grid.n_steps, grid.dt
    F = np.asarray(F, dtype=float)
    if F.shape != (n, n):
        raise ValueError("F must be sampled on the n_steps x n_steps midpoint grid")
    Fc = np.tril(F, -1) + 0.5 * np.diag(np.diag(F))
    mid = grid.starts + 0.5 * dt - grid.t0
    if kernel.is_delta:
        G = np.eye(n) / dt
    else:
        G = kernel.value(np.subtract.outer(mid, mid))
    Ginv = kernel_inverse_infinite(kernel, grid)
    Gp = G + (Fc @ Ginv @ Fc.T) * dt**2
    double = float(Gp.sum()) * dt**2
    single = float(Fc.sum()) * dt**2
    return complex(-0.5 * lam * (a_j - a_k) ** 2 * double, -lam * (a_j - a_k) * (a_j + a_k) * single)


@dataclass
class EnsembleStats:
    """Weighted reduction of a trajectory ensemble.

    ``offdiag_series[r, p]`` is the ensemble ``rho_jk`` at ``times[r]`` for
    the basis pair ``pairs[p]`` (collapse basis), with standard errors in
    ``offdiag_stderr``. ``outcome_fraction`` uses the trajectory weights.
    """

    n_trajectories: int
    outcome_counts: np.ndarray
    mean_density: DensityMatrix
    offdiag_series: np.ndarray
    times: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    offdiag_stderr: np.ndarray
    outcome_fraction: np.ndarray
    outcome_stderr: np.ndarray
    outcome_ci: np.ndarray
    effective_size: float
    mean_weight: float
    mean_weight_stderr: float
    engine: str
    ci_level: float = CI_LEVEL
    density_series: np.ndarray = field(default=None, repr=False)

    @property
    def detected_fraction(self) -> float:
        return float(self.outcome_counts.sum()) / self.n_trajectories

    def expectation_series(self, op) -> np.ndarray:
        """Ensemble ``Tr(rho(t) X)`` at the recorded times (no error bar)."""
        X = op.matrix if isinstance(op, HermitianOperator) else np.asarray(op)
        return np.real(np.einsum("rij,ji->r", self.density_series, X))

    def to_json(self) -> str:
        def cx(z):
            return [[float(v.real), float(v.imag)] for v in np.ravel(z)]

        doc = {
            "engine": self.engine,
            "n_trajectories": int(self.n_trajectories),
            "outcome_counts": [int(c) for c in self.outcome_counts],
            "outcome_fraction": [float(f) for f in self.outcome_fraction],
            "outcome_stderr": [float(s) for s in self.outcome_stderr],
            "outcome_ci": [[float(lo), float(hi)] for lo, hi in self.outcome_ci],
            "ci_level": self.ci_level,
            "effective_size": float(self.effective_size),
            "mean_weight": float(self.mean_weight),
            "mean_weight_stderr": float(self.mean_weight_stderr),
            "mean_density": [cx(row) for row in self.mean_density.matrix],
            "times": [float(t) for t in self.times],
            "pairs": [list(p) for p in self.pairs],
            "offdiag_series": [cx(row) for row in self.offdiag_series],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def offdiag_csv_rows(self) -> list[list[float]]:
        rows = []
        for r, t in enumerate(self.times):
            row = [float(t)]
            for p in range(len(self.pairs)):
                z = self.offdiag_series[r, p]
                row += [float(z.real), float(z.imag), float(abs(z)), float(self.offdiag_stderr[r, p])]
            rows.append(row)
        return rows


def outcome_interval(count: float, n: float, level: float = CI_LEVEL) -> tuple[float, float]:
    """Two-sided interval on a fraction: exact binomial below 30 counts, normal otherwise."""
    if n <= 0:
        return 0.0, 1.0
    if count < EXACT_BINOMIAL_BELOW or n - count < EXACT_BINOMIAL_BELOW:
        k = int(round(count))
        nn = int(round(n))
        alpha = 1.0 - level
        lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, nn - k + 1))
        hi = 1.0 if k == nn else float(stats.beta.ppf(1 - alpha / 2, k + 1, nn - k))
        return lo, hi
    z = float(stats.norm.ppf(0.5 + level / 2))
    f = count / n
    s = math.sqrt(f * (1 - f) / n)
    return max(0.0, f - z * s), min(1.0, f + z * s)


def _weighted_mean_and_error(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Self-normalized weighted mean over axis 0 and its delta-method standard error."""
    W = w.sum()
    shape = (-1,) + (1,) * (x.ndim - 1)
    wn = (w / W).reshape(shape)
    mean = (wn * x).sum(axis=0)
    dev = x - mean
    var = (wn**2 * np.abs(dev) ** 2).sum(axis=0)
    return mean, np.sqrt(var)


def _stats_from_arrays(times, coeffs, basis, weights, outcomes, engine) -> EnsembleStats:
    n, n_rec, d = coeffs.shape
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)) or weights.sum() <= 0:
        raise ValueError("weights must be finite, non-negative and not all zero")
    n2 = (np.abs(coeffs) ** 2).sum(axis=2, keepdims=True)
    u = coeffs / np.sqrt(n2)
    pairs = tuple((j, k) for j in range(d) for k in range(j + 1, d))
    jj = np.array([p[0] for p in pairs], dtype=int)
    kk = np.array([p[1] for p in pairs], dtype=int)
    if pairs:
        samples = u[:, :, jj] * u[:, :, kk].conj()
        series, serr = _weighted_mean_and_error(samples, weights)
    else:
        series = np.zeros((n_rec, 0), dtype=complex)
        serr = np.zeros((n_rec, 0))
    W = weights / weights.sum()
    rho_eig = np.einsum("i,irj,irk->rjk", W, u, u.conj())
    rho_orig = basis @ rho_eig @ basis.conj().T
    rho_final = rho_orig[-1]
    rho_final = 0.5 * (rho_final + rho_final.conj().T)

    counts = np.array([(outcomes == k).sum() for k in range(d)], dtype=int)
    onehot = (outcomes[:, None] == np.arange(d)[None, :]).astype(float)
    frac, ferr = _weighted_mean_and_error(onehot, weights)
    ess = weights.sum() ** 2 / np.sum(weights**2)
    ci = np.array([outcome_interval(f * ess, ess) for f in frac]) if engine == "linear" else \
        np.array([outcome_interval(c, n) for c in counts])
    mw = float(weights.mean())
    mw_err = float(weights.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EnsembleStats(
        n_trajectories=n,
        outcome_counts=counts,
        mean_density=DensityMatrix(rho_final / np.trace(rho_final).real),
        offdiag_series=series,
        times=np.asarray(times, dtype=float),
        pairs=pairs,
        offdiag_stderr=serr,
        outcome_fraction=frac,
        outcome_stderr=ferr,
        outcome_ci=ci,
        effective_size=float(ess),
        mean_weight=mw,
        mean_weight_stderr=mw_err,
        engine=engine,
        density_series=rho_orig,
    )


def mc_ensemble_density(records: Sequence[TrajectoryRecord] | BatchResult,
                        weights: np.ndarray | None = None) -> EnsembleStats:
    """Weight-normalized ensemble average of ``|psi><psi| / <psi|psi>``.

    ``records`` is either a list of trajectory records or a ``BatchResult``.
    ``weights`` overrides the stored weights (e.g. proposal-corrected
    linear weights). Records from different engines cannot be pooled.
    """
    if isinstance(records, BatchResult):
        b = records
        w = b.weights if weights is None else np.asarray(weights, dtype=float)
        return _stats_from_arrays(b.times, b.coeffs, b.ops.basis, w, b.outcomes, b.engine)
    records = list(records)
    if not records:
        raise ValueError("no records")
    engines = {r.engine for r in records}
    if len(engines) > 1:
        raise ValueError(f"cannot pool records from engines {sorted(engines)}: weight conventions differ")
    r0 = records[0]
    for r in records[1:]:
        if r.times.shape != r0.times.shape or not np.allclose(r.times, r0.times):
            raise ValueError("records do not share a time grid")
        if not np.allclose(r.basis, r0.basis):
            raise ValueError("records do not share a collapse basis")
    coeffs = np.stack([r.states @ r0.basis.conj() for r in records])
    w = np.array([r.weight for r in records]) if weights is None else np.asarray(weights, dtype=float)
    outcomes = np.array([-1 if r.outcome is None else r.outcome for r in records])
    return _stats_from_arrays(r0.times, coeffs, r0.basis, w, outcomes, engines.pop())


def ensemble_expectation(batch: BatchResult, op, weights: np.ndarray | None = None
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Weighted ensemble mean of ``<psi|X|psi>/<psi|psi>`` at each recorded time, with standard errors."""
    X = op.matrix if isinstance(op, HermitianOperator) else np.asarray(op)
    V = batch.ops.basis
    Xe = V.conj().T @ X @ V
    c = batch.coeffs
    n2 = (np.abs(c) ** 2).sum(axis=2)
    vals = np.real(np.einsum("irj,jk,irk->ir", c.conj(), Xe, c)) / n2
    w = batch.weights if weights is None else np.asarray(weights, dtype=float)
    return _weighted_mean_and_error(vals, w)


def ensemble_density_with_errors(batch: BatchResult, weights: np.ndarray | None = None,
                                 index: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble density in the supplied basis at record ``index`` and its element-wise standard error."""
    c = batch.coeffs[:, index, :] @ batch.ops.basis.T
    u = c / np.linalg.norm(c, axis=1, keepdims=True)
    rhos = u[:, :, None] * u.conj()[:, None, :]
    w = batch.weights if weights is None else np.asarray(weights, dtype=float)
    return _weighted_mean_and_error(rhos, w)


@dataclass(frozen=True)
class PhaseEnsemble:
    density: DensityMatrix
    stderr: np.ndarray
    n_samples: int


def random_phase_ensemble(psi0: StateVector, A, lam: float, t: float, n_samples: int, seed: int,
                          stream: int = 0) -> PhaseEnsemble:
    """Average of ``exp(-i B0 A)|psi0><psi0|exp(i B0 A)`` with ``B0 ~ N(0, lam t)``,
    plus element-wise standard errors."""
    ops = _as_ops(A, lam)
    _require_static(ops)
    if ops.channels != 1:
        raise ValueError("single collapse operator expected")
    n2 = norm_squared(psi0)
    if n2 <= 0:
        raise ValueError("initial state has zero norm")
    rho = np.outer(psi0.amplitudes, psi0.amplitudes.conj()) / n2
    if t <= 0 or lam == 0 or n_samples <= 0:
        return PhaseEnsemble(DensityMatrix(rho), np.zeros(rho.shape), max(n_samples, 0))
    b0 = make_rng(seed, stream).standard_normal(n_samples) * math.sqrt(lam * t)
    V = ops.basis
    r = V.conj().T @ rho @ V
    diff = np.subtract.outer(ops.eigenvalues[0], ops.eigenvalues[0])
    phases = np.exp(-1j * b0[:, None, None] * diff[None, :, :])
    mean = r * phases.mean(axis=0)
    err_eig = np.abs(r) * phases.std(axis=0) / math.sqrt(n_samples)
    # errors are reported in the collapse basis, where the phases act element-wise
    return PhaseEnsemble(DensityMatrix(V @ mean @ V.conj().T), err_eig, n_samples)


def random_phase_ensemble_density(psi0: StateVector, A, lam: float, t: float, n_samples: int,
                                  seed: int) -> DensityMatrix:
    return random_phase_ensemble(psi0, A, lam, t, n_samples, seed).density
