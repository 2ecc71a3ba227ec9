import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collapselab.collapse_engine import CollapseOperatorSet, run_nonlinear_batch
from collapselab.ensemble_analysis import (
    ensemble_density_with_errors,
    ensemble_expectation,
    lindblad_superoperator,
    mc_ensemble_density,
    nonmarkovian_density_offdiag,
    outcome_interval,
    propagate_density_analytic,
    propagate_density_fourier,
    propagate_density_lindblad,
    random_phase_ensemble,
)
from collapselab.noise_paths import Kernel, TimeGrid
from collapselab.quantum_core import DensityMatrix, HermitianOperator, pure_density


def random_density(seed, d):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = m @ m.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


def test_offdiag_frozen_value(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    rho = propagate_density_analytic(pure_density(born_state), ops, 0.5).matrix
    # 0.48 exp(-lam t (a1 - a2)^2 / 2)
    assert rho[0, 1].real == pytest.approx(0.48 * math.exp(-1.0))
    assert rho[0, 0].real == pytest.approx(0.36)


@given(st.integers(0, 2**31), st.integers(2, 5), st.floats(0.0, 5.0))
def test_three_propagators_agree(seed, d, t):
    rho0 = random_density(seed, d)
    ops = CollapseOperatorSet.single(HermitianOperator.diag(np.linspace(-1, 1, d)), 0.7)
    a = propagate_density_analytic(rho0, ops, t).matrix
    assert np.allclose(a, propagate_density_fourier(rho0, ops, t).matrix, atol=1e-10)
    assert np.allclose(a, propagate_density_lindblad(rho0, ops, t).matrix, atol=1e-10)


@given(st.integers(0, 2**31), st.floats(0.0, 3.0))
def test_lindblad_with_hamiltonian_preserves_trace_and_positivity(seed, t):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((3, 3))
    ops = CollapseOperatorSet.single(HermitianOperator.diag([1.0, 0.0, -1.0]), 0.5, HermitianOperator(h + h.T))
    rho = propagate_density_lindblad(random_density(seed, 3), ops, t).matrix
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.min(np.linalg.eigvalsh(rho)) > -1e-10


def test_superoperator_shape_and_kernel():
    ops = CollapseOperatorSet.single(HermitianOperator.diag([1.0, -1.0]), 2.0)
    L = lindblad_superoperator(ops)
    assert L.shape == (4, 4)
    # diagonal populations are stationary, coherences decay at 2 lam
    assert np.allclose(np.diag(L), [0, -4, -4, 0])


def test_delta_kernel_reduces_to_markov(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    rho0 = pure_density(born_state)
    a = nonmarkovian_density_offdiag(rho0, pauli_z, 1.0, Kernel.delta(), 0.8).matrix
    assert np.allclose(a, propagate_density_analytic(rho0, ops, 0.8).matrix)
    slow = nonmarkovian_density_offdiag(rho0, pauli_z, 1.0, Kernel.ornstein_uhlenbeck(2.0), 0.8).matrix
    assert abs(slow[0, 1]) > abs(a[0, 1])


def test_outcome_interval_exact_and_normal():
    lo, hi = outcome_interval(0, 10, 0.997)
    assert lo == 0.0 and hi == pytest.approx(1 - 0.0015 ** 0.1)
    lo, hi = outcome_interval(3600, 10_000, 0.997)
    assert (lo + hi) / 2 == pytest.approx(0.36)
    assert hi - lo == pytest.approx(2 * 2.9677379253417833 * 0.0048, rel=1e-6)


@given(st.integers(0, 200), st.integers(1, 200))
def test_outcome_interval_contains_fraction(k, extra):
    n = k + extra
    lo, hi = outcome_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_random_phase_matches_analytic(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    ph = random_phase_ensemble(born_state, pauli_z, 1.0, 0.4, 200_000, seed=1)
    exact = propagate_density_analytic(pure_density(born_state), ops, 0.4).matrix
    assert np.all(np.abs(ph.density.matrix - exact) <= 4 * ph.stderr + 1e-15)


def test_mc_stats_from_small_batch(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    batch = run_nonlinear_batch(born_state, ops, TimeGrid.spanning(1.0, 400), 2, range(500), record_every=100)
    s = mc_ensemble_density(batch)
    assert s.times.size == 5
    assert np.trace(s.mean_density.matrix).real == pytest.approx(1.0)
    doc = json.loads(s.to_json())
    assert doc["n_trajectories"] == 500
    assert len(s.offdiag_csv_rows()) == 5
    mean, err = ensemble_expectation(batch, pauli_z)
    assert mean[0] == pytest.approx(-0.28) and err[0] == pytest.approx(0.0, abs=1e-12)
    # population of the collapse basis is a martingale
    assert abs(mean[-1] + 0.28) < 4 * err[-1]
    rho, rho_err = ensemble_density_with_errors(batch)
    assert np.allclose(rho, s.mean_density.matrix)
    assert np.all(rho_err >= 0)


def test_mixed_engines_rejected(born_state, pauli_z):
    from collapselab.collapse_engine import BatchResult, run_random_phase_batch
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    grid = TimeGrid.spanning(1.0, 400)
    a = run_nonlinear_batch(born_state, ops, grid, 1, range(3))
    b = run_random_phase_batch(born_state, ops, grid, 1, range(3))
    with pytest.raises(ValueError):
        mc_ensemble_density(a.records() + b.records())
    assert isinstance(a, BatchResult)
