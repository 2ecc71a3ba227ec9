import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from collapselab.collapse_engine import (
    CollapseOperatorSet,
    StepSizeError,
    closed_form_simple,
    detect_outcome,
    evolve_linear,
    evolve_nonlinear,
    evolve_nonmarkovian,
    evolve_nonmarkovian_closed,
    fourier_form_eval,
    ou_effective_time,
    probability_density_simple,
    run_nonlinear_batch,
    run_random_phase_batch,
    sample_linear_ensemble,
)
from collapselab.ensemble_analysis import kernel_double_integral
from collapselab.noise_paths import Kernel, TimeGrid, collapse_diffusion, sample_brownian
from collapselab.quantum_core import HermitianOperator, StateVector


def unit(v):
    return v / np.linalg.norm(v)


def test_closed_form_frozen_value(born_state, pauli_z):
    # 0.6 exp(-(0.3 - 1)^2 / 2), 0.8 exp(-(0.3 + 1)^2 / 2)
    out = closed_form_simple(born_state, pauli_z, 1.0, 0.5, 0.3).amplitudes
    assert out == pytest.approx([0.46962272, 0.34364589], abs=1e-8)
    assert probability_density_simple(born_state, pauli_z, 1.0, 0.5, 0.3) == pytest.approx(0.338637997, abs=1e-8)


@given(st.floats(-5, 5), st.floats(0.05, 3.0), st.floats(0.1, 2.0))
def test_fourier_form_matches_closed_form(z, t, lam):
    # z counts noise standard deviations; far tails need more quadrature nodes
    b = z * math.sqrt(lam * t)
    psi = StateVector(np.array([0.6, 0.8]))
    A = HermitianOperator.diag([1.0, -1.0])
    a = closed_form_simple(psi, A, lam, t, b).amplitudes
    f = fourier_form_eval(psi, A, lam, t, b).amplitudes
    assert np.allclose(a, f, atol=1e-10)


@given(st.floats(0.05, 5.0), st.floats(0.1, 0.9))
def test_outcome_density_integrates_to_one(t, p0):
    psi = StateVector(np.array([math.sqrt(p0), math.sqrt(1 - p0)]))
    A = HermitianOperator.diag([1.0, -1.0])
    lam = 1.0
    norm = math.sqrt(2 * math.pi * lam * t)
    total, _ = integrate.quad(lambda b: probability_density_simple(psi, A, lam, t, b) / norm, -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)
    win, _ = integrate.quad(lambda b: probability_density_simple(psi, A, lam, t, b) / norm, 0, np.inf)
    assert 0 < win < 1


def test_step_rule_is_enforced(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    with pytest.raises(StepSizeError):
        run_nonlinear_batch(born_state, ops, TimeGrid.spanning(10.0, 100), 1, range(2))


def test_linear_evolution_matches_closed_form(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    noise = sample_brownian(TimeGrid.spanning(1.0, 400), collapse_diffusion(1.0), seed=5)
    rec = evolve_linear(born_state, ops, noise)
    closed = closed_form_simple(born_state, pauli_z, 1.0, 1.0, noise.endpoint()[0]).amplitudes
    assert np.allclose(unit(rec.state(-1).amplitudes), unit(closed), atol=1e-12)


def test_nonlinear_record_stays_normalized_and_detects(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    rec = evolve_nonlinear(born_state, ops, 3, 0, TimeGrid.spanning(10.0, 4000))
    norms = np.linalg.norm(rec.states, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    assert (rec.outcome, rec.outcome_time) == detect_outcome(rec)
    assert rec.outcome == 0 and rec.outcome_time == pytest.approx(0.6425)


def test_batch_equals_single_trajectories(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    grid = TimeGrid.spanning(10.0, 4000)
    batch = run_nonlinear_batch(born_state, ops, grid, 3, range(3))
    assert batch.outcomes.tolist() == [0, 1, 1]
    for i in range(3):
        rec = evolve_nonlinear(born_state, ops, 3, i, grid)
        assert np.allclose(batch.coeffs[i, -1], rec.states[-1], atol=1e-12)


def test_batch_is_deterministic_and_stream_local(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    grid = TimeGrid.spanning(2.0, 800)
    a = run_nonlinear_batch(born_state, ops, grid, 11, range(10))
    b = run_nonlinear_batch(born_state, ops, grid, 11, range(5, 10))
    assert np.array_equal(a.coeffs[5:], b.coeffs)


def test_random_phase_batch_keeps_populations(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    b = run_random_phase_batch(born_state, ops, TimeGrid.spanning(5.0, 2000), 2, range(50))
    probs = np.abs(b.coeffs[:, -1]) ** 2
    assert np.allclose(probs, [0.36, 0.64])
    assert np.all(b.outcomes == -1)


def test_linear_ensemble_weights_average_to_one(born_state, pauli_z):
    ops = CollapseOperatorSet.single(pauli_z, 1.0)
    ls = sample_linear_ensemble(born_state, ops, TimeGrid.spanning(2.0, 800), 4, range(3000), endpoint_width=5.0)
    w = ls.weights
    assert abs(w.mean() - 1) <= 4 * w.std() / math.sqrt(w.size)


@given(st.floats(0.01, 50.0), st.floats(0.01, 5.0))
def test_ou_effective_time_matches_double_integral(alpha, t):
    tau = ou_effective_time(alpha, t)
    assert 0 < tau < t
    assert kernel_double_integral(Kernel.ornstein_uhlenbeck(alpha), t) == pytest.approx(tau, rel=1e-7)


def test_nonmarkovian_general_solver_matches_ou_closed_form(born_state, pauli_z):
    noise = sample_brownian(TimeGrid.spanning(1.0, 400), collapse_diffusion(1.0), seed=5).to_white()
    closed = evolve_nonmarkovian_closed(born_state, pauli_z, 1.0, 3.0, noise).amplitudes
    general = evolve_nonmarkovian(born_state, pauli_z, 1.0, noise, Kernel.ornstein_uhlenbeck(3.0))
    assert np.allclose(unit(general.state.amplitudes), unit(closed), atol=1e-5)


@given(st.integers(2, 5), st.integers(0, 2**31))
def test_noncommuting_operators_rejected(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d))
    A = HermitianOperator.diag(np.arange(d, dtype=float))
    B = HermitianOperator(m + m.T)
    with pytest.raises(ValueError):
        CollapseOperatorSet((A, B), 1.0)
