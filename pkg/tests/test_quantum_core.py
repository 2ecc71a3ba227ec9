import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from collapselab.quantum_core import (
    MAX_DIM,
    DensityMatrix,
    HermitianOperator,
    StateVector,
    commutator,
    eigendecompose,
    expectation,
    norm_squared,
    pure_density,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def random_hermitian(seed, d):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return HermitianOperator((m + m.conj().T) / 2)


def test_norm_and_expectation_values(born_state, pauli_z):
    assert norm_squared(born_state) == pytest.approx(1.0)
    assert expectation(pauli_z, born_state) == pytest.approx(0.36 - 0.64)


def test_zero_state_has_zero_norm_but_no_expectation(pauli_z):
    zero = StateVector(np.zeros(2))
    assert norm_squared(zero) == 0.0
    with pytest.raises(ValueError):
        expectation(pauli_z, zero)
    with pytest.raises(ValueError):
        pure_density(zero)


def test_operator_set_rejects_oversize():
    from collapselab.collapse_engine import CollapseOperatorSet
    with pytest.raises(ValueError):
        CollapseOperatorSet.single(HermitianOperator.diag(np.arange(MAX_DIM + 1.0)), 1.0)


def test_operator_rejects_non_hermitian():
    with pytest.raises(ValueError):
        HermitianOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_density_rejects_bad_trace():
    with pytest.raises(ValueError):
        DensityMatrix(np.eye(2))


def test_eigendecompose_pauli_x():
    vals, vecs = eigendecompose(HermitianOperator(np.array([[0.0, 1.0], [1.0, 0.0]])))
    assert vals == pytest.approx([-1.0, 1.0])
    assert np.allclose(vecs.conj().T @ vecs, np.eye(2))


def test_commutator_of_paulis():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]])
    z = np.diag([1.0, -1.0]).astype(complex)
    assert np.allclose(commutator(x, y), 2j * z)


@given(st.integers(0, 2**31), st.integers(1, 6))
def test_eigendecompose_reconstructs(seed, d):
    A = random_hermitian(seed, d)
    vals, vecs = eigendecompose(A)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.conj().T, A.matrix, atol=1e-10)
    assert np.all(np.diff(vals) >= -1e-12)


@given(arrays(float, st.integers(1, 8), elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_pure_density_is_projector(v):
    rho = pure_density(StateVector(v)).matrix
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho @ rho, rho, atol=1e-10)


@given(st.integers(0, 2**31), st.integers(1, 5))
def test_expectation_is_real_and_bounded(seed, d):
    A = random_hermitian(seed, d)
    rng = np.random.default_rng(seed + 1)
    psi = StateVector(rng.standard_normal(d) + 1j * rng.standard_normal(d))
    vals, _ = eigendecompose(A)
    e = expectation(A, psi)
    assert isinstance(e, float)
    assert vals[0] - 1e-9 <= e <= vals[-1] + 1e-9
