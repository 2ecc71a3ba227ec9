"""Finite-dimensional Hilbert-space primitives.

States are deliberately *not* normalized: the squared norm of an evolved
state carries the probability density of the noise that produced it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DIM = 64
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10


def _as_complex_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=complex)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entries")
    arr.setflags(write=False)
    return arr


def _is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    scale = max(float(np.max(np.abs(m))), 1.0) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * scale)


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    basis_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        amps = _as_complex_array(self.amplitudes, 1)
        if amps.size < 1:
            raise ValueError("state dimension must be >= 1")
        object.__setattr__(self, "amplitudes", amps)
        if self.basis_labels is not None:
            labels = tuple(str(s) for s in self.basis_labels)
            if len(labels) != amps.size:
                raise ValueError("basis_labels length does not match dimension")
            object.__setattr__(self, "basis_labels", labels)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def scaled(self, factor: complex) -> "StateVector":
        return StateVector(self.amplitudes * factor, self.basis_labels)


@dataclass(frozen=True)
class HermitianOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_complex_array(self.matrix, 2)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got {m.shape}")
        if not _is_hermitian(m):
            raise ValueError("operator is not Hermitian")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def diag(cls, values) -> "HermitianOperator":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_complex_array(self.matrix, 2)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        if not _is_hermitian(m):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {np.trace(m).real!r} != 1")
        if np.linalg.eigvalsh(m)[0] < -POSITIVITY_TOL:
            raise ValueError("density matrix has negative eigenvalues")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def norm_squared(psi: StateVector) -> float:
    """Sum of squared amplitude moduli."""
    a = psi.amplitudes
    return float(np.sum(a.real**2 + a.imag**2))


def _canonical_order(vals: np.ndarray, vecs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Fix phase (first significant component real positive), then sort
    # degenerate blocks lexicographically on rounded components.
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        v = vecs[:, k]
        idx = int(np.argmax(np.abs(v) > 1e-8))
        vecs[:, k] = v * (abs(v[idx]) / v[idx])

    def key(k):
        comps = np.round(vecs[:, k], 6)
        return tuple(-x for c in comps for x in (c.real, c.imag))

    order = []
    i = 0
    n = vals.size
    while i < n:
        j = i + 1
        while j < n and abs(vals[j] - vals[i]) <= 1e-10 * max(1.0, abs(vals[i])):
            j += 1
        order.extend(sorted(range(i, j), key=key))
        i = j
    order = np.array(order)
    return vals[order], vecs[:, order]


def eigendecompose(A: HermitianOperator) -> tuple[np.ndarray, np.ndarray]:
    """Return ascending eigenvalues and orthonormal eigenvectors as columns.

    Eigenvectors inside a degenerate subspace are phase-fixed and ordered so
    that repeated calls give identical output.
    """
    if not isinstance(A, HermitianOperator):
        A = HermitianOperator(A)
    vals, vecs = np.linalg.eigh(A.matrix)
    return _canonical_order(vals, vecs)


def expectation(A: HermitianOperator, psi: StateVector) -> float:
    n2 = norm_squared(psi)
    if n2 <= 0.0:
        raise ValueError("expectation value of a zero-norm state")
    a = psi.amplitudes
    return float(np.real(np.vdot(a, A.matrix @ a)) / n2)


def pure_density(psi: StateVector) -> DensityMatrix:
    n2 = norm_squared(psi)
    if n2 <= 0.0:
        raise ValueError("density matrix of a zero-norm state")
    a = psi.amplitudes
    return DensityMatrix(np.outer(a, a.conj()) / n2)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a
