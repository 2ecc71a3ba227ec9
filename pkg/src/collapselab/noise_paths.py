"""Classical noise realizations and stationary correlation kernels.

Conventions
-----------
* ``sample_brownian(diffusion=D)`` draws increments with variance ``2*D*dt``.
* Collapse dynamics with rate ``lam`` needs ``Var[dB] = lam*dt`` (the Gaussian
  factor ``exp(-(B - 2 lam t a)^2 / (2 lam t))`` of the probability rule), so
  every engine asks for ``diffusion=collapse_diffusion(lam) = lam/2``.
* ``sample_colored`` returns a Gaussian path whose covariance is the kernel
  itself, ``Cov[w(t), w(t')] = G(t - t')``; the delta kernel gives the discrete
  white noise ``delta_ij / dt``.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

PINV_THRESHOLD = 1e-10
CHOLESKY_MAX_STEPS = 2048
EMBEDDING_PAD = 4


def collapse_diffusion(lam: float) -> float:
    """Diffusion coefficient giving ``Var[B(t)] = lam * t``."""
    return 0.5 * lam


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``; streams never overlap."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    dt: float = 0.01
    n_steps: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")

    @classmethod
    def spanning(cls, duration: float, n_steps: int, t0: float = 0.0) -> "TimeGrid":
        return cls(t0=t0, dt=duration / n_steps, n_steps=n_steps)

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def nodes(self) -> np.ndarray:
        """Grid points ``t0 + k dt`` for ``k = 0..n_steps``."""
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def starts(self) -> np.ndarray:
        """Left ends of the ``n_steps`` intervals."""
        return self.t0 + self.dt * np.arange(self.n_steps)


@dataclass(frozen=True)
class NoisePath:
    """One realization of multi-channel noise on a grid.

    ``integrated=False`` stores white noise ``w`` at interval starts (shape
    ``channels x n_steps``); ``integrated=True`` stores ``B`` at the grid
    nodes (shape ``channels x (n_steps + 1)``).
    """

    grid: TimeGrid
    values: np.ndarray
    integrated: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        expected = self.grid.n_steps + (1 if self.integrated else 0)
        if v.ndim != 2 or v.shape[1] != expected:
            raise ValueError(f"values shape {v.shape} does not fit grid ({expected} samples)")
        if not np.all(np.isfinite(v)):
            raise ValueError("noise values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes if self.integrated else self.grid.starts

    def increments(self) -> np.ndarray:
        """Per-step Brownian increments ``dB`` (``channels x n_steps``)."""
        if self.integrated:
            return np.diff(self.values, axis=1)
        return self.values * self.grid.dt

    def to_white(self) -> "NoisePath":
        if not self.integrated:
            return self
        return NoisePath(self.grid, self.increments() / self.grid.dt, integrated=False)

    def to_brownian(self) -> "NoisePath":
        if self.integrated:
            return self
        b = np.concatenate([np.zeros((self.channels, 1)), np.cumsum(self.increments(), axis=1)], axis=1)
        return NoisePath(self.grid, b, integrated=True)

    def endpoint(self) -> np.ndarray:
        """``B(t_end)`` per channel."""
        return self.increments().sum(axis=1)


def save_noise_csv(path: NoisePath, filename) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + [f"ch{c}" for c in range(path.channels)])
        for k, t in enumerate(path.times):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in path.values[:, k]])


def load_noise_csv(filename, dt: float | None = None, integrated: bool = False) -> NoisePath:
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "time":
        raise ValueError(f"{filename}: first column must be 'time'")
    data = np.array([[float(x) for x in r] for r in body], dtype=float)
    times = data[:, 0]
    if dt is None:
        if len(times) < 2:
            raise ValueError("need dt for a single-row noise file")
        dt = float(times[1] - times[0])
    n_steps = len(times) - 1 if integrated else len(times)
    grid = TimeGrid(t0=float(times[0]), dt=dt, n_steps=n_steps)
    return NoisePath(grid, data[:, 1:].T, integrated=integrated)


class KernelKind(str, enum.Enum):
    DELTA = "delta"
    ORNSTEIN_UHLENBECK = "ornstein_uhlenbeck"
    TACHYON_NONREL = "tachyon_nonrel"
    CUSTOM_SPECTRAL = "custom_spectral"


@dataclass(frozen=True)
class Kernel:
    """Stationary correlation function ``G(tau)`` with spectral density ``G~(omega)``.

    ``G(tau) = (1/2pi) int d omega exp(i omega tau) G~(omega)``.
    """

    kind: KernelKind
    alpha: float | None = None
    a: float | None = None
    omega: np.ndarray | None = field(default=None, repr=False)
    spectrum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        kind = KernelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is KernelKind.ORNSTEIN_UHLENBECK and not (self.alpha and self.alpha > 0):
            raise ValueError("ornstein_uhlenbeck kernel needs alpha > 0")
        if kind is KernelKind.TACHYON_NONREL and not (self.a and self.a > 0):
            raise ValueError("tachyon_nonrel kernel needs a > 0")
        if kind is KernelKind.CUSTOM_SPECTRAL:
            w = np.asarray(self.omega, dtype=float)
            s = np.asarray(self.spectrum, dtype=float)
            if w.ndim != 1 or w.shape != s.shape or w.size < 2:
                raise ValueError("custom spectrum needs matching 1-d omega/spectrum tables")
            if np.any(np.diff(w) <= 0) or w[0] < 0:
                raise ValueError("omega table must be increasing and start at >= 0")
            if np.any(s < 0):
                raise ValueError("spectral density must be non-negative")
            object.__setattr__(self, "omega", w)
            object.__setattr__(self, "spectrum", s)

    @classmethod
    def delta(cls) -> "Kernel":
        return cls(KernelKind.DELTA)

    @classmethod
    def ornstein_uhlenbeck(cls, alpha: float) -> "Kernel":
        return cls(KernelKind.ORNSTEIN_UHLENBECK, alpha=float(alpha))

    @classmethod
    def tachyon_nonrel(cls, a: float) -> "Kernel":
        return cls(KernelKind.TACHYON_NONREL, a=float(a))

    @classmethod
    def custom(cls, omega, spectrum) -> "Kernel":
        return cls(KernelKind.CUSTOM_SPECTRAL, omega=omega, spectrum=spectrum)

    @property
    def is_delta(self) -> bool:
        return self.kind is KernelKind.DELTA

    def spectral(self, omega) -> np.ndarray:
        w = np.abs(np.asarray(omega, dtype=float))
        if self.kind is KernelKind.DELTA:
            return np.ones_like(w)
        if self.kind is KernelKind.ORNSTEIN_UHLENBECK:
            return self.alpha**2 / (w**2 + self.alpha**2)
        if self.kind is KernelKind.TACHYON_NONREL:
            # 1-d transform of sin(|x|/a)/|x| is pi on |k| < 1/a
            cut = 1.0 / self.a
            s = np.where(w < cut, 1.0, 0.0) + np.where(w == cut, 0.5, 0.0)
            return s / (4.0 * np.pi)
        return np.interp(w, self.omega, self.spectrum, right=0.0)

    def value(self, tau) -> np.ndarray:
        t = np.abs(np.asarray(tau, dtype=float))
        if self.kind is KernelKind.DELTA:
            return np.where(t == 0.0, np.inf, 0.0)
        if self.kind is KernelKind.ORNSTEIN_UHLENBECK:
            return 0.5 * self.alpha * np.exp(-self.alpha * t)
        if self.kind is KernelKind.TACHYON_NONREL:
            a = self.a
            with np.errstate(invalid="ignore", divide="ignore"):
                v = np.where(t > 0, np.sin(t / a) / np.where(t > 0, t, 1.0), 1.0 / a)
            return v / (4.0 * np.pi**2)
        # even spectrum: G(tau) = (1/pi) int_0^inf G~ cos(omega tau) d omega
        w, s = self.omega, self.spectrum
        integrand = s[None, :] * np.cos(np.outer(t.ravel(), w))
        return (np.trapezoid(integrand, w, axis=1) / np.pi).reshape(t.shape)


def kernel_value(kernel: Kernel, tau):
    v = kernel.value(tau)
    return float(v) if np.ndim(v) == 0 else v


def gram_matrix(kernel: Kernel, grid: TimeGrid) -> np.ndarray:
    """Discretized ``G(t_i - t_j)``; the delta kernel becomes ``I / dt``."""
    n = grid.n_steps
    if kernel.is_delta:
        return np.eye(n) / grid.dt
    lags = grid.dt * np.arange(n)
    row = kernel.value(lags)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return row[idx]


def _circulant_row(kernel: Kernel, dt: float, m: int) -> np.ndarray:
    k = np.arange(m)
    k = np.minimum(k, m - k)
    if kernel.is_delta:
        return np.where(k == 0, 1.0 / dt, 0.0)
    return kernel.value(k * dt)


def sample_brownian(grid: TimeGrid, diffusion: float, seed: int, stream: int = 0,
                    channels: int = 1) -> NoisePath:
    """Brownian path with ``B(t0) = 0`` and increment variance ``2*diffusion*dt``."""
    if diffusion < 0:
        raise ValueError("diffusion must be non-negative")
    rng = make_rng(seed, stream)
    steps = rng.standard_normal((channels, grid.n_steps)) * np.sqrt(2.0 * diffusion * grid.dt)
    b = np.concatenate([np.zeros((channels, 1)), np.cumsum(steps, axis=1)], axis=1)
    return NoisePath(grid, b, integrated=True)


def brownian_endpoints(n_paths: int, t: float, diffusion: float, seed: int, stream: int = 0) -> np.ndarray:
    """``B(t)`` for many independent paths (exact, no time stepping)."""
    rng = make_rng(seed, stream)
    return rng.standard_normal(n_paths) * np.sqrt(2.0 * diffusion * t)


@dataclass(frozen=True)
class _ColoredSampler:
    n: int
    sqrt_eig: np.ndarray | None
    chol: np.ndarray | None

    def draw(self, rng: np.random.Generator, n_paths: int) -> np.ndarray:
        if self.chol is not None:
            z = rng.standard_normal((n_paths, self.n))
            return z @ self.chol.T
        m = self.sqrt_eig.size
        out = np.empty((n_paths, self.n))
        filled = 0
        while filled < n_paths:
            z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            y = np.fft.fft(self.sqrt_eig * z) / np.sqrt(m)
            out[filled] = y.real[: self.n]
            filled += 1
            if filled < n_paths:
                out[filled] = y.imag[: self.n]
                filled += 1
        return out


def _colored_sampler(grid: TimeGrid, kernel: Kernel) -> _ColoredSampler:
    if kernel.kind is KernelKind.CUSTOM_SPECTRAL and np.any(kernel.spectrum < 0):
        raise ValueError("negative spectral density")
    n = grid.n_steps
    m = max(EMBEDDING_PAD * n, 2)
    eig = np.fft.fft(_circulant_row(kernel, grid.dt, m)).real
    top = float(np.max(np.abs(eig))) if eig.size else 0.0
    if eig.size and eig.min() < -1e-8 * top:
        if n > CHOLESKY_MAX_STEPS:
            raise ValueError("circulant embedding is not positive and grid too long for Cholesky")
        gram = gram_matrix(kernel, grid)
        w, v = np.linalg.eigh(gram)
        if w.min() < -1e-8 * w.max():
            raise ValueError("kernel Gram matrix is not positive semidefinite")
        return _ColoredSampler(n, None, v * np.sqrt(np.clip(w, 0.0, None)))
    return _ColoredSampler(n, np.sqrt(np.clip(eig, 0.0, None)), None)


def sample_colored_batch(grid: TimeGrid, kernel: Kernel, seed: int, stream: int,
                         n_paths: int) -> np.ndarray:
    """``n_paths x n_steps`` stationary Gaussian samples with covariance ``G``."""
    sampler = _colored_sampler(grid, kernel)
    return sampler.draw(make_rng(seed, stream), n_paths)


def sample_colored(grid: TimeGrid, kernel: Kernel, seed: int, stream: int = 0,
                   channels: int = 1) -> NoisePath:
    """Stationary Gaussian noise with ``Cov[w(t_i), w(t_j)] = G(t_i - t_j)``.

    Uses circulant embedding on a grid padded to four times the duration and
    falls back to a Gram-matrix factorization on short grids when the
    embedding is not positive.
    """
    vals = sample_colored_batch(grid, kernel, seed, stream, channels)
    return NoisePath(grid, vals, integrated=False)


@dataclass(frozen=True)
class KernelInverse:
    matrix: np.ndarray
    rank: int
    discarded_fraction: float

    @property
    def singular(self) -> bool:
        return self.discarded_fraction > 0


def kernel_inverse_finite(kernel: Kernel, grid: TimeGrid) -> KernelInverse:
    """Inverse of ``G`` restricted to the window ``[t0, t0 + duration)``.

    The result satisfies ``sum_j G(t_i - t_j) Ginv[j, k] dt = delta_ik / dt``
    on the retained spectral subspace; eigenvalues below ``1e-10`` of the
    largest are discarded and their share reported.
    """
    if grid.n_steps < 1:
        raise ValueError("grid must contain at least one step")
    gram = gram_matrix(kernel, grid)
    w, v = np.linalg.eigh(gram)
    keep = w > PINV_THRESHOLD * w.max()
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    pinv = (v * inv_w) @ v.T / grid.dt**2
    rank = int(keep.sum())
    return KernelInverse(pinv, rank, 1.0 - rank / w.size)


def kernel_inverse_infinite(kernel: Kernel, grid: TimeGrid) -> np.ndarray:
    """Window block of the inverse of ``G`` over the whole time axis.

    Built as the inverse of the periodic embedding (the Fourier transform of
    ``1 / G~``), so it uses the same ``1 / dt^2`` normalization as
    ``kernel_inverse_finite``. Spectral components below the pseudo-inverse
    threshold are dropped.
    """
    n = grid.n_steps
    m = max(EMBEDDING_PAD * n, 2)
    eig = np.fft.fft(_circulant_row(kernel, grid.dt, m)).real
    keep = eig > PINV_THRESHOLD * eig.max()
    inv = np.zeros_like(eig)
    inv[keep] = 1.0 / eig[keep]
    row = np.fft.ifft(inv).real / grid.dt**2
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return row[idx]


def sqrt_transfer(kernel: Kernel, dt: float, m: int) -> np.ndarray:
    if kernel.is_delta:
        return np.ones(m)
    lam = np.fft.fft(_circulant_row(kernel, dt, m)).real * dt
    return np.sqrt(np.clip(lam, 0.0, None))


def sqrt_kernel_values(kernel: Kernel, dt: float, n_lags: int, pad: int | None = None) -> np.ndarray:
    """Discrete ``G^(1/2)`` at lags ``0, dt, ..., (n_lags - 1) dt``.

    The discrete kernel is the one whose self-convolution reproduces the
    sampled ``G`` exactly on the periodic embedding.
    """
    m = pad or max(EMBEDDING_PAD * n_lags, 16)
    g = np.fft.ifft(sqrt_transfer(kernel, dt, m)).real / dt
    return g[:n_lags]


def smear_signal(kernel: Kernel, signal: np.ndarray, dt: float, power: float = 0.5) -> np.ndarray:
    """Convolve the last axis of ``signal`` with ``G^power`` (power 0.5 or 1)."""
    x = np.asarray(signal, dtype=float)
    n = x.shape[-1]
    m = EMBEDDING_PAD * max(n, 1)
    h = sqrt_transfer(kernel, dt, m) ** (2 * power)
    xf = np.fft.fft(x, n=m, axis=-1)
    # zero-padded circular convolution centered on lag 0 (even kernel)
    return np.fft.ifft(xf * h, axis=-1).real[..., :n]


def kernel_sqrt_smear(kernel: Kernel, path: NoisePath) -> NoisePath:
    """Return ``int dt1 G^(1/2)(t - t1) x(t1)`` for each channel of ``path``."""
    if kernel.kind is KernelKind.CUSTOM_SPECTRAL and np.any(kernel.spectrum < 0):
        raise ValueError("negative spectral density")
    if kernel.is_delta:
        return path
    out = smear_signal(kernel, path.values, path.grid.dt)
    return NoisePath(path.grid, out, integrated=path.integrated)
