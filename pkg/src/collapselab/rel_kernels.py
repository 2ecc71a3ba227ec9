"""Relativistic tachyon-spectrum kernel and the rate formulas built on it.

The kernel is the four-dimensional Fourier transform of the on-shell
spectrum ``delta(k0^2 - |k|^2 + mu^2)`` with ``mu = 1/a``. Closed forms use
Bessel functions of the second kind; ``*_spectral`` functions evaluate the
same transform by one-dimensional quadrature after removing the divergent
pieces analytically, and serve as independent oracles.

Natural units (hbar = c = 1) are used for kernels; rates that carry physical
units say so in their docstrings.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import units

ONSHELL_TOL = 1e-10


class Separation(str, enum.Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"


@dataclass(frozen=True)
class RelParameters:
    """``gamma`` collapse coupling, ``mu`` tachyon mass (eV), ``g_coupling`` fermion-scalar
    coupling, ``m`` fermion mass (eV)."""

    gamma: float = 1.0
    mu: float = 1.0
    g_coupling: float = 1.0
    m: float = units.M_ELECTRON_EV

    def __post_init__(self):
        if self.gamma < 0 or not self.mu > 0 or not self.m > 0:
            raise ValueError("need gamma >= 0, mu > 0, m > 0")

    @property
    def a_cm(self) -> float:
        """Smearing length ``hbar c / mu`` in cm."""
        return units.HBAR_C_EV_CM / self.mu


def smearing_length_cm(mu_ev: float) -> float:
    return units.HBAR_C_EV_CM / mu_ev


def tachyon_kernel_exact(x, a: float, kind: Separation | str) -> np.ndarray:
    """``-Y1(x/a) / (8 pi^2 a x)`` (spacelike) or ``-K1(x/a) / (4 pi^3 a x)`` (timelike)."""
    kind = Separation(kind)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("invariant interval must be positive")
    if kind is Separation.SPACELIKE:
        out = -special.y1(x / a) / (8 * math.pi**2 * a * x)
    else:
        out = -special.k1(x / a) / (4 * math.pi**3 * a * x)
    return out if out.ndim else float(out)


def _spacelike_integral(r: float, mu: float) -> float:
    """``int_mu^inf (k / sqrt(k^2 - mu^2) - 1) sin(k r) dk``.

    Near threshold ``k = mu cosh u`` removes the square-root singularity; the
    remainder is a Fourier integral handled by QUADPACK's QAWF routine.
    """
    u1 = math.acosh(8.0)
    head, _ = integrate.quad(lambda u: mu * math.exp(-u) * math.sin(mu * r * math.cosh(u)), 0.0, u1,
                             limit=800, epsabs=1e-14, epsrel=1e-12)
    k1 = mu * math.cosh(u1)
    tail, _ = integrate.quad(lambda k: k / math.sqrt(k * k - mu * mu) - 1.0, k1, np.inf,
                             weight="sin", wvar=r, limlst=200)
    return head + tail


def _timelike_integral(tau: float, mu: float) -> float:
    """``int_0^inf mu^2 cos(q tau) / (sqrt(q^2 + mu^2) + q) dq`` (QAWF)."""
    val, _ = integrate.quad(lambda q: mu * mu / (math.sqrt(q * q + mu * mu) + q), 0.0, np.inf,
                            weight="cos", wvar=tau, limlst=200)
    return val


def tachyon_kernel_spectral(x: float, a: float, kind: Separation | str) -> float:
    """Direct transform ``(2 pi)^-4 int d^4k e^{ik.x} delta(k0^2 - |k|^2 + mu^2)``.

    Spacelike points are taken at equal time, timelike points at the origin.
    The divergent parts ``int sin(kr) dk = 1/r`` and ``int q cos(q tau) dq =
    -1/tau^2`` are Abel-summed analytically; the rest converges.
    """
    kind = Separation(kind)
    if not x > 0:
        raise ValueError("invariant interval must be positive")
    mu = 1.0 / a
    if kind is Separation.SPACELIKE:
        r = float(x)
        return (math.cos(mu * r) / r + _spacelike_integral(r, mu)) / (4 * math.pi**3 * r)
    tau = float(x)
    return (-1.0 / tau**2 + _timelike_integral(tau, mu)) / (4 * math.pi**3)


def tachyon_kernel_nonrel_limit(separation, a: float) -> np.ndarray:
    """Equal-time factor ``(2 pi)^-2 sin(r/a) / r`` of the Markovian limit; ``(2 pi)^-2 / a`` at 0."""
    r = np.asarray(separation, dtype=float)
    if np.any(r < 0):
        raise ValueError("separation must be non-negative")
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(r > 0, np.sin(r / a) / np.where(r > 0, r, 1.0), 1.0 / a) / (4 * math.pi**2)
    return out if out.ndim else float(out)


def nonrel_limit_radial(separation: float, a: float, width: float = 1e-4) -> float:
    """``(2 pi)^-3 int d^3k e^{-ik.x} delta(mu^2 - k^2)`` with a Gaussian nascent delta
    of relative ``width``, by radial quadrature."""
    mu = 1.0 / a
    r = float(separation)
    s = width * mu * mu

    def integrand(k):
        delta = math.exp(-0.5 * ((mu * mu - k * k) / s) ** 2) / (math.sqrt(2 * math.pi) * s)
        return k * k * delta * (math.sin(k * r) / (k * r) if r > 0 else 1.0)

    half = 12 * s / (2 * mu)
    val, _ = integrate.quad(integrand, max(0.0, mu - half), mu + half, points=[mu],
                            limit=400, epsabs=0, epsrel=1e-12)
    return 4 * math.pi * val / (2 * math.pi) ** 3


def nonrel_zero_positions(a: float, count: int) -> np.ndarray:
    return math.pi * a * np.arange(1, count + 1)


def fermion_collapse_rate(separation, params: RelParameters, a: float | None = None) -> np.ndarray:
    """``(gamma g^2 a / 16 pi) [1 - exp(-|x - x'| / a)]``; ``a`` defaults to ``1/mu`` (natural units)."""
    a = 1.0 / params.mu if a is None else a
    s = np.abs(np.asarray(separation, dtype=float))
    out = fermion_rate_asymptote(params, a) * -np.expm1(-s / a)
    return out if out.ndim else float(out)


def fermion_rate_asymptote(params: RelParameters, a: float | None = None) -> float:
    a = 1.0 / params.mu if a is None else a
    return params.gamma * params.g_coupling**2 * a / (16 * math.pi)


def relativistic_energy_rate(params: RelParameters, natural: bool = False) -> float:
    """``(1 / 2 pi^2) gamma (mu^3 / m) sqrt(1 + (mu/2m)^2)``.

    With dimensionless ``gamma`` this is eV^2 in natural units; the default
    return divides by hbar to give eV/s.
    """
    p = params
    rate = p.gamma * p.mu**3 / p.m * math.sqrt(1 + (p.mu / (2 * p.m)) ** 2) / (2 * math.pi**2)
    return rate if natural else rate / units.HBAR_EV


def nonrel_energy_rate(lam: float, m: float, a: float) -> float:
    """``3 lam / (8 m a^2)`` in the same (natural) units as the arguments."""
    return 3 * lam / (8 * m * a * a)


def energy_rate_ratio(lam: float, mu: float, m: float) -> float:
    """Relativistic over nonrelativistic energy rate with ``gamma = lam / mu`` and ``a = 1/mu``."""
    rel = relativistic_energy_rate(RelParameters(gamma=lam / mu, mu=mu, m=m), natural=True)
    return rel / nonrel_energy_rate(lam, m, 1.0 / mu)


def time_dilated_collapse_rate(rest_rate: float, v0: float) -> float:
    """Rate seen for a packet moving with speed ``v0`` (units of c)."""
    if not abs(v0) < 1:
        raise ValueError("|v0| must be below 1")
    return rest_rate * math.sqrt(1 - v0 * v0)


@dataclass(frozen=True)
class EmissionKinematics:
    energy_gain: float
    momentum_gain: float
    final_mass_residual: float     # ((m + dE)^2 - p^2 - m^2) / (m + dE)^2
    tachyon_mass_residual: float   # (dE^2 - p^2 + mu^2) / max(mu^2, dE^2)


def single_emission_kinematics(m: float, mu: float) -> EmissionKinematics:
    """Particle at rest absorbing one spacelike quantum of mass ``mu``: ``(mu^2/2m, mu sqrt(1+(mu/2m)^2))``."""
    if not m > 0 or mu < 0:
        raise ValueError("need m > 0 and mu >= 0")
    de = mu * mu / (2 * m)
    p = mu * math.sqrt(1 + (mu / (2 * m)) ** 2)
    final = ((m + de) ** 2 - p * p - m * m) / (m + de) ** 2
    scale = max(mu * mu, de * de, 1e-300)
    tach = (de * de - p * p + mu * mu) / scale if mu > 0 else 0.0
    return EmissionKinematics(de, p, final, tach)


def random_walk_spread(T: float, mu: float, m: float) -> float:
    """Radius ``(mu/m) c T`` (cm) of the ensemble of random-walk displacements after ``T`` seconds."""
    return (mu / m) * units.C * T


def kernel_scan(kind: str, a: float, x_values) -> list[tuple[float, float]]:
    """``(x, value)`` rows for plotting; ``kind`` in spacelike, timelike, nonrel."""
    x = np.asarray(x_values, dtype=float)
    if kind == "nonrel":
        vals = tachyon_kernel_nonrel_limit(x, a)
    else:
        vals = tachyon_kernel_exact(x, a, kind)
    return list(zip(np.ravel(x).tolist(), np.ravel(vals).tolist()))
