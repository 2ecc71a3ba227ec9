"""Spatial collapse rates on lattice mass distributions (CGS units).

Every rate here is the exact ``H = 0`` consequence for the density matrix:
the off-diagonal element between two mass configurations decays as
``exp(-rate * T)``. Fields are built by separable Gaussian convolution with
kernels truncated at ``TRUNCATE`` smearing lengths and renormalized so their
discrete sum equals the continuum integral.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import fftconvolve
from scipy.special import erf

from . import units

TRUNCATE = 6.0
RESOLUTION_RULE = 0.5
ORTHOGONALITY_TOL = 1e-6
PROPORTIONALITY_TOL = 1e-12
GERMANIUM_SCALE = 5000.0  # counts / (keV kg day) per unit (g_e/g_p - m_e/m_p)^2


def _default_couplings() -> dict[str, float]:
    return {"p": 1.0, "n": 1.0, "nucleon": 1.0}


@dataclass(frozen=True)
class CslParameters:
    """``lam`` in s^-1 per nucleon, ``a`` in cm, couplings ``g`` by species."""

    lam: float = 1e-16
    a: float = 1e-5
    couplings: Mapping[str, float] = field(default_factory=_default_couplings)

    def __post_init__(self):
        if self.lam < 0 or not self.a > 0:
            raise ValueError("need lam >= 0 and a > 0")

    def coupling(self, species: str) -> float:
        return float(self.couplings.get(species, 1.0))

    def scaled_couplings(self, s: float) -> "CslParameters":
        return replace(self, couplings={k: s * v for k, v in self.couplings.items()})


@dataclass(frozen=True)
class LatticeMassDistribution:
    """Non-negative density sampled at nodes ``origin + spacing * (i, j, k)``.

    ``unit`` is ``"number"`` (particles/cm^3 of ``species``) or ``"mass"``
    (g/cm^3, converted to nucleon-number equivalents ``M / m_p`` for the
    collapse density).
    """

    origin: tuple[float, float, float]
    spacing: float
    density: np.ndarray = field(repr=False)
    unit: str = "number"
    species: str = "nucleon"

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=float)
        if rho.ndim != 3:
            raise ValueError("density must be a 3-d array")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not np.all(np.isfinite(rho)) or np.any(rho < 0):
            raise ValueError("density must be finite and non-negative")
        if self.unit not in ("number", "mass"):
            raise ValueError("unit must be 'number' or 'mass'")
        object.__setattr__(self, "density", rho)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def empty(cls, lo, hi, spacing: float, unit: str = "number", species: str = "nucleon"):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        shape = tuple(int(math.ceil((h - l) / spacing - 1e-9)) + 1 for l, h in zip(lo, hi))
        return cls(tuple(lo), spacing, np.zeros(shape), unit, species)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.density.shape

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def axes(self) -> list[np.ndarray]:
        return [o + self.spacing * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def total(self) -> float:
        return math.fsum(self.density.ravel()) * self.cell_volume

    def same_lattice(self, other: "LatticeMassDistribution") -> bool:
        return (self.shape == other.shape and self.spacing == other.spacing
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-12 * self.spacing))

    def _with(self, rho: np.ndarray) -> "LatticeMassDistribution":
        return replace(self, density=rho)

    def with_point(self, position, amount: float) -> "LatticeMassDistribution":
        """Deposit ``amount`` (particles or grams) by cloud-in-cell weights."""
        rho = self.density.copy()
        u = (np.asarray(position, dtype=float) - np.asarray(self.origin)) / self.spacing
        base = np.floor(u).astype(int)
        frac = u - base
        for corner in np.ndindex(2, 2, 2):
            idx = base + np.array(corner)
            w = np.prod(np.where(np.array(corner) == 1, frac, 1.0 - frac))
            if w == 0.0:
                continue
            if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
                raise ValueError("point lies outside the lattice")
            rho[tuple(idx)] += amount * w / self.cell_volume
        return self._with(rho)

    def with_box(self, lo, hi, value: float) -> "LatticeMassDistribution":
        """Add a uniform box; node cells partially covered get their exact volume fraction."""
        fr = []
        for ax, l, h in zip(self.axes(), lo, hi):
            left = np.maximum(ax - 0.5 * self.spacing, l)
            right = np.minimum(ax + 0.5 * self.spacing, h)
            fr.append(np.clip(right - left, 0.0, None) / self.spacing)
        return self._with(self.density + value * np.einsum("i,j,k->ijk", *fr))

    def with_sphere(self, center, radius: float, value: float, supersample: int = 5) -> "LatticeMassDistribution":
        """Add a uniform sphere using ``supersample**3`` sub-points per cell."""
        offs = ((np.arange(supersample) + 0.5) / supersample - 0.5) * self.spacing
        axes = self.axes()
        frac = np.zeros(self.shape)
        c = np.asarray(center, dtype=float)
        for ox in offs:
            dx2 = (axes[0] + ox - c[0]) ** 2
            for oy in offs:
                dy2 = (axes[1] + oy - c[1]) ** 2
                for oz in offs:
                    dz2 = (axes[2] + oz - c[2]) ** 2
                    frac += (dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]) <= radius**2
        return self._with(self.density + value * frac / supersample**3)

    def shifted(self, cells) -> "LatticeMassDistribution":
        """Translate the density by whole cells (zero-filled, must stay inside)."""
        cells = tuple(int(c) for c in cells)
        rho = np.zeros_like(self.density)
        src = [slice(max(0, -c), n - max(0, c)) for c, n in zip(cells, self.shape)]
        dst = [slice(max(0, c), n - max(0, -c)) for c, n in zip(cells, self.shape)]
        moved = self.density[tuple(src)]
        if not math.isclose(math.fsum(moved.ravel()), math.fsum(self.density.ravel()), rel_tol=1e-12):
            raise ValueError("shift moves density off the lattice")
        rho[tuple(dst)] = moved
        return self._with(rho)

    def number_density(self) -> np.ndarray:
        return self.density / units.M_PROTON if self.unit == "mass" else self.density

    def mass_density(self) -> np.ndarray:
        if self.unit == "mass":
            return self.density
        return self.density * units.SPECIES_MASS.get(self.species, units.M_PROTON)


def load_lattice_csv(filename, unit: str = "number", species: str = "nucleon") -> LatticeMassDistribution:
    """Read ``x,y,z,density`` rows lying on a regular lattice (missing nodes are zero)."""
    pts = []
    with open(filename, newline="") as fh:
        reader = csv.reader(row for row in fh if row.strip() and not row.lstrip().startswith("#"))
        for lineno, row in enumerate(reader, start=1):
            try:
                pts.append([float(v) for v in row[:4]])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"line {lineno}: cannot parse {row!r}") from None
    arr = np.array(pts)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError("expected rows x,y,z,density")
    coords = arr[:, :3]
    steps = [np.diff(np.unique(c)) for c in coords.T]
    spacing = min(float(s.min()) for s in steps if s.size) if any(s.size for s in steps) else 1.0
    origin = coords.min(axis=0)
    idx = np.rint((coords - origin) / spacing).astype(int)
    if not np.allclose(origin + idx * spacing, coords, rtol=0, atol=1e-6 * spacing):
        raise ValueError("points do not lie on a regular lattice")
    rho = np.zeros(tuple(idx.max(axis=0) + 1))
    rho[tuple(idx.T)] = arr[:, 3]
    return LatticeMassDistribution(tuple(origin), spacing, rho, unit, species)


def save_lattice_csv(dist: LatticeMassDistribution, filename) -> None:
    with open(filename, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "density"])
        ax = dist.axes()
        for i, j, k in zip(*np.nonzero(dist.density)):
            w.writerow([f"{ax[0][i]:.17g}", f"{ax[1][j]:.17g}", f"{ax[2][k]:.17g}",
                        f"{dist.density[i, j, k]:.17g}"])


def check_resolution(dist: LatticeMassDistribution, a: float) -> None:
    if dist.spacing > RESOLUTION_RULE * a * (1 + 1e-12):
        raise ValueError(f"lattice spacing {dist.spacing:g} exceeds a/2 = {0.5 * a:g}")


def smearing_padding(dist: LatticeMassDistribution, a: float) -> int:
    return int(math.ceil(TRUNCATE * a / dist.spacing))


def _gaussian_taps(spacing: float, a: float) -> np.ndarray:
    """1-d taps of ``exp(-x^2 / 2a^2)`` scaled so their sum times ``spacing`` is ``sqrt(2 pi) a``."""
    half = int(math.ceil(TRUNCATE * a / spacing))
    x = spacing * np.arange(-half, half + 1)
    k = np.exp(-(x**2) / (2 * a * a))
    return k * (math.sqrt(2 * math.pi) * a / (k.sum() * spacing))


def smeared_density_field(dist: LatticeMassDistribution, params: CslParameters, pad: bool = True) -> np.ndarray:
    """``(pi a^2)^(-3/4) int dz g n(z) exp(-(x - z)^2 / 2a^2)`` on the lattice nodes.

    With ``pad`` the lattice is first extended by the kernel reach on every
    side, so the returned array holds the complete field.
    """
    a = params.a
    check_resolution(dist, a)
    n = dist.number_density() * params.coupling(dist.species)
    if pad:
        p = smearing_padding(dist, a)
        n = np.pad(n, p)
    taps = _gaussian_taps(dist.spacing, a) * dist.spacing
    out = n
    for axis in range(3):
        out = convolve1d(out, taps, axis=axis, mode="constant", cval=0.0)
    return out * (math.pi * a * a) ** -0.75


def _fsum_squares(x: np.ndarray) -> float:
    return math.fsum((x * x).ravel())


def offdiag_decay_rate(dist1: LatticeMassDistribution, dist2: LatticeMassDistribution,
                       params: CslParameters) -> float:
    """``(lam/2) int dx [a_1(x) - a_2(x)]^2`` in s^-1."""
    if not dist1.same_lattice(dist2):
        raise ValueError("distributions must share a lattice")
    diff = smeared_density_field(dist1, params) - smeared_density_field(dist2, params)
    return 0.5 * params.lam * _fsum_squares(diff) * dist1.cell_volume


def clump_rate(n: float, separation: float, params: CslParameters, species: str = "nucleon") -> float:
    """Two compact clumps of ``n`` particles: ``lam n^2 [1 - exp(-d^2 / 4a^2)]`` (g^2 included)."""
    g = params.coupling(species)
    return params.lam * (g * n) ** 2 * -math.expm1(-(separation**2) / (4 * params.a**2))


def extended_object_rate(density: float, volume_displaced: float, params: CslParameters) -> float:
    """Sharp-edge estimate ``(4 pi)^(3/2) lam (a^3 rho)(V rho)`` for a displaced uniform body."""
    return (4 * math.pi) ** 1.5 * params.lam * (params.a**3 * density) * (volume_displaced * density)


def uniform_cube_rate(density: float, side: float, params: CslParameters) -> float:
    """Exact rate for a uniform cube displaced far beyond ``a``: the Gaussian
    overlap factorizes into ``2 sqrt(pi) a L erf(L/2a) - 4 a^2 (1 - exp(-L^2 / 4a^2))`` per axis."""
    a = params.a
    per_axis = (2 * math.sqrt(math.pi) * a * side * erf(side / (2 * a))
                - 4 * a * a * -math.expm1(-side * side / (4 * a * a)))
    return params.lam * density**2 * per_axis**3


def energy_gain_rate(n_particles: float, mass: float, params: CslParameters, species: str = "nucleon") -> float:
    """Mean energy gain ``(3/4) lam n hbar^2 / (2 m a^2)`` in eV/s (``mass`` in g)."""
    g = params.coupling(species)
    erg = 0.75 * params.lam * g * g * n_particles * units.HBAR**2 / (2.0 * mass * params.a**2)
    return erg / units.EV


def temperature_rise_rate(n_particles: float, mass: float, params: CslParameters) -> float:
    """Equipartition reading ``dT/dt = (2/3) dE/dt / (n k_B)`` in K/s."""
    from scipy.constants import k as k_b

    e_per_particle = energy_gain_rate(n_particles, mass, params) * units.EV * 1e-7 / n_particles
    return 2.0 * e_per_particle / (3.0 * k_b)


def _relative_coefficients(masses: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Coefficients ``c_j`` with ``sum_j g_j (x_j - Q) = sum_j c_j x_j``.

    When ``g`` is proportional to the masses the operator vanishes
    identically; the ratio test catches that case so the result is an exact
    zero rather than rounding noise.
    """
    ratio = g / masses
    mean = float(np.mean(ratio))
    if np.max(np.abs(ratio - mean)) <= PROPORTIONALITY_TOL * max(abs(mean), 1e-300):
        return np.zeros_like(g)
    return g - masses * (g.sum() / masses.sum())


def excitation_amplitude(psi_bound: np.ndarray, phi_excited: np.ndarray, masses, couplings,
                         params: CslParameters, spacing: float, x=None) -> float:
    """Excitation rate ``(lam / 2a^2) |<phi| sum_j g_j (x_j - Q) |psi>|^2`` in s^-1.

    Wavefunctions are sampled on a shared 1-d grid ``x`` (spacing in cm), one
    array axis per particle coordinate.
    """
    psi = np.asarray(psi_bound, dtype=complex)
    phi = np.asarray(phi_excited, dtype=complex)
    m = np.asarray(masses, dtype=float)
    g = np.asarray(couplings, dtype=float)
    if psi.shape != phi.shape or psi.ndim != m.size or g.size != m.size:
        raise ValueError("wavefunction rank must equal the number of particles")
    if np.any(m <= 0):
        raise ValueError("masses must be positive")
    dv = spacing ** psi.ndim
    npsi = np.vdot(psi, psi).real * dv
    nphi = np.vdot(phi, phi).real * dv
    if abs(npsi - 1) > ORTHOGONALITY_TOL or abs(nphi - 1) > ORTHOGONALITY_TOL:
        raise ValueError("wavefunctions must be normalized")
    if abs(np.vdot(phi, psi)) * dv > ORTHOGONALITY_TOL:
        raise ValueError("bound and excited states are not orthogonal")
    c = _relative_coefficients(m, g)
    if not np.any(c):
        return 0.0
    n = psi.shape[0]
    if x is None:
        x = spacing * (np.arange(n) - 0.5 * (n - 1))
    x = np.asarray(x, dtype=float)
    op_psi = np.zeros_like(psi)
    for j, cj in enumerate(c):
        if cj:
            shape = [1] * psi.ndim
            shape[j] = -1
            op_psi += cj * x.reshape(shape) * psi
    element = np.vdot(phi, op_psi) * dv
    return float(params.lam / (2 * params.a**2) * abs(element) ** 2)


@dataclass(frozen=True)
class GermaniumBound:
    ratio: float             # bound on g_e / g_p
    in_mass_ratio: float     # the same bound in units of m_e / m_p


def germanium_bound(measured_limit: float) -> GermaniumBound:
    """Bound from a rate ``5000 (g_e/g_p - m_e/m_p)^2`` counts/(keV kg day) below the measured limit."""
    if measured_limit < 0:
        raise ValueError("measured limit must be non-negative")
    me_mp = units.M_ELECTRON / units.M_PROTON
    ratio = me_mp + math.sqrt(measured_limit / GERMANIUM_SCALE)
    return GermaniumBound(ratio, ratio / me_mp)


class GravityVariant(str, enum.Enum):
    LOCAL_CURVATURE = "local_curvature"
    GLOBAL_POTENTIAL = "global_potential"


def gravity_kernel(r: np.ndarray, variant: GravityVariant | str, a: float) -> np.ndarray:
    """Pair kernel in cm^3 g^-1 s^-2 / cm: ``(G/a) exp(-r^2/4a^2)`` or ``G erf(r/2a) / r``."""
    variant = GravityVariant(variant)
    r = np.asarray(r, dtype=float)
    if variant is GravityVariant.LOCAL_CURVATURE:
        return units.G_NEWTON / a * np.exp(-(r**2) / (4 * a * a))
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(r > 0, erf(r / (2 * a)) / np.where(r > 0, r, 1.0), 1.0 / (a * math.sqrt(math.pi)))
    return units.G_NEWTON * k


def _mass_difference(dist1, dist2) -> np.ndarray:
    if not dist1.same_lattice(dist2):
        raise ValueError("distributions must share a lattice")
    return (dist1.mass_density() - dist2.mass_density()) * dist1.cell_volume


def gravity_decay_exponent(dist1: LatticeMassDistribution, dist2: LatticeMassDistribution,
                           variant: GravityVariant | str, a: float) -> float:
    """``(1/2 hbar) sum_ij dM_i K(|z_i - z_j|) dM_j`` in s^-1 (open boundaries, exact pair sum)."""
    dm = _mass_difference(dist1, dist2)
    if not np.any(dm):
        return 0.0
    h = dist1.spacing
    lags = [h * np.arange(-(n - 1), n) for n in dm.shape]
    r = np.sqrt(lags[0][:, None, None] ** 2 + lags[1][None, :, None] ** 2 + lags[2][None, None, :] ** 2)
    K = gravity_kernel(r, variant, a)
    conv = fftconvolve(dm, K, mode="same")
    return math.fsum((dm * conv).ravel()) / (2 * units.HBAR)


def gravity_pair_sum(dist1: LatticeMassDistribution, dist2: LatticeMassDistribution,
                     variant: GravityVariant | str, a: float) -> float:
    """Brute-force version of ``gravity_decay_exponent`` over the non-empty cells."""
    dm = _mass_difference(dist1, dist2)
    idx = np.argwhere(dm != 0)
    vals = dm[tuple(idx.T)]
    pos = idx * dist1.spacing
    terms = []
    for i in range(len(vals)):
        r = np.sqrt(((pos - pos[i]) ** 2).sum(axis=1))
        terms.extend((vals[i] * vals * gravity_kernel(r, variant, a)).tolist())
    return math.fsum(terms) / (2 * units.HBAR)


def gravity_cell_estimate(dist1: LatticeMassDistribution, dist2: LatticeMassDistribution, a: float,
                          cell_side: float | None = None) -> float:
    """Cell self-energy estimate ``(1/2 hbar) sum_cells G dM_cell^2 / a``.

    Cells of side ``L`` hold ``dM = d_rho L^3`` so the sum is
    ``G L^3 int d_rho^2 / (2 hbar a)``; the default ``L = 2 sqrt(pi) a``
    is the cell whose volume equals that of the local kernel.
    """
    L = cell_side if cell_side is not None else 2 * math.sqrt(math.pi) * a
    drho = dist1.mass_density() - dist2.mass_density()
    return units.G_NEWTON * L**3 * _fsum_squares(drho) * dist1.cell_volume / (2 * units.HBAR * a)


@dataclass(frozen=True)
class ParameterRelations:
    lam_a_over_c: float          # dimensionless, GRW values
    gm2_over_hbar_c: float       # dimensionless
    lam_diosi: float             # s^-1, G m_p^2 / (hbar a) at the GRW a
    a_planckon: float            # cm
    lam_planckon: float          # s^-1, evaluated at a_planckon

    def as_dict(self) -> dict[str, dict[str, float | str]]:
        return {
            "lam_a_over_c": {"value": self.lam_a_over_c, "unit": "1"},
            "gm2_over_hbar_c": {"value": self.gm2_over_hbar_c, "unit": "1"},
            "lam_diosi": {"value": self.lam_diosi, "unit": "s^-1"},
            "a_planckon": {"value": self.a_planckon, "unit": "cm"},
            "lam_planckon": {"value": self.lam_planckon, "unit": "s^-1"},
        }


def parameter_relations(params: CslParameters | None = None) -> ParameterRelations:
    p = params or CslParameters()
    gm2 = units.G_NEWTON * units.M_PROTON**2
    a_p = ((3 / math.pi**2) ** 0.25 * units.HBAR / (4 * units.M_PROTON * units.C)
           * math.sqrt(units.M_PLANCK / units.M_PROTON))
    return ParameterRelations(
        lam_a_over_c=p.lam * p.a / units.C,
        gm2_over_hbar_c=gm2 / (units.HBAR * units.C),
        lam_diosi=gm2 / (units.HBAR * p.a),
        a_planckon=a_p,
        lam_planckon=gm2 / (units.HBAR * a_p) / (2 * math.sqrt(3 * math.pi)),
    )
