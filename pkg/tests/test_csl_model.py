import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import erf

from collapselab import csl_model as C
from collapselab import units

P = C.CslParameters()
A = P.a


def two_clumps(n, d, spacing=A / 2):
    lat = C.LatticeMassDistribution.empty((0, 0, 0), (d, 0, 0), spacing)
    return lat.with_point((0, 0, 0), n), lat.with_point((d, 0, 0), n)


def test_clump_rate_formula_value():
    assert C.clump_rate(1000, 1e-4, P) == pytest.approx(1e-16 * 1e6 * -math.expm1(-25.0))


@given(st.floats(0.3, 12.0), st.sampled_from([1.0, 7.0, 300.0]))
def test_lattice_clump_rate_matches_formula(d_over_a, n):
    d1, d2 = two_clumps(n, d_over_a * A)
    lattice = C.offdiag_decay_rate(d1, d2, P)
    assert lattice == pytest.approx(C.clump_rate(n, d_over_a * A, P), rel=2e-3)


def test_cube_lattice_matches_finite_cube_integral():
    side, rho = 1e-4, 1e25
    gap = side + 2 * C.TRUNCATE * A
    lat = C.LatticeMassDistribution.empty((0, 0, 0), (2 * side + gap, side, side), A / 2)
    c1 = lat.with_box((0, 0, 0), (side, side, side), rho)
    c2 = lat.with_box((side + gap, 0, 0), (2 * side + gap, side, side), rho)
    rate = C.offdiag_decay_rate(c1, c2, P)
    assert rate == pytest.approx(C.uniform_cube_rate(rho, side, P), rel=0.01)
    # the sharp-edge estimate drops the surface term, which is 30% at side = 10 a
    assert rate / C.extended_object_rate(rho, side**3, P) == pytest.approx(0.6927, abs=5e-4)


def test_identical_distributions_do_not_decay():
    d1, _ = two_clumps(10, 4 * A)
    assert C.offdiag_decay_rate(d1, d1, P) == 0.0


def test_coarse_lattice_rejected():
    d1, d2 = two_clumps(10, 4 * A, spacing=A)
    with pytest.raises(ValueError):
        C.offdiag_decay_rate(d1, d2, P)


def test_smeared_field_integral():
    d1, _ = two_clumps(50, 4 * A)
    field = C.smeared_density_field(d1, P)
    # int a(x) dx = n (pi a^2)^(-3/4) (2 pi a^2)^(3/2)
    total = field.sum() * d1.cell_volume
    assert total == pytest.approx(50 * (math.pi * A * A) ** -0.75 * (2 * math.pi * A * A) ** 1.5, rel=1e-9)


def test_energy_gain_value():
    e = C.energy_gain_rate(1e24, units.M_PROTON, P)
    by_hand = 0.75 * 1e-16 * 1e24 * units.HBAR**2 / (2 * units.M_PROTON * 1e-10) / units.EV
    assert e == pytest.approx(by_hand)
    assert e == pytest.approx(0.1556, abs=1e-3)
    assert C.temperature_rise_rate(1e24, units.M_PROTON, P) > 0


def test_germanium_bound_value():
    b = C.germanium_bound(0.2)
    assert b.ratio == pytest.approx(math.sqrt(0.2 / 5000) + units.M_ELECTRON / units.M_PROTON)
    assert b.in_mass_ratio == pytest.approx(12.6128, abs=1e-3)


def test_lattice_csv_round_trip(tmp_path):
    d1, _ = two_clumps(10, 4 * A)
    d1 = d1.with_sphere((2 * A, 0, 0), A, 3.0)
    f = tmp_path / "lat.csv"
    C.save_lattice_csv(d1, f)
    back = C.load_lattice_csv(f)
    assert back.total() == pytest.approx(d1.total(), rel=1e-14)
    assert back.spacing == pytest.approx(d1.spacing)


@given(st.integers(0, 2**31), st.integers(2, 3))
def test_mass_proportional_coupling_is_exactly_zero(seed, k):
    rng = np.random.default_rng(seed)
    shape = (8,) * k
    m = rng.standard_normal((8**k, 2)) + 1j * rng.standard_normal((8**k, 2))
    q, _ = np.linalg.qr(m)
    h = 1e-8
    psi, phi = (q[:, i].reshape(shape) / math.sqrt(h**k) for i in range(2))
    masses = rng.uniform(0.5, 5, k) * units.M_PROTON
    g = rng.uniform(0.1, 3) * masses / units.M_PROTON
    assert C.excitation_amplitude(psi, phi, masses, g, P, h) == 0.0
    g2 = g.copy()
    g2[0] *= 1.5
    assert C.excitation_amplitude(psi, phi, masses, g2, P, h) > 0.0


def test_excitation_rejects_non_orthogonal():
    psi = np.ones((4, 4)) / 4
    with pytest.raises(ValueError):
        C.excitation_amplitude(psi, psi, [1.0, 2.0], [1.0, 1.0], P, 1.0)


def point_pair(variant, d, mass=1e-14):
    lat = C.LatticeMassDistribution.empty((0, 0, 0), (d, 0, 0), A / 2, unit="mass")
    d1, d2 = lat.with_point((0, 0, 0), mass), lat.with_point((d, 0, 0), mass)
    k0 = C.gravity_kernel(np.array([0.0]), variant, A)[0]
    kd = C.gravity_kernel(np.array([d]), variant, A)[0]
    return d1, d2, mass**2 * (k0 - kd) / units.HBAR


@pytest.mark.parametrize("variant", list(C.GravityVariant))
@pytest.mark.parametrize("d_over_a", [1.0, 4.0, 10.0])
def test_gravity_lattice_matches_pair_sum_and_analytic(variant, d_over_a):
    d1, d2, analytic = point_pair(variant, d_over_a * A)
    fast = C.gravity_decay_exponent(d1, d2, variant, A)
    assert fast == pytest.approx(C.gravity_pair_sum(d1, d2, variant, A), rel=1e-12)
    assert fast == pytest.approx(analytic, rel=1e-12)


def test_gravity_kernels_values():
    r = np.array([0.0, 2 * A])
    g = units.G_NEWTON
    assert C.gravity_kernel(r, "local_curvature", A) == pytest.approx([g / A, g / A * math.exp(-1)])
    assert C.gravity_kernel(r, "global_potential", A) == pytest.approx([g / (A * math.sqrt(math.pi)), g * erf(1) / (2 * A)])


def test_parameter_relations_values():
    r = C.parameter_relations()
    assert r.lam_a_over_c == pytest.approx(1e-21 / units.C)
    assert r.gm2_over_hbar_c == pytest.approx(5.906e-39, rel=1e-3)
    assert r.a_planckon == pytest.approx(1.408e-5, rel=1e-3)


@given(st.floats(0.5, 200.0))
def test_finite_cube_rate_approaches_sharp_edge(side_over_a):
    side = side_over_a * A
    exact = C.uniform_cube_rate(1e20, side, P)
    sharp = C.extended_object_rate(1e20, side**3, P)
    assert exact < sharp
    # leading surface correction 3 * 2a / (sqrt(pi) L)
    if side_over_a > 50:
        assert 1 - exact / sharp == pytest.approx(6 / (math.sqrt(math.pi) * side_over_a), rel=0.05)
