import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collapselab import rel_kernels as R
from collapselab import units

# (x, Y1(x), K1(x)) from mpmath at 30 digits
BESSEL_REFERENCE = [
    (0.05, -12.78985517117497, 19.909674325882506),
    (0.0719225, -8.925770522475267, 13.786956203449032),
    (0.103457, -6.248303728465723, 9.51638739984744),
    (0.148818, -4.3968313152982095, 6.531360448839618),
    (0.214067, -3.1197996599327706, 4.4387344007214935),
    (0.307924, -2.240338946788104, 2.9667090250488757),
    (0.442933, -1.6314703635406698, 1.928964037488034),
    (0.637137, -1.19721218779007, 1.1997197691725798),
    (0.91649, -0.8572075491291987, 0.6957832198344192),
    (1.31833, -0.5355864587779755, 0.36236451284943944),
    (1.89635, -0.16653624984847235, 0.16043926530526015),
    (2.7278, 0.23796032653188842, 0.055809628781201895),
    (3.9238, 0.4057859443757045, 0.013622111504036633),
    (5.64419, -0.07106614727302912, 0.0019844646062911614),
    (8.11888, -0.12832580174235703, 0.00013685695219463228),
    (11.6786, 0.016437198550104625, 3.2048049510221635e-06),
    (16.7991, 0.18441133566966436, 1.5815412831270976e-08),
    (24.1647, 0.027010651967175565, 8.288545309640082e-12),
    (34.7596, 0.11376901123539077, 1.7228190190892717e-16),
    (50.0, -0.05679566856201477, 3.4441022267175555e-23),
]


@pytest.mark.parametrize("x, y1, k1", BESSEL_REFERENCE)
def test_exact_kernels_against_reference_bessel(x, y1, k1):
    assert R.tachyon_kernel_exact(x, 1.0, "spacelike") == pytest.approx(-y1 / (8 * math.pi**2 * x), rel=1e-12)
    assert R.tachyon_kernel_exact(x, 1.0, "timelike") == pytest.approx(-k1 / (4 * math.pi**3 * x), rel=1e-12)


@pytest.mark.parametrize("kind", ["spacelike", "timelike"])
@pytest.mark.parametrize("x", [0.2, 0.9, 2.5, 7.3, 15.0])
def test_spectral_oracle_matches_closed_form(kind, x):
    exact = R.tachyon_kernel_exact(x, 1.0, kind)
    assert R.tachyon_kernel_spectral(x, 1.0, kind) == pytest.approx(exact, rel=1e-5, abs=1e-12)


@given(st.floats(0.1, 5.0), st.floats(0.2, 10.0))
def test_kernel_scales_with_a(a, s):
    # K(x; a) = a^-2 K(x/a; 1)
    assert R.tachyon_kernel_exact(s * a, a, "spacelike") == pytest.approx(
        R.tachyon_kernel_exact(s, 1.0, "spacelike") / a**2, rel=1e-10)


def test_nonrel_limit_against_radial_quadrature():
    for r in (0.3, 1.0, 2.2, 4.0):
        assert R.nonrel_limit_radial(r, 1.0) == pytest.approx(R.tachyon_kernel_nonrel_limit(r, 1.0), rel=1e-3, abs=1e-7)


def test_nonrel_zero_spacing():
    x = np.linspace(1e-3, 20, 20001)
    v = R.tachyon_kernel_nonrel_limit(x, 1.0)
    zeros = x[np.nonzero(np.sign(v[:-1]) != np.sign(v[1:]))[0]]
    assert zeros == pytest.approx(R.nonrel_zero_positions(1.0, zeros.size), abs=1e-3)


@given(st.floats(0.01, 100.0), st.floats(0.01, 10.0))
def test_fermion_rate_monotone_and_bounded(s, mu):
    p = R.RelParameters(gamma=1.3, mu=mu, g_coupling=0.5)
    r1 = R.fermion_collapse_rate(s, p)
    r2 = R.fermion_collapse_rate(2 * s, p)
    assert 0 <= r1 <= r2 <= R.fermion_rate_asymptote(p)


def test_energy_ratio_independent_of_mass():
    ratios = [R.energy_rate_ratio(1e-3, 1e-6, m) for m in (1e3, units.M_ELECTRON_EV, units.M_PROTON_EV)]
    assert ratios == pytest.approx([4 / (3 * math.pi**2)] * 3, rel=1e-9)


@given(st.floats(1e-3, 1e6), st.floats(0.0, 1e6))
def test_single_emission_is_on_shell(m, mu):
    k = R.single_emission_kinematics(m, mu)
    assert abs(k.final_mass_residual) < 1e-9
    assert abs(k.tachyon_mass_residual) < 1e-9


def test_time_dilation():
    assert R.time_dilated_collapse_rate(2.0, 0.6) == pytest.approx(1.6)
    with pytest.raises(ValueError):
        R.time_dilated_collapse_rate(1.0, 1.0)


def test_kernel_scan_rows():
    rows = R.kernel_scan("timelike", 1.0, [0.5, 1.0])
    assert rows[1] == pytest.approx((1.0, R.tachyon_kernel_exact(1.0, 1.0, "timelike")))
