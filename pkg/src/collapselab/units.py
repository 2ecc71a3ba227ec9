"""CODATA constants in CGS (and eV where noted), taken from ``scipy.constants``."""
from __future__ import annotations

import math

from scipy import constants as _sc

HBAR = _sc.hbar * 1e7            # erg s
C = _sc.c * 1e2                  # cm / s
G_NEWTON = _sc.G * 1e3           # cm^3 g^-1 s^-2
M_PROTON = _sc.m_p * 1e3         # g
M_NEUTRON = _sc.m_n * 1e3        # g
M_ELECTRON = _sc.m_e * 1e3       # g
EV = _sc.e * 1e7                 # erg per eV
HBAR_EV = _sc.hbar / _sc.e       # eV s
HBAR_C_EV_CM = HBAR_EV * C       # eV cm
M_PLANCK = math.sqrt(HBAR * C / G_NEWTON)  # g
M_ELECTRON_EV = _sc.physical_constants["electron mass energy equivalent in MeV"][0] * 1e6
M_PROTON_EV = _sc.physical_constants["proton mass energy equivalent in MeV"][0] * 1e6

SPECIES_MASS = {"p": M_PROTON, "n": M_NEUTRON, "e": M_ELECTRON}
