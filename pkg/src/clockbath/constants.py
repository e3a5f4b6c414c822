"""Physical constants and default system parameters.

All couplings and gyromagnetic ratios are stored divided by Planck's
constant, i.e. in Hz and Hz/T.  Propagators use the phase convention
exp(-i 2 pi H t) with H in Hz and t in seconds.
"""

# CODATA 2018 exact values
H_PLANCK = 6.62607015e-34        # J s
K_BOLTZMANN = 1.380649e-23       # J / K
MU_0 = 1.25663706212e-6          # T m / A
MU_B_HZ_PER_T = 13.996244936e9   # Bohr magneton / h

# Central spin: effective S = 1/2 electron coupled to an I = 7/2 nucleus.
GAMMA_E_DEFAULT = 95.3e9         # Hz / T, effective electronic gyromagnetic ratio
GAMMA_N_DEFAULT = 1.23e6         # Hz / T, nuclear gyromagnetic ratio of the I = 7/2 nucleus
HYPERFINE_A_DEFAULT = 687e6      # Hz, isotropic hyperfine constant

# Bath species.
GAMMA_O17 = -5.774e6             # Hz / T, oxygen-17 (I = 5/2)
O17_ABUNDANCE = 3.8e-4           # natural fraction of magnetic oxygen
G_BATH_ELECTRON = 6.8            # effective low-field g-factor of bath electron spins
GAMMA_BATH_ELECTRON = G_BATH_ELECTRON * MU_B_HZ_PER_T  # ~95.17 GHz/T

# Fluorite host lattice.
LATTICE_CONSTANT = 5.411e-10     # m, conventional cubic cell edge

ANGSTROM = 1e-10
