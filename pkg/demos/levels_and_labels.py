"""
Energy levels of the bismuth donor
==================================

Twenty electron-nuclear levels, from the coupled |F, mF> regime at zero
field to the |mS, mI> regime at a few tesla.
"""

import numpy as np

from clockspin import breit_rabi_levels, get_system, solve, sweep

bi = get_system("Si:Bi")
print(bi)

# at zero field only the hyperfine term is left: F = 4 (x9) and F = 5 (x11)
E0 = solve(bi, 0.0).energies
print("zero-field levels (GHz):", np.unique(np.round(E0, 5)))
print("splitting 5A = %.5f GHz" % (E0.max() - E0.min()))

# the dense solver and the closed-form 2x2 blocks agree to rounding error
for B in (0.01, 0.0798, 0.35):
    dE = np.abs(solve(bi, B).energies - breit_rabi_levels(bi, B).energies).max()
    print(f"B = {B:6.4f} T  max |dense - Breit-Rabi| = {dE:.1e} GHz")

# labels: F purity drops as the field mixes the zero-field states
for B in (0.0, 0.08, 1.0):
    sol = solve(bi, B)
    worst = min(sol.labels, key=lambda lab: lab.purity)
    print(f"B = {B:4.2f} T  least pure level {worst} purity {worst.purity:.3f}")

# adiabatic tracking keeps branch identities over a whole sweep
fields = np.linspace(0.0, 0.6, 601)
sw = sweep(bi, fields)
k = sw.branch_index((-2.0, 0))
print("branch", sw.labels[k], "goes from %.4f to %.4f GHz" % (sw.energies[0, k], sw.energies[-1, k]))
