"""
Field-swept spectra near the 80 mT clock transition
===================================================

At a fixed microwave frequency just above the clock transition each
doublet branch is crossed twice.  At the clock frequency the crossings
merge and the line becomes broad in field while its frequency width is
unchanged.
"""

import warnings

from clockspin import LinewidthModel, field_sweep, get_system, peak_width_field_domain
from clockspin.spectra import UnresolvedPeakWarning, find_peaks

bi = get_system("Si:Bi")
model = LinewidthModel(sigma_f0=270e-6)  # FWHM, GHz

for f_mw in (7.034, 7.0317):
    spec = field_sweep(bi, f_mw, (0.07, 0.09), 2001, model)
    peaks = find_peaks(spec)
    print(f"f_mw = {f_mw} GHz: peaks at {[round(float(b) * 1e3, 2) for b in spec.fields[peaks]]} mT")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnresolvedPeakWarning)
        w = peak_width_field_domain(spec, 0)
    note = " (crossings not resolved)" if caught else ""
    print(f"  first peak FWHM {w * 1e3:.3f} mT{note}")
    for name, sel in spec.selections.items():
        print(f"  {sel:+d}  {name}")

# a 60 kHz spread of the hyperfine constant alone gives a similar frequency width
spread = LinewidthModel(sigma_f0=0.0, sigma_A=60e-6)
spec = field_sweep(bi, 7.034, (0.07, 0.09), 2001, spread)
print("hyperfine-spread model, FWHM of first peak: %.3f mT" % (peak_width_field_domain(spec, 0) * 1e3))
