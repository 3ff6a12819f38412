"""
Coherence times versus field sensitivity
========================================

A three-channel model for 1/T2 as a function of the normalized slope
x = |df/dB| / gamma_e, a fit to synthetic data, and a stretched
exponential echo fit.
"""

import numpy as np

from clockspin import EXAMPLE_MODEL, fit_echo_decay, fit_t2_model, simulate_echo_decay, t2
from clockspin.decoherence import channel_rates

C = 3.6e14  # cm^-3
for x in (0.0, 0.01, 0.1, 1.0):
    r = channel_rates(EXAMPLE_MODEL, x, C)
    print(f"x = {x:5.2f}  T2 = {t2(EXAMPLE_MODEL, x, C):8.4f} s   dFF/iFF/ID shares "
          + " ".join(f"{v / r.sum():.3f}" for v in r))

# synthetic measurements at three concentrations with 5% scatter
rng = np.random.default_rng(1)
xs = np.concatenate([[0.0, 1e-3, 1e-2], np.linspace(0.05, 1.0, 20)])
data = [(x, c, t2(EXAMPLE_MODEL, x, c) * (1 + 0.05 * rng.normal())) for c in (1e14, 3.6e14, 1e15) for x in xs]
fit = fit_t2_model(data)
m = fit.model.with_concentration(C)
print("fitted T2 at the clock transition: %.3f s" % t2(m, 0.0))
print("relative standard errors:", {k: round(v, 3) for k, v in fit.rel_uncertainty.items()})

# a Hahn-echo decay with magnitude detection noise
delays = np.linspace(0, 0.3, 128)  # 2 tau, s
echo = simulate_echo_decay(0.093, 2.2, delays, noise=0.02, magnitude=True, rng=np.random.default_rng(7))
res = fit_echo_decay(delays, echo.amplitude)
print(f"echo fit: T2 = {res.T2 * 1e3:.1f} +/- {res.T2_err * 1e3:.1f} ms, n = {res.n:.2f} +/- {res.n_err:.2f}")
