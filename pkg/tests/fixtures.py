"""Synthetic data sets shared by the decoherence, CLI and acceptance tests."""

import numpy as np

from clockspin.decoherence import EXAMPLE_MODEL, simulate_echo_decay, t2

# clock-transition points plus a linear sweep out to the free-electron slope
X_GRID = np.concatenate([[0.0, 1e-3, 1e-2], np.linspace(0.05, 1.0, 20)])
CONCENTRATIONS = (1e14, 3.6e14, 1e15)


def t2_dataset(seed=0, noise=0.05, xs=X_GRID, concentrations=CONCENTRATIONS, model=EXAMPLE_MODEL):
    """(x, C, T2) rows drawn from ``model`` with multiplicative Gaussian noise."""
    rng = np.random.default_rng(seed)
    return [(float(x), float(C), float(t2(model, x, C) * (1 + noise * rng.normal())))
            for C in concentrations for x in xs]


def echo_draws(count=100, seed=2024, noise=0.01, points=256):
    """Random (T2, n, delays, amplitude) echo fixtures, magnitude-detected.

    T2 is log-uniform in [1 ms, 3.16 s] and n uniform in [0.5, 4]; delays
    cover three T2.
    """
    rng = np.random.default_rng(seed)
    for _ in range(count):
        T2 = 10 ** rng.uniform(-3, 0.5)
        n = rng.uniform(0.5, 4)
        delays = np.linspace(0, 3 * T2, points)
        dec = simulate_echo_decay(T2, n, delays, noise=noise, magnitude=True, rng=rng)
        yield T2, n, delays, dec.amplitude
