"""Independent reference calculations used only by the tests."""

import numpy as np


def breit_rabi_textbook(S, I, gamma_e, gamma_n, A, B):
    """Sorted S=1/2 energies from the textbook Breit-Rabi expression.

    E(F = I +/- 1/2, mF) = -A/4 - gamma_n B mF
                           +/- (dW/2) sqrt(1 + 4 mF x / (2I + 1) + x^2)
    with dW = A (I + 1/2) and x = (gamma_e + gamma_n) B / dW.  The two
    stretched states are linear in B and written out directly.
    """
    assert S == 0.5
    dW = A * (I + 0.5)
    x = (gamma_e + gamma_n) * B / dW
    out = []
    for mF in np.arange(-I + 0.5, I - 0.5 + 1e-9, 1.0):
        root = np.sqrt(1 + 4 * mF * x / (2 * I + 1) + x * x)
        base = -A / 4 - gamma_n * B * mF
        out += [base + dW / 2 * root, base - dW / 2 * root]
    for sign in (+1, -1):
        out.append(A * I / 2 + sign * B * (gamma_e / 2 - gamma_n * I))
    return np.sort(out)


def five_point(f, x, h):
    """Five-point central difference of f at x."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)
