"""Phenomenological decoherence model and Hahn-echo decay fitting.

The coherence rate of a donor electron spin is modeled as three channels
that scale with the donor concentration C and with the normalized field
sensitivity x = |df/dB| / gamma_e of the driven transition:

    1/T2 = C * (k_dFF + k_iFF * x + k_ID * x**2)

direct flip-flops (dFF) survive at the clock transition, indirect
flip-flops (iFF) act through the field sensitivity linearly and
instantaneous diffusion (ID) quadratically.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares, nnls

__all__ = [
    "DecoherenceModel",
    "T2Fit",
    "EchoDecay",
    "EchoFit",
    "FitError",
    "ConvergenceError",
    "IdentifiabilityWarning",
    "EXAMPLE_MODEL",
    "inv_t2",
    "t2",
    "channel_rates",
    "normalized_slope",
    "fit_t2_model",
    "simulate_echo_decay",
    "fit_echo_decay",
    "stretched_exponential",
]

CHANNELS = ("dFF", "iFF", "ID")


class FitError(ValueError):
    """The data cannot support the requested fit."""


class ConvergenceError(RuntimeError):
    """A least-squares fit did not converge."""


class IdentifiabilityWarning(UserWarning):
    """A fitted coefficient is not constrained by the data."""


@dataclass(frozen=True)
class DecoherenceModel:
    """Rate coefficients in s^-1 cm^3, and a donor concentration in cm^-3.

    ``exponents`` are the powers of C applied per channel (dFF, iFF, ID);
    all are 1 unless overridden.
    """

    k_dFF: float
    k_iFF: float
    k_ID: float
    C: float = 3.6e14
    exponents: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if min(self.k_dFF, self.k_iFF, self.k_ID) < 0:
            raise ValueError("rate coefficients must be non-negative")
        if not self.C > 0:
            raise ValueError("concentration must be positive")

    def with_concentration(self, C: float) -> "DecoherenceModel":
        return DecoherenceModel(self.k_dFF, self.k_iFF, self.k_ID, C, self.exponents)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["exponents"] = list(self.exponents)
        return d

    @classmethod
    def from_dict(cls, d) -> "DecoherenceModel":
        return cls(
            k_dFF=float(d["k_dFF"]),
            k_iFF=float(d["k_iFF"]),
            k_ID=float(d["k_ID"]),
            C=float(d.get("C", 3.6e14)),
            exponents=tuple(float(e) for e in d.get("exponents", (1.0, 1.0, 1.0))),
        )


# Illustrative 28Si:Bi coefficients: T2 = 2.7 s at the clock transition for
# C = 3.6e14 cm^-3 and a ~100-fold faster decay at x = 1.  Not fitted to
# measured data.
_K_DFF = 1.0 / (2.7 * 3.6e14)
EXAMPLE_MODEL = DecoherenceModel(k_dFF=_K_DFF, k_iFF=60 * _K_DFF, k_ID=40 * _K_DFF, C=3.6e14)


def channel_rates(model: DecoherenceModel, x, C: Optional[float] = None) -> np.ndarray:
    """Per-channel rates (s^-1), stacked along the last axis as (dFF, iFF, ID)."""
    C = model.C if C is None else C
    x = np.asarray(x, dtype=float)
    p = model.exponents
    return np.stack(
        [
            model.k_dFF * C ** p[0] * np.ones_like(x),
            model.k_iFF * C ** p[1] * x,
            model.k_ID * C ** p[2] * x**2,
        ],
        axis=-1,
    )


def inv_t2(model: DecoherenceModel, x, C: Optional[float] = None):
    """Coherence rate 1/T2 (s^-1) at normalized slope ``x`` in [0, 1]."""
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise ValueError("normalized slope x must lie in [0, 1]")
    out = channel_rates(model, x_arr, C).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def t2(model: DecoherenceModel, x, C: Optional[float] = None):
    """Coherence time (s) at normalized slope ``x``."""
    return 1.0 / inv_t2(model, x, C)


def normalized_slope(dfdB, gamma_e: float):
    """x = |df/dB| / gamma_e, clipped to [0, 1]."""
    return np.clip(np.abs(np.asarray(dfdB, dtype=float)) / gamma_e, 0.0, 1.0)


@dataclass
class T2Fit:
    model: DecoherenceModel
    per_concentration: dict
    residuals: np.ndarray
    rel_uncertainty: dict
    unidentifiable: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "per_concentration": {repr(c): m.to_dict() for c, m in sorted(self.per_concentration.items())},
            "rel_uncertainty": self.rel_uncertainty,
            "unidentifiable": list(self.unidentifiable),
            "rms_log_residual": float(np.sqrt(np.mean(self.residuals**2))),
        }


def _design(x, C, exponents):
    return np.column_stack([C ** exponents[0], C ** exponents[1] * x, C ** exponents[2] * x**2])


def _fit_channels(x, C, rate, exponents):
    """Non-negative least squares on log(1/T2); returns coefficients, residuals, covariance."""
    X = _design(x, C, exponents)
    # column scaling so the optimizer works on O(1) numbers
    scale = np.array([np.max(np.abs(X[:, k])) or 1.0 for k in range(3)])
    Xs = X / scale
    y = rate / np.median(rate)
    w = 1.0 / y
    p0, _ = nnls(Xs * w[:, None], np.ones_like(y))
    floor = 1e-12 * max(p0.max(), 1.0)
    p0 = np.maximum(p0, floor)

    def resid(p):
        return np.log(Xs @ p) - np.log(y)

    def jac(p):
        return Xs / (Xs @ p)[:, None]

    sol = least_squares(resid, p0, jac=jac, bounds=(np.zeros(3), np.full(3, np.inf)), method="trf",
                        x_scale="jac", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=2000)
    p = sol.x
    J = jac(p)
    dof = max(len(y) - 3, 1)
    s2 = float(sol.fun @ sol.fun) / dof
    try:
        cov = np.linalg.pinv(J.T @ J) * max(s2, 1e-6**2)
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.inf)
    coef = p * np.median(rate) / scale
    sd = np.sqrt(np.abs(np.diag(cov))) * np.median(rate) / scale
    return coef, sol.fun, sd


def fit_t2_model(data: Sequence, shared: bool = True, exponents=(1.0, 1.0, 1.0),
                 rel_threshold: float = 1.0) -> T2Fit:
    """Fit channel coefficients to measured coherence times.

    Parameters
    ----------
    data : sequence of (x, C, T2)
        Normalized slope, donor concentration (cm^-3) and T2 (s).
    shared : bool
        One set of coefficients for all concentrations (scaled by C), or an
        independent set per concentration.
    exponents : tuple
        Concentration power per channel (dFF, iFF, ID).
    rel_threshold : float
        A coefficient whose standard error exceeds this fraction of its
        value, or which is pinned at zero, is reported as unidentifiable.

    Raises
    ------
    FitError
        Fewer than 3 points, or all points share one x value.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise FitError("data must be rows of (x, C, T2)")
    if len(arr) < 3:
        raise FitError(f"need at least 3 points to fit 3 channels, got {len(arr)}")
    x, C, T2 = arr.T
    if np.any(T2 <= 0) or np.any(C <= 0):
        raise FitError("T2 and concentration must be positive")
    if np.any((x < 0) | (x > 1)):
        raise FitError("normalized slope x must lie in [0, 1]")
    if np.ptp(x) == 0:
        raise FitError("all points have the same x: channels are rank-deficient")
    rate = 1.0 / T2

    span_ok = x.min() == 0 or x.max() / x.min() >= 10

    def check(coef, sd, tag):
        bad = []
        for name, c, s in zip(CHANNELS, coef, sd):
            if c <= 0 or s > rel_threshold * c:
                bad.append(f"{name}{tag}")
        if not span_ok and f"dFF{tag}" not in bad:
            bad.append(f"dFF{tag}")
        return bad

    if shared:
        coef, res, sd = _fit_channels(x, C, rate, exponents)
        Cref = float(np.min(C))
        model = DecoherenceModel(*coef, C=Cref, exponents=tuple(exponents))
        per_c = {float(c): model.with_concentration(float(c)) for c in np.unique(C)}
        unident = check(coef, sd, "")
        rel = {n: (float(s / c) if c > 0 else math.inf) for n, c, s in zip(CHANNELS, coef, sd)}
    else:
        per_c, res_all, rel, unident = {}, [], {}, []
        for c in np.unique(C):
            m = C == c
            if m.sum() < 3 or np.ptp(x[m]) == 0:
                raise FitError(f"concentration {c:g} has too few distinct points for a separate fit")
            coef, res, sd = _fit_channels(x[m], C[m], rate[m], exponents)
            per_c[float(c)] = DecoherenceModel(*coef, C=float(c), exponents=tuple(exponents))
            res_all.append(res)
            tag = f"@{c:g}"
            unident += check(coef, sd, tag)
            rel.update({n + tag: (float(s / k) if k > 0 else math.inf) for n, k, s in zip(CHANNELS, coef, sd)})
        res = np.concatenate(res_all)
        model = per_c[min(per_c)]
    if unident:
        warnings.warn(f"coefficients not identifiable from these data: {', '.join(unident)}",
                      IdentifiabilityWarning, stacklevel=2)
    return T2Fit(model=model, per_concentration=per_c, residuals=np.asarray(res),
                 rel_uncertainty=rel, unidentifiable=unident)


@dataclass
class EchoDecay:
    delays: np.ndarray
    amplitude: np.ndarray
    T2: float
    n: float


def simulate_echo_decay(T2: float, n: float, delays, noise: float = 0.0, magnitude: bool = False,
                        rng: Optional[np.random.Generator] = None) -> EchoDecay:
    """Stretched-exponential echo decay exp(-(2tau/T2)**n) sampled at ``delays`` (2tau, s).

    ``noise`` is the standard deviation of additive Gaussian noise.  With
    ``magnitude=True`` the noise is added to both quadratures and the
    modulus is returned, as in magnitude detection.  Pass ``rng`` (a numpy
    Generator) for reproducible fixtures.
    """
    if not T2 > 0:
        raise ValueError("T2 must be positive")
    if not 0.5 <= n <= 4:
        raise ValueError("stretch exponent must lie in [0.5, 4]")
    delays = np.asarray(delays, dtype=float)
    amp = np.exp(-((delays / T2) ** n))
    if noise:
        rng = rng if rng is not None else np.random.default_rng()
        if magnitude:
            amp = np.abs(amp + noise * (rng.normal(size=amp.shape) + 1j * rng.normal(size=amp.shape)))
        else:
            amp = amp + rng.normal(0.0, noise, size=amp.shape)
    return EchoDecay(delays=delays, amplitude=amp, T2=float(T2), n=float(n))


@dataclass
class EchoFit:
    T2: float
    n: float
    amplitude: float
    baseline: float
    T2_err: float
    n_err: float
    residual_rms: float

    def to_dict(self) -> dict:
        return asdict(self)


def stretched_exponential(t, a, T2, n, floor=0.0, mode: str = "quadrature"):
    """a * exp(-(t/T2)**n) on top of a noise floor.

    ``mode="quadrature"`` adds the floor in quadrature, which follows the
    mean of magnitude-detected noise; ``"additive"`` adds it linearly.
    """
    s = a * np.exp(-((np.asarray(t, dtype=float) / T2) ** n))
    if mode == "quadrature":
        return np.sqrt(s**2 + floor**2)
    if mode == "additive":
        return s + floor
    raise ValueError(f"unknown floor mode {mode!r}")


def fit_echo_decay(delays, amplitude, floor: Optional[str] = "quadrature") -> EchoFit:
    """Fit a stretched exponential to an echo decay.

    ``delays`` are total evolution times 2tau (s).  ``floor`` selects how
    the noise floor of magnitude-detected data is modeled ("quadrature",
    "additive", or None for no floor).  The returned T2 is the 1/e time of
    the decaying part.

    Raises
    ------
    FitError
        Fewer than 8 points, negative amplitudes or no visible decay.
    ConvergenceError
        The optimizer failed.
    """
    t = np.asarray(delays, dtype=float)
    y = np.asarray(amplitude, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitError("delays and amplitudes must be 1-d arrays of equal length")
    if len(t) < 8:
        raise FitError(f"need at least 8 points, got {len(t)}")
    if np.any(y < 0):
        raise FitError("negative amplitudes; use magnitude-detected data")
    order = np.argsort(t)
    t, y = t[order], y[order]
    edge = max(2, len(y) // 10)
    y0 = y[:edge].mean()
    yend = y[-edge:].mean()
    if y0 <= 0 or (y0 - yend) < 0.1 * y0:
        raise FitError("no decay detected")

    # initial T2: first crossing of 1/e between start and end levels
    target = yend + (y0 - yend) / np.e
    below = np.flatnonzero(y <= target)
    T2_0 = t[below[0]] if below.size and t[below[0]] > 0 else np.median(t[t > 0])
    tmax = t.max()
    mode = floor or "additive"
    with_floor = floor is not None

    def resid(p):
        return stretched_exponential(t, p[0], p[1], p[2], p[3] if with_floor else 0.0, mode) - y

    lo = [0.0, 1e-6 * tmax, 0.3] + ([0.0 if floor == "quadrature" else -y0] if with_floor else [])
    hi = [10 * y0, 1e3 * tmax, 6.0] + ([y0] if with_floor else [])
    best = None
    for n0 in (0.8, 1.5, 2.5):
        p0 = [y0 - yend, T2_0, n0] + ([max(yend, 1e-3 * y0)] if with_floor else [])
        p0 = np.clip(p0, np.array(lo) + 1e-12, np.array(hi) - 1e-12)
        sol = least_squares(resid, p0, bounds=(lo, hi), x_scale="jac", method="trf",
                            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=5000)
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or best.status <= 0:
        raise ConvergenceError("echo decay fit did not converge")
    p = best.x
    J = best.jac
    dof = max(len(t) - len(p), 1)
    cov = np.linalg.pinv(J.T @ J) * (2 * best.cost / dof)
    err = np.sqrt(np.abs(np.diag(cov)))
    return EchoFit(
        T2=float(p[1]),
        n=float(p[2]),
        amplitude=float(p[0]),
        baseline=float(p[3]) if with_floor else 0.0,
        T2_err=float(err[1]),
        n_err=float(err[2]),
        residual_rms=float(np.sqrt(2 * best.cost / len(t))),
    )
