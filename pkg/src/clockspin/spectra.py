"""Echo-detected field-sweep ESR spectra at a fixed microwave frequency.

Every |dmF| = 1 transition contributes ``intensity * lineshape(f_mw - f(B))``
at each field point, with a frequency-domain width that combines an
intrinsic width with hyperfine and field spreads propagated through the
transition's derivatives.  All widths are full widths at half maximum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spin_core import SpinOperators, SpinSystem, build_operators, solve, sweep
from .transitions import selection

__all__ = [
    "LinewidthModel",
    "Spectrum",
    "UnresolvedPeakWarning",
    "PRESET_LINEWIDTHS",
    "effective_linewidth",
    "lineshape",
    "field_sweep",
    "find_peaks",
    "peak_width_field_domain",
    "spectrum_rows",
]

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


class UnresolvedPeakWarning(UserWarning):
    """The half-maximum contour of a peak runs into a neighbouring peak."""


@dataclass(frozen=True)
class LinewidthModel:
    """Inhomogeneous broadening, all widths as FWHM.

    sigma_f0 : intrinsic frequency-domain width (GHz)
    sigma_A : spread of the hyperfine constant (GHz)
    sigma_B : spread of the static field (T)
    """

    sigma_f0: float = 270e-6
    sigma_A: float = 0.0
    sigma_B: float = 0.0
    shape: str = "gaussian"

    def __post_init__(self):
        widths = (self.sigma_f0, self.sigma_A, self.sigma_B)
        if min(widths) < 0:
            raise ValueError("linewidths must be non-negative")
        if max(widths) <= 0:
            raise ValueError("at least one linewidth must be positive")
        if self.shape not in ("gaussian", "lorentzian"):
            raise ValueError(f"shape must be 'gaussian' or 'lorentzian', got {self.shape!r}")


PRESET_LINEWIDTHS = {
    "28Si": LinewidthModel(sigma_f0=270e-6),
    "natSi": LinewidthModel(sigma_f0=500e-6),
}


def effective_linewidth(trans, model: LinewidthModel, B=None):
    """Frequency-domain FWHM (GHz) of a transition.

    ``trans`` needs ``dfdA`` and ``dfdB`` attributes; both may be arrays.
    ``B`` is accepted for symmetry with field-dependent callers and unused,
    since the derivatives already carry the field dependence.
    """
    dA = np.asarray(trans.dfdA, dtype=float)
    dB = np.asarray(trans.dfdB, dtype=float)
    return np.sqrt(model.sigma_f0**2 + (dA * model.sigma_A) ** 2 + (dB * model.sigma_B) ** 2)


def lineshape(detuning, width, shape: str = "gaussian"):
    """Peak-normalized line profile with full width at half maximum ``width``."""
    detuning = np.asarray(detuning, dtype=float)
    width = np.broadcast_to(np.asarray(width, dtype=float), detuning.shape)
    out = np.zeros(detuning.shape)
    ok = width > 0
    x = np.zeros(detuning.shape)
    x[ok] = detuning[ok] / width[ok]
    if shape == "gaussian":
        out[ok] = np.exp(-4.0 * np.log(2.0) * x[ok] ** 2)
    elif shape == "lorentzian":
        out[ok] = 1.0 / (1.0 + 4.0 * x[ok] ** 2)
    else:
        raise ValueError(f"unknown lineshape {shape!r}")
    out[~ok & (detuning == 0)] = 1.0
    return out


@dataclass
class Spectrum:
    f_mw: float
    fields: np.ndarray
    amplitude: np.ndarray
    components: dict = field(default_factory=dict)
    selections: dict = field(default_factory=dict)


@dataclass
class _BranchData:
    dfdA: np.ndarray
    dfdB: np.ndarray


def field_sweep(sys: SpinSystem, f_mw: float, B_range, n_points: int = 2001,
                model: Optional[LinewidthModel] = None, ops: Optional[SpinOperators] = None,
                rel_cutoff: float = 1e-9) -> Spectrum:
    """Simulated echo intensity versus field at microwave frequency ``f_mw`` (GHz).

    The total is normalized to a maximum of 1 (left at zero if nothing is
    resonant); components share the same scale factor and are keyed by
    their |F, mF> labels at the centre of the sweep.  Components whose
    peak stays below ``rel_cutoff`` of the strongest one are dropped.
    """
    model = model if model is not None else LinewidthModel()
    ops = ops if ops is not None else build_operators(sys)
    lo, hi = map(float, B_range)
    if lo > hi:
        raise ValueError(f"field range must be ordered, got {B_range!r}")
    fields = np.linspace(lo, hi, n_points)
    sw = sweep(sys, fields, ops)
    sz = sw.expectation(ops.Sz)
    iz = sw.expectation(ops.Iz)
    si = sw.expectation(ops.SdotI)
    drive = sys.gamma_e * ops.Sx - sys.gamma_n * ops.Ix
    mid = len(fields) // 2
    centre = solve(sys, fields[mid], ops)
    centre_keys = [lab.key for lab in centre.labels]

    raw = {}
    sel = {}
    d = sw.energies.shape[1]
    for a in range(d):
        for b in range(a + 1, d):
            if abs(abs(sw.mF[a] - sw.mF[b]) - 1) > 1e-9:
                continue
            dE = sw.energies[:, b] - sw.energies[:, a]
            f = np.abs(dE)
            sign = np.sign(dE)
            data = _BranchData(
                dfdA=sign * (si[:, b] - si[:, a]),
                dfdB=sign * (sys.gamma_e * (sz[:, b] - sz[:, a]) - sys.gamma_n * (iz[:, b] - iz[:, a])),
            )
            width = effective_linewidth(data, model)
            amp = np.einsum("ni,ij,nj->n", sw.vectors[:, :, a], drive, sw.vectors[:, :, b])
            contrib = amp**2 * lineshape(f_mw - f, width, model.shape)
            if not np.any(contrib > 0):
                continue
            la = centre.labels[centre_keys.index(sw.labels[a].key)]
            lb = centre.labels[centre_keys.index(sw.labels[b].key)]
            lower, upper = (la, lb) if dE[mid] >= 0 else (lb, la)
            name = f"{lower} -> {upper}"
            raw[name] = contrib
            sel[name] = selection(lower, upper)

    if not raw:
        return Spectrum(float(f_mw), fields, np.zeros(n_points), {}, {})
    peak = max(c.max() for c in raw.values())
    raw = {k: v for k, v in raw.items() if v.max() >= rel_cutoff * peak}
    total = np.sum(list(raw.values()), axis=0)
    scale = total.max()
    components = {k: raw[k] / scale for k in sorted(raw)}
    return Spectrum(float(f_mw), fields, total / scale, components, {k: sel[k] for k in sorted(raw)})


def find_peaks(spectrum: Spectrum, component: Optional[str] = None, min_rel_height: float = 0.5):
    """Indices of local maxima at or above ``min_rel_height`` of the trace maximum, in field order."""
    y = spectrum.amplitude if component is None else spectrum.components[component]
    if y.size == 0 or y.max() <= 0:
        return np.array([], dtype=int)
    thresh = min_rel_height * y.max()
    left = np.concatenate([[-np.inf], y[:-1]])
    right = np.concatenate([y[1:], [-np.inf]])
    is_peak = (y >= left) & (y > right) & (y >= thresh)
    return np.flatnonzero(is_peak)


def _half_crossing(x, y, start, half, step):
    k = start
    n = len(y)
    flagged = False
    lowest = y[start]
    while 0 <= k + step < n:
        nxt = k + step
        if y[nxt] < half:
            # linear interpolation between k and nxt
            t = (y[k] - half) / (y[k] - y[nxt])
            return x[k] + t * (x[nxt] - x[k]), flagged
        if y[nxt] > lowest and y[nxt] > y[k]:
            flagged = True
        lowest = min(lowest, y[nxt])
        k = nxt
    raise ValueError("peak half-maximum extends beyond the sampled field range")


def peak_width_field_domain(spectrum: Spectrum, which_peak: int = 0, component: Optional[str] = None) -> float:
    """Full width at half maximum (T) of one peak of a field sweep.

    ``which_peak`` indexes the peaks returned by `find_peaks` in order of
    increasing field.  If the half-maximum contour passes into a
    neighbouring peak an `UnresolvedPeakWarning` is issued and the width of
    the merged feature is returned.
    """
    y = spectrum.amplitude if component is None else spectrum.components[component]
    peaks = find_peaks(spectrum, component)
    if len(peaks) == 0:
        raise ValueError("spectrum has no peak")
    try:
        p = peaks[which_peak]
    except IndexError:
        raise IndexError(f"peak {which_peak} requested but only {len(peaks)} found") from None
    half = 0.5 * y[p]
    x = spectrum.fields
    left, flag_l = _half_crossing(x, y, p, half, -1)
    right, flag_r = _half_crossing(x, y, p, half, +1)
    if flag_l or flag_r:
        warnings.warn(
            f"peak at {x[p]:.6g} T is not resolved from its neighbour at half maximum",
            UnresolvedPeakWarning,
            stacklevel=2,
        )
    return float(right - left)


def spectrum_rows(spectrum: Spectrum) -> list:
    rows = []
    names = list(spectrum.components)
    for n, B in enumerate(spectrum.fields):
        row = {"B_T": float(B), "amplitude": float(spectrum.amplitude[n])}
        for name in names:
            row[name] = float(spectrum.components[name][n])
        rows.append(row)
    return rows
