"""Locate clock transitions: fields where df/dB (or df/dA) of a transition vanishes.

Each transition branch is followed over a field grid, sign changes of the
chosen derivative are bracketed, and every bracket is refined with Brent's
method.  Touching zeros without a sign change are reported as grazing
points rather than as clock transitions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .spin_core import SpinOperators, SpinSystem, Sweep, build_operators, solve, sweep
from .transitions import ESR, NMR, branch_function, intensity_floor, second_derivative, selection

__all__ = [
    "Bracket",
    "Grazing",
    "ScanResult",
    "ClockTransition",
    "ClockSite",
    "RefinementError",
    "branch_pairs",
    "scan_and_bracket",
    "refine_ct",
    "find_all_cts",
    "group_doublets",
    "ct_rows",
    "DEFAULT_GRID",
]

log = logging.getLogger(__name__)

DEFAULT_GRID = 2048
FIELD_TOL = 1e-9  # T
DERIV_TOL = 1e-6  # GHz/T, or GHz/GHz for df/dA
GRAZING_TOL = 1e-4
ZERO_TOL = 1e-12
MIN_FREQ = 1e-6  # GHz; pairs degenerate at the root are not transitions
QUANTITIES = ("dfdB", "dfdA")


class RefinementError(RuntimeError):
    """Root refinement lost its bracket or missed its tolerance."""


@dataclass(frozen=True)
class Bracket:
    key: tuple
    lo: float
    hi: float
    g_lo: float
    g_hi: float
    quantity: str = "dfdB"


@dataclass(frozen=True)
class Grazing:
    key: tuple
    B: float
    value: float
    quantity: str = "dfdB"


@dataclass
class ScanResult:
    brackets: list
    grazing: list


@dataclass
class ClockTransition:
    key: tuple
    B_star: float
    f_star: float
    curvature: float
    kind: str
    quantity: str
    selection: int
    residual: float
    bracket: tuple
    label_i: str = ""
    label_j: str = ""
    weak: bool = False

    def row(self) -> dict:
        return {
            "quantity": self.quantity,
            "kind": self.kind,
            "B_star_T": self.B_star,
            "f_star_GHz": self.f_star,
            "curvature_GHz_per_T2": self.curvature,
            "level_i": self.label_i,
            "level_j": self.label_j,
            "selection": self.selection,
        }


def _derivative_along(sw: Sweep, quantity: str) -> np.ndarray:
    ops, sys = sw.ops, sw.system
    if quantity == "dfdB":
        return sys.gamma_e * sw.expectation(ops.Sz) - sys.gamma_n * sw.expectation(ops.Iz)
    if quantity == "dfdA":
        return sw.expectation(ops.SdotI)
    raise ValueError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")


def branch_pairs(sw: Sweep):
    """Branch index pairs (i, j) connected by |dmF| = 1, ordered by energy at the first field."""
    d = len(sw.labels)
    e0 = sw.energies[0]
    pairs = []
    for a in range(d):
        for b in range(a + 1, d):
            if abs(abs(sw.mF[a] - sw.mF[b]) - 1) > 1e-9:
                continue
            i, j = (a, b) if e0[a] <= e0[b] else (b, a)
            pairs.append((i, j))
    return pairs


def _brackets_on_grid(fields, g, key, quantity):
    brackets, grazing = [], []
    s = np.where(np.abs(g) <= ZERO_TOL, 0.0, np.sign(g))
    for p in range(len(fields) - 1):
        if s[p] == 0:
            lo = fields[max(p - 1, 0)]
            hi = fields[min(p + 1, len(fields) - 1)]
            if p > 0 and s[p - 1] == s[p + 1] != 0:
                grazing.append(Grazing(key, float(fields[p]), 0.0, quantity))
            elif lo < hi:
                brackets.append(Bracket(key, float(lo), float(hi), float(g[max(p - 1, 0)]),
                                        float(g[min(p + 1, len(fields) - 1)]), quantity))
        elif s[p] * s[p + 1] < 0:
            brackets.append(Bracket(key, float(fields[p]), float(fields[p + 1]),
                                    float(g[p]), float(g[p + 1]), quantity))
    a = np.abs(g)
    for p in range(1, len(fields) - 1):
        if a[p] <= a[p - 1] and a[p] < a[p + 1] and a[p] < GRAZING_TOL and s[p - 1] == s[p] == s[p + 1] != 0:
            grazing.append(Grazing(key, float(fields[p]), float(g[p]), quantity))
    return brackets, grazing


def scan_and_bracket(sys: SpinSystem, transition, B_range, n_grid: int = DEFAULT_GRID,
                     quantity: str = "dfdB", ops: Optional[SpinOperators] = None,
                     sw: Optional[Sweep] = None) -> ScanResult:
    """Sign-change intervals of df/dB (or df/dA) along one tracked transition branch.

    ``transition`` is anything with a ``key`` attribute (a `Transition`) or
    the key itself: a pair of (mF, rank) branch identities.
    """
    if n_grid < 16:
        raise ValueError(f"n_grid must be >= 16, got {n_grid}")
    lo, hi = map(float, B_range)
    if not lo < hi:
        raise ValueError(f"field range must satisfy min < max, got {B_range!r}")
    key = tuple(getattr(transition, "key", transition))
    if sw is None:
        sw = sweep(sys, np.linspace(lo, hi, n_grid), ops)
    i, j = sw.branch_index(key[0]), sw.branch_index(key[1])
    d = _derivative_along(sw, quantity)
    g = d[:, j] - d[:, i]
    brackets, grazing = _brackets_on_grid(sw.fields, g, key, quantity)
    return ScanResult(brackets, grazing)


def refine_ct(bracket: Bracket, sys: SpinSystem, ops: Optional[SpinOperators] = None,
              func=None) -> ClockTransition:
    """Refine a bracket to a clock transition.

    Brent's method (bisection safeguarded inverse quadratic interpolation)
    narrows the root to FIELD_TOL; the root is accepted only if the
    derivative there is below DERIV_TOL and its sign still changes across
    B* +/- FIELD_TOL/2.  ``func`` overrides the derivative along the
    branch (it defaults to the Hellmann-Feynman value on the real
    Hamiltonian), which lets synthetic branches be refined too.
    """
    ops = ops if ops is not None else (build_operators(sys) if sys is not None else None)
    g = func if func is not None else branch_function(sys, bracket.key, bracket.quantity, ops)
    try:
        g_lo, g_hi = g(bracket.lo), g(bracket.hi)
    except Exception as exc:
        raise RefinementError(f"derivative evaluation failed on bracket [{bracket.lo}, {bracket.hi}] T") from exc
    if abs(g_lo) <= ZERO_TOL:
        B_star = bracket.lo
    elif abs(g_hi) <= ZERO_TOL:
        B_star = bracket.hi
    elif np.sign(g_lo) == np.sign(g_hi):
        raise RefinementError(
            f"no sign change on [{bracket.lo}, {bracket.hi}] T for {bracket.key}: "
            f"g = {g_lo:.3g}, {g_hi:.3g}"
        )
    else:
        B_star = brentq(g, bracket.lo, bracket.hi, xtol=FIELD_TOL / 10, rtol=4 * np.finfo(float).eps, maxiter=200)
    residual = g(B_star)
    half = FIELD_TOL / 2
    left, right = g(max(B_star - half, bracket.lo)), g(min(B_star + half, bracket.hi))
    if abs(residual) > ZERO_TOL and left * right > 0:
        raise RefinementError(f"bracket certificate failed at B*={B_star!r} T for {bracket.key}")
    if abs(residual) > DERIV_TOL:
        raise RefinementError(
            f"|{bracket.quantity}| = {abs(residual):.3g} at B*={B_star!r} T exceeds {DERIV_TOL}"
        )

    if func is not None:
        curv = second_derivative(func, B_star) if bracket.quantity == "dfdB" else float("nan")
        return ClockTransition(
            key=bracket.key, B_star=float(B_star), f_star=float("nan"), curvature=curv,
            kind="", quantity=bracket.quantity, selection=0, residual=float(residual),
            bracket=(B_star - half, B_star + half),
        )

    sol = solve(sys, B_star, ops)
    keys = [lab.key for lab in sol.labels]
    i, j = keys.index(bracket.key[0]), keys.index(bracket.key[1])
    # the branch pair may have crossed since the scan started; report lower -> upper
    orient = 1.0
    if sol.energies[j] < sol.energies[i]:
        i, j, orient = j, i, -1.0
    li, lj = sol.labels[i], sol.labels[j]
    vi, vj = sol.vectors[:, i], sol.vectors[:, j]
    amp = sys.gamma_e * (vi @ ops.Sx @ vj) - sys.gamma_n * (vi @ ops.Ix @ vj)
    dfdB_func = branch_function(sys, bracket.key, "dfdB", ops)
    return ClockTransition(
        key=bracket.key,
        B_star=float(B_star),
        f_star=float(sol.energies[j] - sol.energies[i]),
        curvature=float(orient * second_derivative(dfdB_func, B_star)),
        kind=ESR if li.mS_hf != lj.mS_hf else NMR,
        quantity=bracket.quantity,
        selection=selection(li, lj),
        residual=float(residual),
        bracket=(float(B_star - half), float(B_star + half)),
        label_i=str(li),
        label_j=str(lj),
        weak=bool(amp**2 < intensity_floor(sys)),
    )


def find_all_cts(sys: SpinSystem, B_range, quantity: str = "dfdB", n_grid: int = DEFAULT_GRID,
                 ops: Optional[SpinOperators] = None, include_weak: bool = False) -> list:
    """All clock transitions of every |dmF| = 1 branch inside ``B_range``, sorted by field.

    A degenerate range (min == max) has nothing to scan and returns an
    empty list.  Refinement failures on one branch are logged and do not
    stop the scan.  Branches whose drive intensity stays below the weak
    floor over the whole range are skipped unless ``include_weak``.
    """
    if quantity not in QUANTITIES:
        raise ValueError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    lo, hi = map(float, B_range)
    if lo > hi:
        raise ValueError(f"field range must be ordered, got {B_range!r}")
    if lo == hi:
        return []
    ops = ops if ops is not None else build_operators(sys)
    sw = sweep(sys, np.linspace(lo, hi, n_grid), ops)
    deriv = _derivative_along(sw, quantity)
    floor = intensity_floor(sys)
    drive = sys.gamma_e * ops.Sx - sys.gamma_n * ops.Ix
    found = []
    for i, j in branch_pairs(sw):
        key = (sw.labels[i].key, sw.labels[j].key)
        if not include_weak:
            amp = np.einsum("ni,ij,nj->n", sw.vectors[:, :, i], drive, sw.vectors[:, :, j])
            if np.max(amp**2) < floor:
                continue
        brackets, grazing = _brackets_on_grid(sw.fields, deriv[:, j] - deriv[:, i], key, quantity)
        for gz in grazing:
            log.info("grazing %s at %.6g T (|g| = %.3g) for %s", quantity, gz.B, abs(gz.value), key)
        for br in brackets:
            try:
                ct = refine_ct(br, sys, ops)
            except RefinementError as exc:
                log.warning("refinement failed: %s", exc)
                continue
            if ct.weak and not include_weak:
                continue
            if ct.f_star < MIN_FREQ:
                log.info("discarding degenerate pair %s at %.6g T", key, ct.B_star)
                continue
            found.append(ct)
    found.sort(key=lambda c: (c.B_star, c.key))
    unique = []
    for ct in found:
        if any(u.key == ct.key and abs(u.B_star - ct.B_star) <= 1e-6 for u in unique):
            continue
        unique.append(ct)
    return unique


@dataclass
class ClockSite:
    """Clock transitions of one kind that sit within a small field window of each other."""

    B_mean: float
    members: list

    @property
    def kind(self) -> str:
        return self.members[0].kind

    @property
    def is_doublet(self) -> bool:
        return sorted(m.selection for m in self.members) == [-1, 1]

    @property
    def splitting(self) -> float:
        fs = [m.f_star for m in self.members]
        return max(fs) - min(fs)


def group_doublets(cts, window: float = 1.5e-3) -> list:
    """Cluster clock transitions of the same kind whose fields lie within ``window`` (T)."""
    sites = []
    for ct in sorted(cts, key=lambda c: c.B_star):
        for site in sites:
            if site.kind == ct.kind and abs(ct.B_star - site.members[0].B_star) <= window:
                site.members.append(ct)
                site.B_mean = float(np.mean([m.B_star for m in site.members]))
                break
        else:
            sites.append(ClockSite(ct.B_star, [ct]))
    return sites


def ct_rows(cts) -> list:
    return [ct.row() for ct in cts]
