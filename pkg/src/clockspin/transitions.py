"""Transitions between eigenlevels: frequencies, derivatives, intensities.

Field and hyperfine derivatives come from the Hellmann-Feynman theorem,

    df/dB = gamma_e (<Sz>_j - <Sz>_i) - gamma_n (<Iz>_j - <Iz>_i)
    df/dA = <S.I>_j - <S.I>_i

and the curvature d2f/dB2 from Richardson-extrapolated central differences
of the analytic df/dB.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .spin_core import (
    DEGENERACY_TOL,
    EigenSolution,
    SpinOperators,
    SpinSystem,
    build_operators,
    solve,
)

__all__ = [
    "ESR",
    "NMR",
    "Transition",
    "DegenerateLevelWarning",
    "StepSizeError",
    "all_transitions",
    "find_transition",
    "dfdB",
    "dfdA",
    "d2fdB2",
    "second_derivative",
    "branch_function",
    "classify",
    "selection",
    "intensity_floor",
    "transition_rows",
]

ESR = "ESR"
NMR = "NMR"


class DegenerateLevelWarning(UserWarning):
    """A derivative was evaluated on a level that is part of a degenerate manifold."""


class StepSizeError(RuntimeError):
    """Richardson refinement of a finite difference failed to converge."""


@dataclass
class Transition:
    """One level pair at one field.

    ``level_i < level_j`` index the ascending-energy levels of the
    eigensolution at ``B0``; ``key`` holds their branch identities
    ((mF, rank) pairs) which stay valid at any other field.
    """

    B0: float
    level_i: int
    level_j: int
    f: float
    dfdB: float
    dfdA: float
    intensity: float
    kind: str
    selection: int
    d2fdB2: float = float("nan")
    weak: bool = False
    sx: float = 0.0
    ix: float = 0.0
    key: tuple = ()
    label_i: str = ""
    label_j: str = ""

    def row(self) -> dict:
        return {
            "B0": self.B0,
            "i": self.level_i,
            "j": self.level_j,
            "f": self.f,
            "dfdB": self.dfdB,
            "d2fdB2": self.d2fdB2,
            "dfdA": self.dfdA,
            "intensity": self.intensity,
            "kind": self.kind,
            "selection": self.selection,
        }


def intensity_floor(sys: SpinSystem) -> float:
    """Default intensity below which a transition is marked weak."""
    return 1e-6 * (0.5 * sys.gamma_e) ** 2


def _expect(sol, op, k):
    v = sol.vectors[:, k]
    return float(v @ op @ v)


def _warn_degenerate(sol, *levels):
    E = sol.energies
    tol = DEGENERACY_TOL * max(1.0, float(np.abs(E).max()))
    for k in levels:
        others = np.delete(E, k)
        if np.any(np.abs(others - E[k]) <= tol):
            warnings.warn(
                f"level {k} is degenerate at B0={sol.B0} T; derivative taken in the Fz-aligned basis",
                DegenerateLevelWarning,
                stacklevel=3,
            )
            return


def dfdB(trans: Transition, sol: EigenSolution, sys: SpinSystem, ops: Optional[SpinOperators] = None) -> float:
    """Field derivative of the transition frequency, GHz/T."""
    ops = ops if ops is not None else build_operators(sys)
    i, j = trans.level_i, trans.level_j
    _warn_degenerate(sol, i, j)
    dsz = _expect(sol, ops.Sz, j) - _expect(sol, ops.Sz, i)
    diz = _expect(sol, ops.Iz, j) - _expect(sol, ops.Iz, i)
    return sys.gamma_e * dsz - sys.gamma_n * diz


def dfdA(trans: Transition, sol: EigenSolution, ops: SpinOperators) -> float:
    """Hyperfine derivative of the transition frequency (GHz per GHz)."""
    i, j = trans.level_i, trans.level_j
    _warn_degenerate(sol, i, j)
    return _expect(sol, ops.SdotI, j) - _expect(sol, ops.SdotI, i)


def classify(trans: Transition, sol: EigenSolution) -> str:
    """ESR-type if the transition flips the electron spin in the high-field limit.

    Each level is followed adiabatically to its high-field product state
    |mS, mI>; a change of mS means the transition is driven through Sx
    as the field grows, otherwise through Ix.
    """
    li, lj = sol.labels[trans.level_i], sol.labels[trans.level_j]
    return ESR if li.mS_hf != lj.mS_hf else NMR


def selection(label_i, label_j) -> int:
    """Sign of dF * dmF for a transition from ``label_i`` up to ``label_j``; 0 otherwise."""
    prod = (label_j.F - label_i.F) * (label_j.mF - label_i.mF)
    if prod == 1:
        return 1
    if prod == -1:
        return -1
    return 0


def all_transitions(sol: EigenSolution, sys: SpinSystem, ops: Optional[SpinOperators] = None,
                    floor: Optional[float] = None, curvature: bool = False) -> list:
    """Every level pair with |dmF| = 1 and nonzero frequency at the eigensolution's field.

    The intensity is |<i| gamma_e Sx - gamma_n Ix |j>|^2.  Pairs below
    ``floor`` are kept and marked ``weak``.  With ``curvature=True`` the
    second field derivative is evaluated as well (costs extra solves).
    """
    ops = ops if ops is not None else build_operators(sys)
    if sol.labels is None:
        raise ValueError("eigensolution must be labelled (see label_states)")
    floor = intensity_floor(sys) if floor is None else floor
    V = sol.vectors
    sx = V.T @ ops.Sx @ V
    ix = V.T @ ops.Ix @ V
    sz = np.einsum("ik,ij,jk->k", V, ops.Sz, V)
    iz = np.einsum("ik,ij,jk->k", V, ops.Iz, V)
    si = np.einsum("ik,ij,jk->k", V, ops.SdotI, V)
    # zero-frequency pairs inside a degenerate manifold are not transitions
    degenerate = DEGENERACY_TOL * max(1.0, float(np.abs(sol.energies).max()))
    out = []
    d = sol.dim
    for i in range(d):
        for j in range(i + 1, d):
            if abs(abs(sol.mF[j] - sol.mF[i]) - 1) > 1e-9:
                continue
            if sol.energies[j] - sol.energies[i] <= degenerate:
                continue
            amp = sys.gamma_e * sx[i, j] - sys.gamma_n * ix[i, j]
            li, lj = sol.labels[i], sol.labels[j]
            t = Transition(
                B0=sol.B0,
                level_i=i,
                level_j=j,
                f=float(sol.energies[j] - sol.energies[i]),
                dfdB=float(sys.gamma_e * (sz[j] - sz[i]) - sys.gamma_n * (iz[j] - iz[i])),
                dfdA=float(si[j] - si[i]),
                intensity=float(amp**2),
                kind=ESR if li.mS_hf != lj.mS_hf else NMR,
                selection=selection(li, lj),
                sx=float(sx[i, j]),
                ix=float(ix[i, j]),
                key=(li.key, lj.key),
                label_i=str(li),
                label_j=str(lj),
            )
            t.weak = t.intensity < floor
            out.append(t)
    if curvature:
        for t in out:
            t.d2fdB2 = d2fdB2(t, sys, ops)
    return out


def find_transition(transitions, key=None, *, selection=None, near_f=None, kind=None):
    """Pick one transition from a list by branch key, or by selection/kind nearest a frequency."""
    cands = list(transitions)
    if key is not None:
        cands = [t for t in cands if t.key == tuple(key)]
    if selection is not None:
        cands = [t for t in cands if t.selection == selection]
    if kind is not None:
        cands = [t for t in cands if t.kind == kind]
    if not cands:
        raise LookupError("no transition matches the request")
    if near_f is not None:
        return min(cands, key=lambda t: abs(t.f - near_f))
    return cands[0]


def _pair_at(sys, ops, key, B):
    sol = solve(sys, B, ops)
    keys = [lab.key for lab in sol.labels]
    return sol, keys.index(key[0]), keys.index(key[1])


def branch_function(sys: SpinSystem, key, quantity: str = "dfdB", ops: Optional[SpinOperators] = None) -> Callable:
    """Scalar function B -> f, dfdB or dfdA along the branch identified by ``key``."""
    ops = ops if ops is not None else build_operators(sys)
    if quantity not in ("f", "dfdB", "dfdA"):
        raise ValueError(f"unknown quantity {quantity!r}")

    def g(B):
        sol, i, j = _pair_at(sys, ops, key, float(B))
        vi, vj = sol.vectors[:, i], sol.vectors[:, j]
        if quantity == "f":
            return float(sol.energies[j] - sol.energies[i])
        if quantity == "dfdA":
            return float(vj @ ops.SdotI @ vj - vi @ ops.SdotI @ vi)
        return float(
            sys.gamma_e * (vj @ ops.Sz @ vj - vi @ ops.Sz @ vi)
            - sys.gamma_n * (vj @ ops.Iz @ vj - vi @ ops.Iz @ vi)
        )

    return g


def second_derivative(first_derivative: Callable, x: float, h0: float = 1e-4, h_min: float = 1e-6,
                      rtol: float = 1e-7, atol: float = 1e-9) -> float:
    """Derivative of ``first_derivative`` at ``x`` by central differences with Richardson steps.

    The step starts at ``h0`` and is halved until two successive
    extrapolated values agree; `StepSizeError` if that does not happen
    before the step falls below ``h_min``.
    """
    def central(h):
        return (first_derivative(x + h) - first_derivative(x - h)) / (2 * h)

    h = h0
    d_h = central(h)
    prev = None
    while h / 2 >= h_min * (1 - 1e-12):
        d_half = central(h / 2)
        rich = (4 * d_half - d_h) / 3
        if prev is not None and abs(rich - prev) <= rtol * abs(rich) + atol:
            return rich
        prev, d_h, h = rich, d_half, h / 2
    raise StepSizeError(f"second derivative at {x!r} did not converge (last step {h:.3g})")


def d2fdB2(trans: Transition, sys: SpinSystem, ops: Optional[SpinOperators] = None, field: Optional[float] = None) -> float:
    """Curvature of the transition frequency along its branch, GHz/T^2."""
    B = trans.B0 if field is None else field
    return second_derivative(branch_function(sys, trans.key, "dfdB", ops), B)


def transition_rows(transitions) -> list:
    return [t.row() for t in transitions]
