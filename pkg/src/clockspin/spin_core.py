"""Donor spin Hamiltonian, eigensolutions and state labels.

The Hamiltonian of an electron spin S coupled to a nuclear spin I by an
isotropic hyperfine interaction in a static field B0 along z is

    H = B0 * (gamma_e * Sz - gamma_n * Iz) + A * S.I

written in frequency units (GHz) with B0 in tesla.  Matrices live in the
product basis |mS> x |mI>, both projections in descending order, where H is
real symmetric.

Because H commutes with Fz = Sz + Iz, every eigenvector has an exact mF and
for S = 1/2 the blocks are at most 2x2 (the Breit-Rabi problem), which
`breit_rabi_levels` solves in closed form as an independent check on the
dense solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "SpinSystem",
    "SpinOperators",
    "StateLabel",
    "EigenSolution",
    "Sweep",
    "EigensolverError",
    "BranchTrackingError",
    "LabelError",
    "PRESETS",
    "get_system",
    "spin_matrices",
    "build_operators",
    "hamiltonian",
    "eigensolve",
    "solve",
    "breit_rabi_levels",
    "zero_field_basis",
    "label_states",
    "sweep",
]

DEGENERACY_TOL = 1e-9
# levels closer than this (relative to ||H||) are re-aligned onto Fz; eigh can
# mix nearly degenerate levels of different mF by ~eps ||H|| / gap
ALIGN_TOL = 1e-6


class EigensolverError(RuntimeError):
    """Raised when diagonalization fails or produces an inaccurate result."""


class BranchTrackingError(RuntimeError):
    """Raised when levels cannot be matched between adjacent field points."""


class LabelError(ValueError):
    """Raised when an eigenvector does not carry a well-defined mF."""


def _half_integer(value, name):
    frac = Fraction(value).limit_denominator(1000)
    if frac < 0 or frac.denominator not in (1, 2) or abs(float(frac) - value) > 1e-12:
        raise ValueError(f"{name} must be a non-negative integer or half-integer, got {value!r}")
    return float(frac)


@dataclass(frozen=True)
class SpinSystem:
    """Constants of one donor species.

    Parameters
    ----------
    S, I : float
        Electron and nuclear spin quantum numbers.
    gamma_e, gamma_n : float
        Gyromagnetic ratios in GHz/T.  ``gamma_n`` enters with a leading
        minus sign in the Hamiltonian, so a positive value lowers the
        energy of states with positive mI.
    A : float
        Isotropic hyperfine constant in GHz.
    """

    S: float
    I: float
    gamma_e: float
    gamma_n: float
    A: float
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "S", _half_integer(self.S, "S"))
        object.__setattr__(self, "I", _half_integer(self.I, "I"))
        if not self.gamma_e > 0:
            raise ValueError(f"gamma_e must be positive, got {self.gamma_e!r}")
        for attr in ("gamma_n", "A"):
            if not np.isfinite(getattr(self, attr)):
                raise ValueError(f"{attr} must be finite")

    @property
    def dim(self) -> int:
        return int(round((2 * self.S + 1) * (2 * self.I + 1)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "S": self.S,
            "I": self.I,
            "gamma_e": self.gamma_e,
            "gamma_n": self.gamma_n,
            "A": self.A,
        }


PRESETS = {
    # 209Bi donor in silicon
    "Si:Bi": SpinSystem(S=0.5, I=4.5, gamma_e=27.997, gamma_n=0.007, A=1.47517, name="Si:Bi"),
    # 31P donor in silicon
    "Si:P": SpinSystem(S=0.5, I=0.5, gamma_e=27.97, gamma_n=0.017235, A=0.11753, name="Si:P"),
}


def get_system(name_or_params) -> SpinSystem:
    """Return a preset by name, or build a system from a mapping of constants."""
    if isinstance(name_or_params, SpinSystem):
        return name_or_params
    if isinstance(name_or_params, str):
        try:
            return PRESETS[name_or_params]
        except KeyError:
            raise KeyError(
                f"unknown spin system {name_or_params!r}; presets: {sorted(PRESETS)}"
            ) from None
    params = dict(name_or_params)
    return SpinSystem(
        S=float(params["S"]),
        I=float(params["I"]),
        gamma_e=float(params["gamma_e"]),
        gamma_n=float(params["gamma_n"]),
        A=float(params["A"]),
        name=str(params.get("name", "custom")),
    )


def spin_matrices(j: float):
    """Angular momentum matrices (jx, jy, jz) for spin j, basis m = j, j-1, ..., -j."""
    j = _half_integer(j, "j")
    m = np.arange(j, -j - 1, -1)
    # <m+1|J+|m>
    jplus = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), 1)
    jx = 0.5 * (jplus + jplus.T)
    jy = -0.5j * (jplus - jplus.T)
    jz = np.diag(m)
    return jx, jy, jz


@dataclass(frozen=True)
class SpinOperators:
    """Spin operators of a two-spin system in the product basis."""

    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray
    Ix: np.ndarray
    Iy: np.ndarray
    Iz: np.ndarray
    SdotI: np.ndarray
    mS: np.ndarray
    mI: np.ndarray

    @property
    def dim(self) -> int:
        return self.Sz.shape[0]

    @property
    def mF(self) -> np.ndarray:
        """Diagonal of Fz = Sz + Iz in the product basis."""
        return self.mS + self.mI


@lru_cache(maxsize=32)
def build_operators(sys: SpinSystem) -> SpinOperators:
    sx, sy, sz = spin_matrices(sys.S)
    ix, iy, iz = spin_matrices(sys.I)
    one_s = np.eye(sx.shape[0])
    one_i = np.eye(ix.shape[0])
    Sx, Sy, Sz = (np.kron(a, one_i) for a in (sx, sy, sz))
    Ix, Iy, Iz = (np.kron(one_s, a) for a in (ix, iy, iz))
    sdoti = Sx @ Ix + Sy @ Iy + Sz @ Iz
    # Sy (x) Iy is real, so S.I is real symmetric
    assert np.abs(sdoti.imag).max() < 1e-14
    return SpinOperators(
        Sx=Sx.real,
        Sy=Sy,
        Sz=Sz.real,
        Ix=Ix.real,
        Iy=Iy,
        Iz=Iz.real,
        SdotI=np.ascontiguousarray(sdoti.real),
        mS=np.diag(Sz).real.copy(),
        mI=np.diag(Iz).real.copy(),
    )


def hamiltonian(sys: SpinSystem, ops: SpinOperators, B0: float) -> np.ndarray:
    """Real symmetric Hamiltonian in GHz at field ``B0`` (T)."""
    if not np.isfinite(B0):
        raise ValueError(f"field must be finite, got {B0!r}")
    return B0 * (sys.gamma_e * ops.Sz - sys.gamma_n * ops.Iz) + sys.A * ops.SdotI


@dataclass(frozen=True)
class StateLabel:
    """Quantum-number labels of one eigenlevel.

    ``F`` is the zero-field total spin with the largest overlap and
    ``purity`` that squared overlap.  ``mS_hf``/``mI_hf`` are the product
    states the level connects to adiabatically as |B0| grows; ``rank`` is the
    level's energy rank inside its mF block, which is invariant along an
    adiabatic branch.
    """

    F: float
    mF: float
    purity: float
    mS_hf: float
    mI_hf: float
    rank: int

    @property
    def key(self) -> tuple:
        return (self.mF, self.rank)

    def __str__(self):
        return f"|F={_fmt_q(self.F)}, mF={_fmt_q(self.mF)}>"


def _fmt_q(q):
    return str(int(q)) if float(q).is_integer() else f"{int(round(2 * q))}/2"


@dataclass
class EigenSolution:
    B0: float
    energies: np.ndarray
    vectors: np.ndarray
    mF: Optional[np.ndarray] = None
    labels: Optional[list] = None

    @property
    def dim(self) -> int:
        return self.energies.shape[0]


def _fix_signs(vectors):
    # largest-magnitude component positive, for reproducible output
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _align_degenerate(H, energies, vectors, fz_diag, tol):
    """Make each vector of a (near-)degenerate cluster an eigenvector of Fz.

    The cluster subspace is rotated onto Fz eigenvectors and H is then
    re-diagonalized inside every Fz eigenspace, so vectors stay accurate
    eigenvectors even when the cluster is only nearly degenerate.
    """
    d = energies.shape[0]
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and energies[stop] - energies[stop - 1] <= tol:
            stop += 1
        if stop - start > 1:
            sub = vectors[:, start:stop]
            fz_sub = sub.T @ (fz_diag[:, None] * sub)
            mvals, rot = np.linalg.eigh(0.5 * (fz_sub + fz_sub.T))
            sub = sub @ rot
            groups = np.round(2 * mvals) / 2
            new_e, new_v = [], []
            for m in np.unique(groups):
                g = np.flatnonzero(groups == m)
                block = sub[:, g]
                h = block.T @ H @ block
                e, u = np.linalg.eigh(0.5 * (h + h.T))
                new_e.append(e)
                new_v.append(block @ u)
            new_e = np.concatenate(new_e)
            new_v = np.column_stack(new_v)
            order = np.argsort(new_e, kind="stable")
            energies[start:stop] = new_e[order]
            vectors[:, start:stop] = new_v[:, order]
        start = stop
    return energies, vectors


def eigensolve(H: np.ndarray, B0: float = float("nan"), fz: Optional[np.ndarray] = None) -> EigenSolution:
    """Diagonalize a real symmetric Hamiltonian.

    Energies are returned in ascending order.  If ``fz`` (the diagonal of
    Fz in the same basis) is given, eigenvectors within degenerate or nearly
    degenerate clusters are rotated to be simultaneous eigenvectors of Fz and the
    exact mF of every level is attached.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hamiltonian must be a square matrix")
    if not np.all(np.isfinite(H)):
        raise EigensolverError(f"non-finite Hamiltonian at B0={B0!r} T")
    norm = max(np.linalg.norm(H, 2), 1.0)
    try:
        energies, vectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver did not converge at B0={B0!r} T") from exc
    if fz is not None:
        fz = np.asarray(fz, dtype=float)
        energies, vectors = _align_degenerate(H, energies, vectors, fz, ALIGN_TOL * norm)
    vectors = _fix_signs(vectors)
    residual = np.linalg.norm(H @ vectors - vectors * energies, axis=0)
    if residual.max() > 1e-9 * norm:
        raise EigensolverError(
            f"eigenpair residual {residual.max():.3g} exceeds tolerance at B0={B0!r} T"
        )
    mF = None
    if fz is not None:
        mF = np.einsum("ik,i,ik->k", vectors, fz, vectors)
    return EigenSolution(B0=float(B0), energies=energies, vectors=vectors, mF=mF)


def solve(sys: SpinSystem, B0: float, ops: Optional[SpinOperators] = None, labels: bool = True) -> EigenSolution:
    """Build, diagonalize and (optionally) label the Hamiltonian at one field."""
    ops = ops if ops is not None else build_operators(sys)
    sol = eigensolve(hamiltonian(sys, ops, B0), B0=B0, fz=ops.mF)
    if labels:
        sol = label_states(sol, sys, ops)
    return sol


def breit_rabi_levels(sys: SpinSystem, B0: float) -> EigenSolution:
    """Closed-form eigensolution for S = 1/2, one mF block at a time.

    Each block mF with |mF| < I + 1/2 couples |+1/2, mF-1/2> and
    |-1/2, mF+1/2>; the two stretched states are already eigenstates.
    """
    if sys.S != 0.5:
        raise ValueError(f"Breit-Rabi solution requires S = 1/2, got S = {sys.S}")
    I = sys.I
    ge, gn, A = sys.gamma_e, sys.gamma_n, sys.A
    n_i = int(round(2 * I + 1))
    d = 2 * n_i

    def index(ms, mi):
        return (0 if ms > 0 else n_i) + int(round(I - mi))

    energies = []
    columns = []
    for mF in np.arange(-(I + 0.5), I + 0.5 + 0.5, 1.0):
        if abs(mF) == I + 0.5:
            ms = 0.5 if mF > 0 else -0.5
            mi = mF - ms
            vec = np.zeros(d)
            vec[index(ms, mi)] = 1.0
            energies.append(B0 * (ge * ms - gn * mi) + A * ms * mi)
            columns.append(vec)
            continue
        a = B0 * (0.5 * ge - gn * (mF - 0.5)) + 0.5 * A * (mF - 0.5)
        b = B0 * (-0.5 * ge - gn * (mF + 0.5)) - 0.5 * A * (mF + 0.5)
        c = 0.5 * A * np.sqrt((I + 0.5) ** 2 - mF**2)
        mean = 0.5 * (a + b)
        r = np.hypot(0.5 * (a - b), c)
        theta = 0.5 * np.arctan2(2 * c, a - b)
        up = np.zeros(d)
        lo = np.zeros(d)
        i1, i2 = index(0.5, mF - 0.5), index(-0.5, mF + 0.5)
        up[i1], up[i2] = np.cos(theta), np.sin(theta)
        lo[i1], lo[i2] = -np.sin(theta), np.cos(theta)
        energies += [mean + r, mean - r]
        columns += [up, lo]
    energies = np.array(energies)
    vectors = np.column_stack(columns)
    order = np.argsort(energies, kind="stable")
    vectors = _fix_signs(vectors[:, order])
    ms_diag = np.repeat([0.5, -0.5], n_i)
    mi_diag = np.tile(np.arange(I, -I - 1, -1), 2)
    mF = np.einsum("ik,i,ik->k", vectors, ms_diag + mi_diag, vectors)
    return EigenSolution(B0=float(B0), energies=energies[order], vectors=vectors, mF=mF)


@lru_cache(maxsize=32)
def _zero_field_basis(sys: SpinSystem):
    ops = build_operators(sys)
    mF_diag = ops.mF
    cols, Fs, mFs = [], [], []
    ss1 = sys.S * (sys.S + 1)
    ii1 = sys.I * (sys.I + 1)
    for mF in np.unique(mF_diag):
        idx = np.flatnonzero(np.isclose(mF_diag, mF))
        block = ops.SdotI[np.ix_(idx, idx)]
        vals, vecs = np.linalg.eigh(block)
        for k in range(len(idx)):
            col = np.zeros(ops.dim)
            col[idx] = vecs[:, k]
            F_ff1 = 2 * vals[k] + ss1 + ii1
            F = 0.5 * (-1 + np.sqrt(1 + 4 * F_ff1))
            cols.append(col)
            Fs.append(round(2 * F) / 2)
            mFs.append(mF)
    out = (np.column_stack(cols), np.array(Fs), np.array(mFs))
    for arr in out:
        arr.flags.writeable = False
    return out


def zero_field_basis(sys: SpinSystem, ops: Optional[SpinOperators] = None):
    """Coupled |F, mF> basis states as columns, with their F and mF values.

    Built by diagonalizing S.I inside each mF block, so every column is an
    exact simultaneous eigenvector of S.I and Fz.
    """
    return _zero_field_basis(sys)


def label_states(sol: EigenSolution, sys: SpinSystem, ops: Optional[SpinOperators] = None) -> EigenSolution:
    """Attach |F, mF> labels and high-field |mS, mI> labels to every level.

    Raises `LabelError` if an eigenvector's mF expectation is further than
    1e-6 from an allowed projection.
    """
    ops = ops if ops is not None else build_operators(sys)
    V = sol.vectors
    mF_exp = np.einsum("ik,i,ik->k", V, ops.mF, V)
    mF_exact = np.round(2 * mF_exp) / 2
    bad = np.abs(mF_exp - mF_exact) > 1e-6
    allowed = np.unique(ops.mF)
    if bad.any() or not np.all(np.isin(mF_exact, allowed)):
        k = int(np.argmax(bad)) if bad.any() else 0
        raise LabelError(
            f"level {k} at B0={sol.B0} T has <Fz> = {mF_exp[k]:.9f}, not a definite mF"
        )

    basis, Fs, mFs = zero_field_basis(sys)
    overlaps = (basis.T @ V) ** 2

    # Zeeman energy per unit field of each product state; fixes the high-field limit
    zeeman = sys.gamma_e * ops.mS - sys.gamma_n * ops.mI
    direction = -1.0 if sol.B0 < 0 else 1.0

    labels = [None] * sol.dim
    for mF in np.unique(mF_exact):
        levels = np.flatnonzero(mF_exact == mF)
        levels = levels[np.argsort(sol.energies[levels], kind="stable")]
        states = np.flatnonzero(np.isclose(ops.mF, mF))
        states = states[np.argsort(direction * zeeman[states], kind="stable")]
        in_block = np.flatnonzero(mFs == mF)
        for rank, (k, s) in enumerate(zip(levels, states)):
            ov = overlaps[in_block, k]
            best = in_block[np.argmax(ov)]
            labels[k] = StateLabel(
                F=float(Fs[best]),
                mF=float(mF),
                purity=float(ov.max()),
                mS_hf=float(ops.mS[s]),
                mI_hf=float(ops.mI[s]),
                rank=rank,
            )
    return replace(sol, mF=mF_exact, labels=labels)


@dataclass
class Sweep:
    """Adiabatically tracked eigenlevels over a field grid.

    Column ``k`` of ``energies`` and ``vectors[:, :, k]`` follow one branch
    across the grid; ``labels`` are evaluated at the first grid point and
    ``keys`` give the invariant (mF, rank) identity of each branch.
    """

    fields: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    mF: np.ndarray
    labels: list
    system: SpinSystem
    ops: SpinOperators = field(repr=False)

    @property
    def keys(self) -> list:
        return [lab.key for lab in self.labels]

    def expectation(self, op: np.ndarray) -> np.ndarray:
        """<k|op|k> for every branch and field point, shape (n_fields, d)."""
        return np.einsum("nik,ij,njk->nk", self.vectors, op, self.vectors)

    def branch_index(self, key) -> int:
        try:
            return self.keys.index(tuple(key))
        except ValueError:
            raise KeyError(f"no branch with key {key!r}") from None


def _batched_solve(sys, ops, fields):
    """Eigen-decompose H at many fields at once; returns energies, vectors, mF, keys."""
    Hz = sys.gamma_e * ops.Sz - sys.gamma_n * ops.Iz
    H = fields[:, None, None] * Hz + sys.A * ops.SdotI
    if not np.all(np.isfinite(H)):
        raise EigensolverError("non-finite Hamiltonian in field sweep")
    try:
        energies, vectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError("eigensolver did not converge in field sweep") from exc
    norms = np.maximum(np.linalg.norm(H, 2, axis=(1, 2)), 1.0)
    gaps = np.diff(energies, axis=1).min(axis=1) if energies.shape[1] > 1 else np.full(len(fields), np.inf)
    for p in np.flatnonzero(gaps <= ALIGN_TOL * norms):
        sol = eigensolve(H[p], B0=fields[p], fz=ops.mF)
        energies[p], vectors[p] = sol.energies, sol.vectors
    residual = np.linalg.norm(H @ vectors - vectors * energies[:, None, :], axis=1).max(axis=1)
    bad = np.flatnonzero(residual > 1e-9 * norms)
    if bad.size:
        raise EigensolverError(
            f"eigenpair residual {residual[bad[0]]:.3g} exceeds tolerance at B0={fields[bad[0]]!r} T"
        )
    mF_exp = np.einsum("nik,i,nik->nk", vectors, ops.mF, vectors)
    mF = np.round(2 * mF_exp) / 2
    off = np.abs(mF_exp - mF)
    if off.max() > 1e-6:
        p, k = np.unravel_index(np.argmax(off), off.shape)
        raise LabelError(f"level {k} at B0={fields[p]} T has <Fz> = {mF_exp[p, k]:.9f}, not a definite mF")
    rank = np.zeros(mF.shape, dtype=int)
    for k in range(1, mF.shape[1]):
        rank[:, k] = np.sum(mF[:, :k] == mF[:, k:k + 1], axis=1)
    return energies, vectors, mF, rank


def sweep(sys: SpinSystem, fields: Sequence[float], ops: Optional[SpinOperators] = None,
          min_overlap: float = 0.5) -> Sweep:
    """Diagonalize along a field grid, matching levels by maximum overlap.

    Adjacent points are matched by solving the assignment problem on the
    squared overlaps of their eigenvectors.  A match weaker than
    ``min_overlap``, or one that changes a branch's mF or block rank, raises
    `BranchTrackingError`.
    """
    ops = ops if ops is not None else build_operators(sys)
    fields = np.asarray(fields, dtype=float)
    if fields.ndim != 1 or fields.size == 0:
        raise ValueError("fields must be a non-empty 1-d sequence")
    E, V, mF, rank = _batched_solve(sys, ops, fields)
    first = label_states(EigenSolution(fields[0], E[0], V[0]), sys, ops)
    d = ops.dim
    n = fields.size
    energies = np.empty((n, d))
    vectors = np.empty((n, d, d))
    energies[0] = E[0]
    vectors[0] = V[0]
    ident = np.arange(d)
    key_mF, key_rank = mF[0], rank[0]
    perm = ident
    for p in range(1, n):
        ov = (vectors[p - 1].T @ V[p]) ** 2
        best = np.argmax(ov, axis=1)
        if np.array_equal(np.sort(best), ident):
            perm = best
        else:
            rows, cols = linear_sum_assignment(-ov)
            perm = cols[np.argsort(rows)]
        matched = ov[ident, perm]
        if matched.min() < min_overlap:
            k = int(np.argmin(matched))
            raise BranchTrackingError(
                f"ambiguous level matching for branch {k} between B0={fields[p - 1]} T "
                f"and B0={fields[p]} T (overlap {matched[k]:.3f})"
            )
        moved = (mF[p, perm] != key_mF) | (rank[p, perm] != key_rank)
        if moved.any():
            k = int(np.argmax(moved))
            raise BranchTrackingError(
                f"branch {k} changed identity ({key_mF[k]}, {key_rank[k]}) -> "
                f"({mF[p, perm[k]]}, {rank[p, perm[k]]}) at B0={fields[p]} T"
            )
        vec = V[p][:, perm]
        # keep a continuous phase along each branch
        signs = np.sign(np.einsum("ik,ik->k", vectors[p - 1], vec))
        signs[signs == 0] = 1.0
        vectors[p] = vec * signs
        energies[p] = E[p, perm]
    return Sweep(
        fields=fields,
        energies=energies,
        vectors=vectors,
        mF=np.array([lab.mF for lab in first.labels]),
        labels=first.labels,
        system=sys,
        ops=ops,
    )
