"""Spin-1 chain primitives: magnetization-resolved bases and sparse Hamiltonians.

The model is an XY chain of spin-1 sites with a uniform field, single-ion
anisotropy, and an optional range-3 exchange:

    H = J  sum_j (Sx_j Sx_{j+1} + Sy_j Sy_{j+1})
      + h  sum_j (Sz_j + 1)
      + D  sum_j ((Sz_j)^2 - 1)
      + J3 sum_j (Sx_j Sx_{j+3} + Sy_j Sy_{j+3})

Exchange terms are assembled as (1/2)(S+ S- + S- S+).  The constant shifts
in the h and D terms are kept on purpose: they pin the energy of the
all-down product state to exactly zero, which in turn makes the tower of
pair-condensate eigenstates sit at energies 2hN.  Total magnetization
sum_j Sz_j commutes with H, so everything is organized by sector.

Site configurations are encoded in base 3 with site 0 as the most
significant trit.  Digit 0 is Sz=+1, digit 1 is Sz=0, digit 2 is Sz=-1, so
ascending integer codes enumerate configurations lexicographically with
up < zero < down.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse

SQRT2 = np.sqrt(2.0)

# Single-site transition tables in the digit encoding: (digit_in, digit_out, amplitude).
_KIND_TABLES = {
    "S_plus_sq": ((2, 0, 2.0),),
    "S_minus_sq": ((0, 2, 2.0),),
}
# S_z is diagonal: spin value s = 1 - digit.
_SZ_OF_DIGIT = np.array([1.0, 0.0, -1.0])

OPERATOR_KINDS = ("S_plus_sq", "S_minus_sq", "S_z")

# Magnetization change per operator kind.
_KIND_DELTA_M = {"S_plus_sq": 2, "S_minus_sq": -2, "S_z": 0}

_MAX_ENUMERATED_L = 14  # full enumeration beyond this is pointless; use the MPS path


class EmptySectorError(ValueError):
    """Requested magnetization sector contains no configurations."""


class DenseCapError(RuntimeError):
    """Sector dimension exceeds the dense-diagonalization cap."""


@dataclass(frozen=True)
class ModelParams:
    """Couplings and geometry of the chain.

    The modulation frequency of the tower is derived, never stored:
    omega = 2h.
    """

    J: float
    h: float
    D: float
    J3: float
    L: int
    boundary: str = "open"

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.L < 2:
            raise ValueError(f"chain length must be at least 2, got {self.L}")
        if self.J3 != 0.0 and self.L < 4:
            # at L < 4 the j -> j+3 pair degenerates (self-coupling or doubled bonds)
            raise ValueError("a nonzero range-3 coupling needs L >= 4")

    @property
    def omega(self) -> float:
        return 2.0 * self.h

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "h": self.h,
            "D": self.D,
            "J3": self.J3,
            "L": self.L,
            "boundary": self.boundary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        allowed = {"J", "h", "D", "J3", "L", "boundary"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown model parameter keys: {sorted(unknown)}")
        missing = {"J", "h", "D", "J3", "L"} - set(d)
        if missing:
            raise ValueError(f"missing model parameter keys: {sorted(missing)}")
        return cls(
            J=float(d["J"]),
            h=float(d["h"]),
            D=float(d["D"]),
            J3=float(d["J3"]),
            L=int(d["L"]),
            boundary=d.get("boundary", "open"),
        )


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Ordered configuration list for one magnetization sector.

    M is None for the full 3^L space.  configs holds base-3 codes in
    ascending (lexicographic) order and is read-only.
    """

    L: int
    M: Optional[int]
    configs: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.configs.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, SectorBasis) and self.L == other.L and self.M == other.M

    def __hash__(self):
        return hash((self.L, self.M))

    def index_of(self, codes: np.ndarray) -> np.ndarray:
        """Positions of the given configuration codes inside this basis."""
        codes = np.asarray(codes)
        if self.M is None:
            return codes
        idx = np.searchsorted(self.configs, codes)
        bad = (idx >= self.dim) | (self.configs[np.minimum(idx, self.dim - 1)] != codes)
        if np.any(bad):
            raise KeyError("configuration code not in sector")
        return idx

    def digits(self) -> np.ndarray:
        """(dim, L) array of base-3 digits, site 0 first."""
        return _digits_of(self.configs, self.L)

    def magnetizations(self) -> np.ndarray:
        """Total Sz of every configuration (all equal to M for a true sector)."""
        d = self.digits()
        return (1 - d).sum(axis=1)


@dataclass
class StateVector:
    """Complex amplitudes over one SectorBasis."""

    basis: SectorBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitude shape {self.amplitudes.shape} does not match sector dim {self.basis.dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / n)

    def copy(self) -> "StateVector":
        return StateVector(self.basis, self.amplitudes.copy())


@dataclass
class SparseOperator:
    """CSR matrix between two sector bases, with a hermiticity tag."""

    matrix: scipy.sparse.csr_matrix
    domain: SectorBasis
    codomain: SectorBasis
    hermitian: bool

    @property
    def shape(self):
        return self.matrix.shape


def _digits_of(codes: np.ndarray, L: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    out = np.empty(codes.shape + (L,), dtype=np.int8)
    for j in range(L):
        out[..., j] = (codes // 3 ** (L - 1 - j)) % 3
    return out


def _weight_of_site(L: int, j: int) -> int:
    return 3 ** (L - 1 - j)


@lru_cache(maxsize=None)
def full_basis(L: int) -> SectorBasis:
    """Basis of the entire 3^L space, code order."""
    if L < 2:
        raise ValueError("chain length must be at least 2")
    if L > _MAX_ENUMERATED_L:
        raise ValueError(f"refusing to enumerate 3^{L} configurations; use the MPS engine")
    configs = np.arange(3**L, dtype=np.int64)
    configs.setflags(write=False)
    return SectorBasis(L=L, M=None, configs=configs)


@lru_cache(maxsize=None)
def build_basis(L: int, M: int) -> SectorBasis:
    """All configurations with total Sz equal to M, lexicographic order."""
    if L < 2:
        raise ValueError("chain length must be at least 2")
    if L > _MAX_ENUMERATED_L:
        raise ValueError(f"refusing to enumerate 3^{L} configurations; use the MPS engine")
    if abs(M) > L:
        raise EmptySectorError(f"|M| = {abs(M)} exceeds L = {L}: empty sector")
    codes = np.arange(3**L, dtype=np.int64)
    mag = np.zeros(codes.shape, dtype=np.int64)
    for j in range(L):
        mag += 1 - (codes // 3 ** (L - 1 - j)) % 3
    configs = codes[mag == M]
    if configs.size == 0:
        raise EmptySectorError(f"no configurations with M = {M}")
    configs.setflags(write=False)
    return SectorBasis(L=L, M=M, configs=configs)


def _hop_triplets(sector: SectorBasis, a: int, b: int, coupling: float):
    """COO triplets of coupling * (S+_a S-_b) restricted to the sector.

    Spin-1 raising and lowering both carry sqrt(2) on each allowed step,
    so every allowed configuration pair contributes 2 * coupling.
    """
    L = sector.L
    codes = sector.configs
    da = (codes // _weight_of_site(L, a)) % 3
    db = (codes // _weight_of_site(L, b)) % 3
    mask = (da >= 1) & (db <= 1)
    cols = np.nonzero(mask)[0]
    new_codes = codes[cols] - _weight_of_site(L, a) + _weight_of_site(L, b)
    rows = sector.index_of(new_codes)
    amps = np.full(cols.shape, 2.0 * coupling, dtype=np.complex128)
    return rows, cols, amps


def _bond_list(params: ModelParams):
    """(i, k, coupling) for every exchange bond, both ranges."""
    L = params.L
    bonds = []
    if params.J != 0.0:
        if params.boundary == "open":
            bonds += [(j, j + 1, params.J / 2.0) for j in range(L - 1)]
        else:
            bonds += [(j, (j + 1) % L, params.J / 2.0) for j in range(L)]
    if params.J3 != 0.0:
        if params.boundary == "open":
            bonds += [(j, j + 3, params.J3 / 2.0) for j in range(L - 3)]
        else:
            bonds += [(j, (j + 3) % L, params.J3 / 2.0) for j in range(L)]
    return bonds


def build_hamiltonian(params: ModelParams, sector: SectorBasis) -> SparseOperator:
    """Sparse Hamiltonian restricted to one magnetization sector."""
    if sector.L != params.L:
        raise ValueError("sector length does not match model parameters")
    dim = sector.dim
    digits = sector.digits()
    spins = 1.0 - digits  # Sz per site

    diag = params.h * (spins + 1.0).sum(axis=1) + params.D * (spins**2 - 1.0).sum(axis=1)

    rows_all = [np.arange(dim, dtype=np.int64)]
    cols_all = [np.arange(dim, dtype=np.int64)]
    amps_all = [diag.astype(np.complex128)]

    for i, k, c in _bond_list(params):
        for a, b in ((i, k), (k, i)):
            r, cl, am = _hop_triplets(sector, a, b, c)
            rows_all.append(r)
            cols_all.append(cl)
            amps_all.append(am)

    mat = scipy.sparse.coo_matrix(
        (np.concatenate(amps_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(dim, dim),
    ).tocsr()
    return SparseOperator(matrix=mat, domain=sector, codomain=sector, hermitian=True)


def local_operator(kind: str, site: int, from_sector: SectorBasis, to_sector: SectorBasis) -> SparseOperator:
    """Single-site operator (S+_j)^2, (S-_j)^2 or S^z_j between sectors."""
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")
    L = from_sector.L
    if to_sector.L != L:
        raise ValueError("sector lengths differ")
    if not 0 <= site < L:
        raise ValueError(f"site {site} outside chain of length {L}")
    delta = _KIND_DELTA_M[kind]
    if (from_sector.M is None) != (to_sector.M is None):
        raise ValueError("cannot mix a sector basis with the full-space basis")
    if from_sector.M is not None and to_sector.M != from_sector.M + delta:
        raise ValueError(
            f"{kind} maps M = {from_sector.M} to M + {delta}, not to M = {to_sector.M}"
        )

    codes = from_sector.configs
    if kind == "S_z":
        d = (codes // _weight_of_site(L, site)) % 3
        mat = scipy.sparse.coo_matrix(
            (_SZ_OF_DIGIT[d].astype(np.complex128),
             (np.arange(from_sector.dim), np.arange(from_sector.dim))),
            shape=(to_sector.dim, from_sector.dim),
        ).tocsr()
        hermitian = to_sector == from_sector
        return SparseOperator(mat, from_sector, to_sector, hermitian)

    (din, dout, amp), = _KIND_TABLES[kind]
    d = (codes // _weight_of_site(L, site)) % 3
    cols = np.nonzero(d == din)[0]
    new_codes = codes[cols] + (dout - din) * _weight_of_site(L, site)
    rows = to_sector.index_of(new_codes)
    mat = scipy.sparse.coo_matrix(
        (np.full(cols.shape, amp, dtype=np.complex128), (rows, cols)),
        shape=(to_sector.dim, from_sector.dim),
    ).tocsr()
    return SparseOperator(mat, from_sector, to_sector, hermitian=False)


def apply(op: SparseOperator, v: StateVector) -> StateVector:
    if v.basis != op.domain:
        raise ValueError("state lives in a different sector than the operator domain")
    return StateVector(op.codomain, op.matrix @ v.amplitudes)


def inner(u: StateVector, v: StateVector) -> complex:
    """<u|v> with conjugation on u."""
    if u.basis != v.basis:
        raise ValueError("states live in different sectors")
    return complex(np.vdot(u.amplitudes, v.amplitudes))


def expectation(op: SparseOperator, v: StateVector) -> complex:
    """<v|op|v> without implicit normalization."""
    return inner(v, apply(op, v))


def embed_in_full(v: StateVector) -> StateVector:
    """Lift a sector state into the full 3^L space (zero elsewhere)."""
    if v.basis.M is None:
        return v.copy()
    fb = full_basis(v.basis.L)
    amps = np.zeros(fb.dim, dtype=np.complex128)
    amps[v.basis.configs] = v.amplitudes
    return StateVector(fb, amps)


def full_spectrum(params: ModelParams, sector: SectorBasis, dense_cap: int = 20000):
    """Dense spectrum of one sector: eigenvalues ascending, eigenvectors in columns.

    The Hamiltonian is real symmetric in the configuration basis, so the
    returned eigenvectors are real.
    """
    if sector.dim > dense_cap:
        raise DenseCapError(
            f"sector dimension {sector.dim} exceeds dense cap {dense_cap}; "
            "use krylov_evolve for dynamics instead"
        )
    h = build_hamiltonian(params, sector)
    dense = np.asarray(h.matrix.todense().real, dtype=np.float64)
    vals, vecs = scipy.linalg.eigh(dense, overwrite_a=True)
    return vals, vecs
