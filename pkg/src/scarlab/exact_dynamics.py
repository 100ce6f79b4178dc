"""Exact-diagonalization dynamics and spectral observables.

Everything here works on full-space or sector vectors at sizes where a
sparse Hamiltonian fits comfortably: Krylov propagation of the connected
pair autocorrelator, its projector-complement variants, the
infinite-temperature trace correlator, the Lehmann decomposition over
tower rungs and eigenstates, and matrix-element statistics of the
squared raising operator against the eigenstate-thermalization picture.

The probe operators are fixed by the physics: a pair insertion
O = (S+_{x0})^2 and a pair removal (S-_{x0+x})^2 read out at offset x.
The connected correlator of a coherent state is

    C(x,t) = <z| e^{iHt} (S-_{x0+x})^2 e^{-iHt} (S+_{x0})^2 |z>
           - e^{-i omega t} <z|(S-_{x0+x})^2|z> <z|(S+_{x0})^2|z>

where the disconnected part uses the exact rigid-rotation law of the
coherent manifold (the MPS engine recomputes it numerically, which keeps
the two code paths independent).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import krylov
from .scar_tower import CoherentState, build_coherent, build_tower
from .spin_core import (
    ModelParams,
    SectorBasis,
    SparseOperator,
    StateVector,
    build_basis,
    build_hamiltonian,
    embed_in_full,
    full_basis,
    full_spectrum,
    local_operator,
)

__all__ = [
    "CorrelatorGrid",
    "SpectralDecomposition",
    "EthScatter",
    "krylov_evolve",
    "autocorrelator_ed",
    "projected_autocorrelator",
    "infinite_temperature_autocorrelator",
    "lehmann_decomposition",
    "eth_matrix_elements",
    "g0_binned_average",
    "sector_entropy",
    "write_correlator_csv",
    "read_correlator_csv",
]


# ---------------------------------------------------------------------------
# grids


@dataclass
class CorrelatorGrid:
    """Rectangular table C(x, t): values[it, ix] at times[it], positions[ix]."""

    positions: np.ndarray  # integer site offsets from x0
    times: np.ndarray
    values: np.ndarray  # complex, shape (len(times), len(positions))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != (self.times.size, self.positions.size):
            raise ValueError("grid is not rectangular")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid contains non-finite values")

    def at(self, x: int, t: float) -> complex:
        ix = int(np.nonzero(self.positions == x)[0][0])
        it = int(np.argmin(np.abs(self.times - t)))
        return complex(self.values[it, ix])

    def column(self, x: int) -> np.ndarray:
        ix = int(np.nonzero(self.positions == x)[0][0])
        return self.values[:, ix]


def write_correlator_csv(grid: CorrelatorGrid, csv_path, sidecar_path=None) -> None:
    """CSV columns x, t, re, im; metadata goes to a JSON sidecar."""
    with open(csv_path, "w") as f:
        f.write("x,t,re,im\n")
        for it, t in enumerate(grid.times):
            for ix, x in enumerate(grid.positions):
                v = grid.values[it, ix]
                f.write(f"{x},{t:.17g},{v.real:.17g},{v.imag:.17g}\n")
    if sidecar_path is not None:
        with open(sidecar_path, "w") as f:
            json.dump(grid.meta, f, indent=2, sort_keys=True)
            f.write("\n")


def read_correlator_csv(csv_path, sidecar_path=None) -> CorrelatorGrid:
    raw = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    xs = np.unique(raw[:, 0]).astype(np.int64)
    ts = np.unique(raw[:, 1])
    values = np.full((ts.size, xs.size), np.nan, dtype=np.complex128)
    ix = np.searchsorted(xs, raw[:, 0].astype(np.int64))
    it = np.searchsorted(ts, raw[:, 1])
    values[it, ix] = raw[:, 2] + 1j * raw[:, 3]
    if np.any(np.isnan(values)):
        raise ValueError(f"{csv_path} does not contain a rectangular grid")
    meta = {}
    if sidecar_path is not None:
        with open(sidecar_path) as f:
            meta = json.load(f)
    return CorrelatorGrid(positions=xs, times=ts, values=values, meta=meta)


# ---------------------------------------------------------------------------
# evolution


def krylov_evolve(H: SparseOperator, v: StateVector, t: float, tol: float = 1e-10) -> StateVector:
    """exp(-iHt)|v> by adaptive Lanczos; magnetization sector is preserved."""
    if not H.hermitian:
        raise ValueError("krylov_evolve needs a Hermitian operator")
    if v.basis != H.domain:
        raise ValueError("state lives in a different sector than H")
    amps = krylov.expm_apply_adaptive(lambda x: H.matrix @ x, v.amplitudes, -1j * t, tol=tol)
    return StateVector(v.basis, amps)


def _validate_sites(L: int, x0: int, positions: Sequence[int]):
    if not 0 <= x0 < L:
        raise ValueError(f"insertion site {x0} outside chain of length {L}")
    positions = np.asarray(positions, dtype=np.int64)
    sites = x0 + positions
    if np.any(sites < 0) or np.any(sites >= L):
        bad = positions[(sites < 0) | (sites >= L)]
        raise ValueError(f"offsets {bad.tolist()} leave the chain (x0={x0}, L={L})")
    return positions


def _sequential_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1d sequence")
    return times


def _disconnected_coefficient(zeta: complex) -> float:
    """4 |zeta|^2 / (1+|zeta|^2)^2, the x- and t-independent disconnected weight."""
    a2 = abs(zeta) ** 2
    return 4.0 * a2 / (1.0 + a2) ** 2


def _stagger(x) -> float:
    """(-1)^x for any integer offset, negative values included."""
    return 1.0 if int(x) % 2 == 0 else -1.0


def autocorrelator_ed(
    params: ModelParams,
    zeta: complex,
    x0: int,
    positions: Sequence[int],
    times: Sequence[float],
    tol: float = 1e-10,
) -> CorrelatorGrid:
    """Connected pair autocorrelator of the coherent state, exact evolution.

    One Krylov trajectory carries (S+_{x0})^2 |z>; the bra side is the
    analytically rotated coherent state, and the disconnected part uses
    the closed form of the one-point functions.
    """
    positions = _validate_sites(params.L, x0, positions)
    times = _sequential_times(times)
    basis = full_basis(params.L)
    H = build_hamiltonian(params, basis)
    omega = params.omega

    plus_ops = {
        y: local_operator("S_plus_sq", y, basis, basis).matrix
        for y in np.unique(np.concatenate([x0 + positions, [x0]]))
    }
    zeta_vec = build_coherent(zeta, params.L).to_statevector().amplitudes
    phi = plus_ops[x0] @ zeta_vec

    disc_coeff = _disconnected_coefficient(zeta)
    values = np.empty((times.size, positions.size), dtype=np.complex128)
    t_now = 0.0
    for it, t in enumerate(times):
        if t != t_now:
            phi = krylov.expm_apply_adaptive(
                lambda x: H.matrix @ x, phi, -1j * (t - t_now), tol=tol
            )
            t_now = t
        bra = build_coherent(np.exp(-1j * omega * t) * zeta, params.L).to_statevector().amplitudes
        for ix, x in enumerate(positions):
            w = plus_ops[x0 + x] @ bra
            values[it, ix] = np.vdot(w, phi) - np.exp(-1j * omega * t) * _stagger(x) * disc_coeff

    meta = {
        "method": "ed",
        "params": params.to_dict(),
        "zeta": {"re": float(np.real(zeta)), "im": float(np.imag(zeta))},
        "x0": int(x0),
        "tol": tol,
    }
    return CorrelatorGrid(positions=positions, times=times, values=values, meta=meta)


def projected_autocorrelator(
    params: ModelParams,
    zeta: complex,
    projector: str,
    x0: int,
    positions: Sequence[int],
    times: Sequence[float],
    tol: float = 1e-10,
) -> CorrelatorGrid:
    """<z| O'(x,t) Q O |z> with Q = 1 - |z><z| or Q = 1 - sum_N |N><N|.

    The Q_zeta complement reproduces the connected correlator identically.
    The Q_W complement drops the whole tower; its projected piece evolves
    analytically because the rungs are eigenstates, so only the single
    trajectory of O|z> is propagated numerically.
    """
    if projector not in ("Q_zeta", "Q_W"):
        raise ValueError(f"unknown projector {projector!r}; expected Q_zeta or Q_W")
    positions = _validate_sites(params.L, x0, positions)
    times = _sequential_times(times)
    basis = full_basis(params.L)
    H = build_hamiltonian(params, basis)
    omega = params.omega

    plus_ops = {
        y: local_operator("S_plus_sq", y, basis, basis).matrix
        for y in np.unique(np.concatenate([x0 + positions, [x0]]))
    }
    zeta_vec = build_coherent(zeta, params.L).to_statevector().amplitudes
    phi = plus_ops[x0] @ zeta_vec

    if projector == "Q_W":
        tower = build_tower(params)
        rungs = np.stack([embed_in_full(s).amplitudes for s in tower.states])
        # <N|(S+_{x0})^2|z>, one coefficient per rung
        proj_coeffs = rungs.conj() @ phi

    values = np.empty((times.size, positions.size), dtype=np.complex128)
    t_now = 0.0
    for it, t in enumerate(times):
        if t != t_now:
            phi = krylov.expm_apply_adaptive(
                lambda x: H.matrix @ x, phi, -1j * (t - t_now), tol=tol
            )
            t_now = t
        bra = build_coherent(np.exp(-1j * omega * t) * zeta, params.L).to_statevector().amplitudes
        phases = np.exp(-1j * omega * np.arange(params.L + 1) * t)
        for ix, x in enumerate(positions):
            w = plus_ops[x0 + x] @ bra
            first = np.vdot(w, phi)
            if projector == "Q_zeta":
                correction = np.vdot(w, bra) * np.vdot(zeta_vec, plus_ops[x0] @ zeta_vec)
            else:
                # sum_N e^{-i omega N t} <z(t)|(S-_y)^2|N><N|(S+_{x0})^2|z>
                a = rungs @ w.conj()
                correction = np.sum(phases * a * proj_coeffs)
            values[it, ix] = first - correction

    meta = {
        "method": f"ed_{projector}",
        "params": params.to_dict(),
        "zeta": {"re": float(np.real(zeta)), "im": float(np.imag(zeta))},
        "x0": int(x0),
        "tol": tol,
        "projector": projector,
    }
    return CorrelatorGrid(positions=positions, times=times, values=values, meta=meta)


def infinite_temperature_autocorrelator(
    params: ModelParams,
    x0: int,
    positions: Sequence[int],
    times: Sequence[float],
    dense_cap: int = 20000,
    n_samples: int = 16,
    seed: int = 1234,
    tol: float = 1e-10,
) -> CorrelatorGrid:
    """C0(x,t) = Tr[(S-_{x0+x})^2(t) (S+_{x0})^2] / 3^L.

    Exact mode diagonalizes every magnetization sector and evaluates the
    double spectral sum; it runs whenever 3^L fits the dense cap.  Beyond
    that a stochastic trace with a recorded seed reports its 1-sigma
    sampling error in the metadata.
    """
    positions = _validate_sites(params.L, x0, positions)
    times = _sequential_times(times)
    L = params.L
    dim_total = 3**L

    if dim_total <= dense_cap:
        values = _infinite_temperature_exact(params, x0, positions, times)
        meta_extra = {"trace": "exact"}
    else:
        values, sigma = _infinite_temperature_stochastic(
            params, x0, positions, times, n_samples, seed, tol
        )
        meta_extra = {
            "trace": "stochastic",
            "n_samples": int(n_samples),
            "seed": int(seed),
            "sigma_max": float(np.max(sigma)),
            "sigma_mean": float(np.mean(sigma)),
        }

    meta = {
        "method": "infinite_temperature",
        "params": params.to_dict(),
        "zeta": "infinite-temperature",
        "x0": int(x0),
        **meta_extra,
    }
    return CorrelatorGrid(positions=positions, times=times, values=values, meta=meta)


def _infinite_temperature_exact(params, x0, positions, times):
    L = params.L
    values = np.zeros((times.size, positions.size), dtype=np.complex128)
    spectra = {}

    def sector_spectrum(M):
        if M not in spectra:
            spectra[M] = full_spectrum(params, build_basis(L, M), dense_cap=3**L + 1)
        return spectra[M]

    for M in range(-L, L - 1):
        from_b = build_basis(L, M)
        to_b = build_basis(L, M + 2)
        vals_m, vecs_m = sector_spectrum(M)
        vals_t, vecs_t = sector_spectrum(M + 2)
        b_mat = local_operator("S_plus_sq", x0, from_b, to_b).matrix.real
        b_tilde = vecs_t.T @ (b_mat @ vecs_m)  # <E_b(M+2)| B |E_a(M)>
        for ix, x in enumerate(positions):
            a_mat = local_operator("S_minus_sq", x0 + x, to_b, from_b).matrix.real
            a_tilde = vecs_m.T @ (a_mat @ vecs_t)
            g = a_tilde * b_tilde.T  # weight of e^{i(E_a - E_b)t}
            for it, t in enumerate(times):
                u = np.exp(1j * vals_m * t)
                v = np.exp(-1j * vals_t * t)
                values[it, ix] += u @ (g @ v)
    return values / 3**L


def _infinite_temperature_stochastic(params, x0, positions, times, n_samples, seed, tol):
    basis = full_basis(params.L)
    H = build_hamiltonian(params, basis)
    plus_ops = {
        y: local_operator("S_plus_sq", y, basis, basis).matrix
        for y in np.unique(np.concatenate([x0 + positions, [x0]]))
    }
    rng = np.random.default_rng(seed)
    dim = basis.dim
    samples = np.empty((n_samples, times.size, positions.size), dtype=np.complex128)
    for r in range(n_samples):
        z = (rng.standard_normal(dim) + 1j * rng.standard_normal(dim)) / np.sqrt(2.0)
        a = z.copy()
        b = plus_ops[x0] @ z
        t_now = 0.0
        for it, t in enumerate(times):
            if t != t_now:
                a = krylov.expm_apply_adaptive(lambda x: H.matrix @ x, a, -1j * (t - t_now), tol=tol)
                b = krylov.expm_apply_adaptive(lambda x: H.matrix @ x, b, -1j * (t - t_now), tol=tol)
                t_now = t
            for ix, x in enumerate(positions):
                samples[r, it, ix] = np.vdot(plus_ops[x0 + x] @ a, b)
    values = samples.mean(axis=0) / 3 ** params.L
    spread = samples.std(axis=0, ddof=1) if n_samples > 1 else np.zeros_like(values, dtype=float)
    sigma = spread / np.sqrt(n_samples) / 3 ** params.L
    return values, sigma


# ---------------------------------------------------------------------------
# spectral decompositions


@dataclass
class SpectralDecomposition:
    """Lehmann terms of the full two-point function over (rung N, eigenstate i).

    frequencies holds E_i - omega*N; weights hold
    <z|N><N'|z> <N|(S-_y)^2|E_i><E_i|(S+_{x0})^2|N'> with N' = N, the only
    magnetization-allowed pairing for this operator pair.
    """

    frequencies: np.ndarray
    weights: np.ndarray
    scarred: np.ndarray  # True where |E_i> is a tower rung
    rung: np.ndarray  # N per term
    rung_prime: np.ndarray  # N' per term
    zeta: complex
    x0: int
    x: int
    params: ModelParams

    def reconstruct(
        self, times: Sequence[float], drop_scarred: bool = False, connected: bool = False
    ) -> np.ndarray:
        """C(t) = sum_terms w e^{-i freq t}, optionally without scar terms
        and optionally with the disconnected part removed."""
        times = np.asarray(times, dtype=np.float64)
        keep = ~self.scarred if drop_scarred else slice(None)
        w = self.weights[keep]
        f = self.frequencies[keep]
        out = np.exp(-1j * np.outer(times, f)) @ w
        if connected:
            omega = self.params.omega
            out = out - np.exp(-1j * omega * times) * _stagger(self.x) * _disconnected_coefficient(
                self.zeta
            )
        return out


def lehmann_decomposition(params: ModelParams, zeta: complex, x0: int, x: int) -> SpectralDecomposition:
    """Eigenbasis expansion of <z|(S-_{x0+x})^2(t)(S+_{x0})^2|z>.

    Magnetization selection leaves a single rung pairing N' = N; for each
    N the eigenstates of the sector two units above carry the time
    dependence e^{-i(E_i - omega N)t}.  Terms whose eigenstate is the rung
    |N+1> are flagged as scarred.
    """
    positions = _validate_sites(params.L, x0, [x])
    L = params.L
    y = x0 + int(positions[0])
    tower = build_tower(params)
    overlaps = build_coherent(zeta, L).overlaps()

    freqs, weights, scarred, rung, rung_prime = [], [], [], [], []
    for N in range(L):
        sector_to = build_basis(L, 2 * N - L + 2)
        vals, vecs = full_spectrum(params, sector_to)
        t_n = tower.states[N].amplitudes.real
        t_next = tower.states[N + 1].amplitudes.real

        a_mat = local_operator("S_minus_sq", y, sector_to, tower.states[N].basis).matrix.real
        b_mat = local_operator("S_plus_sq", x0, tower.states[N].basis, sector_to).matrix.real
        a = (a_mat.T @ t_n) @ vecs  # <N|(S-_y)^2|E_i>
        b = (b_mat @ t_n) @ vecs  # <E_i|(S+_{x0})^2|N>
        scar_overlap = (t_next @ vecs) ** 2

        w = np.abs(overlaps[N]) ** 2 * a * b
        freqs.append(vals - params.omega * N)
        weights.append(w.astype(np.complex128))
        scarred.append(scar_overlap > 0.5)
        rung.append(np.full(vals.size, N))
        rung_prime.append(np.full(vals.size, N))

    return SpectralDecomposition(
        frequencies=np.concatenate(freqs),
        weights=np.concatenate(weights),
        scarred=np.concatenate(scarred),
        rung=np.concatenate(rung),
        rung_prime=np.concatenate(rung_prime),
        zeta=complex(zeta),
        x0=int(x0),
        x=int(x),
        params=params,
    )


# ---------------------------------------------------------------------------
# matrix-element statistics


@dataclass
class EthScatter:
    """|<E_i|(S+_j)^2|N>|^2 against E_i - omega N over one target sector."""

    energies: np.ndarray  # E_i - omega N
    values: np.ndarray
    is_scar: np.ndarray
    density: np.ndarray  # local point density in (energy, log value), max 1
    sector_label: str
    N: int
    site: int
    omega: float
    energy_offset: float  # omega * N, restoring absolute energies
    sector_eigenvalues: np.ndarray  # absolute energies of the target sector

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("E_minus_Nomega,value,is_scar\n")
            for e, v, s in zip(self.energies, self.values, self.is_scar):
                f.write(f"{e:.17g},{v:.17g},{int(s)}\n")


def eth_matrix_elements(
    params: ModelParams, N: int, site: int, dense_cap: int = 20000
) -> EthScatter:
    """Scatter of squared matrix elements of (S+_site)^2 from rung |N>.

    The tower rung |N+1> sits in the target sector and is flagged; its
    matrix element stays of order one while generic eigenstates carry
    exponentially small weight, which is the scar signature.
    """
    L = params.L
    if not 0 <= N < L:
        raise ValueError("rung must satisfy 0 <= N < L so the target sector exists")
    if not 0 <= site < L:
        raise ValueError(f"site {site} outside chain")
    tower = build_tower(params)
    sector_from = tower.states[N].basis
    sector_to = build_basis(L, sector_from.M + 2)
    vals, vecs = full_spectrum(params, sector_to, dense_cap=dense_cap)

    b_mat = local_operator("S_plus_sq", site, sector_from, sector_to).matrix.real
    b = (b_mat @ tower.states[N].amplitudes.real) @ vecs
    values = b**2
    scar_overlap = (tower.states[N + 1].amplitudes.real @ vecs) ** 2
    is_scar = scar_overlap > 0.5

    energies = vals - params.omega * N
    density = _scatter_density(energies, values)
    return EthScatter(
        energies=energies,
        values=values,
        is_scar=is_scar,
        density=density,
        sector_label=f"M={sector_to.M}",
        N=N,
        site=site,
        omega=params.omega,
        energy_offset=params.omega * N,
        sector_eigenvalues=vals,
    )


def _scatter_density(energies: np.ndarray, values: np.ndarray, floor: float = 1e-30) -> np.ndarray:
    """Gaussian kernel density in the (energy, log10 value) plane, scaled to max 1."""
    logv = np.log10(np.maximum(values, floor))
    pts = np.stack([energies, logv])
    spread = pts.std(axis=1)
    spread[spread == 0.0] = 1.0
    scaled = pts / spread[:, None]
    n = energies.size
    bw = n ** (-1.0 / 6.0)  # Scott's rule in 2d
    density = np.empty(n)
    step = 512
    for lo in range(0, n, step):
        chunk = scaled[:, lo : lo + step]
        d2 = ((scaled[:, :, None] - chunk[:, None, :]) ** 2).sum(axis=0)
        density[lo : lo + step] = np.exp(-d2 / (2.0 * bw**2)).sum(axis=0)
    return density / density.max()


def sector_entropy(eigenvalues: np.ndarray, broadening: Optional[float] = None) -> Callable:
    """S(E) = log of the Gaussian-broadened level density of one sector.

    Default width is 0.05 times the spectral width; pass an explicit
    broadening to probe sensitivity.
    """
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    width = float(eigenvalues.max() - eigenvalues.min())
    sigma = float(broadening) if broadening is not None else 0.05 * width
    if sigma <= 0.0:
        raise ValueError("broadening must be positive")
    norm = 1.0 / (np.sqrt(2.0 * np.pi) * sigma)

    def S(E):
        E = np.atleast_1d(np.asarray(E, dtype=np.float64))
        counts = norm * np.exp(-((E[:, None] - eigenvalues[None, :]) ** 2) / (2 * sigma**2)).sum(axis=1)
        out = np.log(np.maximum(counts, 1e-300))
        return out if out.size > 1 else float(out[0])

    return S


def g0_binned_average(scatter: EthScatter, bin_width: float, entropy_estimate: Callable):
    """Bin-averaged g0(omega') = mean(|m|^2 e^{S(E)}) * 2 pi, scar points excluded.

    Returns (bin centers, g0 values); bins with no points are absent.
    """
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    keep = ~scatter.is_scar
    omega_p = scatter.energies[keep]
    absolute = omega_p + scatter.energy_offset
    s_vals = np.atleast_1d(entropy_estimate(absolute))
    g = scatter.values[keep] * np.exp(s_vals) * 2.0 * np.pi

    idx = np.floor(omega_p / bin_width).astype(np.int64)
    centers, out = [], []
    for b in np.unique(idx):
        sel = idx == b
        centers.append((b + 0.5) * bin_width)
        out.append(float(np.mean(g[sel])))
    return np.asarray(centers), np.asarray(out)
