"""Exact-dynamics observables against dense-matrix and closed-form oracles."""

import json

import numpy as np
import pytest
import scipy.linalg as sla

from scarlab import exact_dynamics as xd
from scarlab.scar_tower import build_coherent
from scarlab.spin_core import (
    ModelParams,
    build_basis,
    build_hamiltonian,
    full_basis,
    local_operator,
)

PARAMS6 = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=6)
TIMES = np.linspace(0.0, 3.0, 7)
POSITIONS = [-2, -1, 0, 1, 2]


@pytest.fixture(scope="module")
def grid6():
    return xd.autocorrelator_ed(PARAMS6, -1j, 3, POSITIONS, TIMES)


def dense_correlator(params, zeta, x0, positions, times):
    """Independent route: dense expm of the full Hamiltonian, numerically
    evolved bra and ket, numeric one-point functions for the disconnected
    part (no closed forms, no revival law)."""
    basis = full_basis(params.L)
    H = build_hamiltonian(params, basis).matrix.toarray()
    psi0 = build_coherent(zeta, params.L).to_statevector().amplitudes
    ops = {
        y: local_operator("S_plus_sq", y, basis, basis).matrix.toarray()
        for y in {x0 + x for x in positions} | {x0}
    }
    b_exp = np.vdot(psi0, ops[x0] @ psi0)
    out = np.empty((len(times), len(positions)), dtype=np.complex128)
    for it, t in enumerate(times):
        U = sla.expm(-1j * t * H)
        psi_t = U @ psi0
        phi_t = U @ (ops[x0] @ psi0)
        for ix, x in enumerate(positions):
            a_t = ops[x0 + x] @ psi_t
            out[it, ix] = np.vdot(a_t, phi_t) - np.vdot(a_t, psi_t) * b_exp
    return out


def test_matches_dense_expm_route():
    params = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=4)
    zeta = 0.8 * np.exp(0.3j)
    times = [0.0, 0.4, 1.1, 2.7]
    positions = [-1, 0, 2]
    got = xd.autocorrelator_ed(params, zeta, 1, positions, times)
    want = dense_correlator(params, zeta, 1, positions, times)
    assert np.max(np.abs(got.values - want)) < 1e-9


def test_equal_time_values(grid6):
    # product state at t=0: on-site connected weight is 1 on the unit
    # circle, strictly zero off-site
    assert abs(grid6.at(0, 0.0) - 1.0) < 1e-12
    for x in (-2, -1, 1, 2):
        assert abs(grid6.at(x, 0.0)) < 1e-12


def test_hermitian_time_symmetry():
    params = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=5)
    zeta = 0.7 * np.exp(0.4j)
    fwd = xd.autocorrelator_ed(params, zeta, 2, [-1, 0, 1], TIMES)
    bwd = xd.autocorrelator_ed(params, zeta, 2, [-1, 0, 1], -TIMES)
    assert np.max(np.abs(bwd.values - np.conj(fwd.values))) < 1e-9


def test_non_monotone_times_walk():
    times = [0.5, 0.2, 1.0]
    got = xd.autocorrelator_ed(PARAMS6, -1j, 3, [0, 1], times)
    for k, t in enumerate(times):
        ref = xd.autocorrelator_ed(PARAMS6, -1j, 3, [0, 1], [t])
        assert np.max(np.abs(got.values[k] - ref.values[0])) < 1e-9


def test_site_validation():
    with pytest.raises(ValueError):
        xd.autocorrelator_ed(PARAMS6, -1j, 6, [0], [0.0])
    with pytest.raises(ValueError):
        xd.autocorrelator_ed(PARAMS6, -1j, 3, [4], [0.0])
    with pytest.raises(ValueError):
        xd.autocorrelator_ed(PARAMS6, -1j, 0, [-1], [0.0])


def test_krylov_evolve_guards():
    basis = build_basis(4, 0)
    params = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=4)
    H = build_hamiltonian(params, basis)
    from scarlab.spin_core import StateVector

    v = StateVector(basis, np.ones(basis.dim, dtype=complex) / np.sqrt(basis.dim))
    w = xd.krylov_evolve(H, v, 1.3)
    assert abs(w.norm() - 1.0) < 1e-12
    other = build_basis(4, 2)
    bad = StateVector(other, np.ones(other.dim, dtype=complex))
    with pytest.raises(ValueError):
        xd.krylov_evolve(H, bad, 1.0)
    A = local_operator("S_plus_sq", 0, basis, build_basis(4, 2))
    with pytest.raises(ValueError):
        xd.krylov_evolve(A, v, 1.0)


# ---------------------------------------------------------------------------
# projected variants


def test_q_zeta_equals_connected(grid6):
    for zeta, grid in ((-1j, grid6), (0.6 * np.exp(1.1j), None)):
        ref = grid if grid is not None else xd.autocorrelator_ed(PARAMS6, zeta, 3, POSITIONS, TIMES)
        proj = xd.projected_autocorrelator(PARAMS6, zeta, "Q_zeta", 3, POSITIONS, TIMES)
        assert np.max(np.abs(proj.values - ref.values)) < 1e-12


def test_q_w_gap_is_one_over_l_on_circle(grid6):
    # tower complement removes slightly more weight than the coherent
    # complement; on the unit circle the difference is exactly 1/L
    proj = xd.projected_autocorrelator(PARAMS6, -1j, "Q_W", 3, POSITIONS, TIMES)
    gap = np.max(np.abs(proj.values - grid6.values))
    assert abs(gap - 1.0 / 6.0) < 1e-12


def test_q_w_gap_shrinks_with_size(grid6):
    params8 = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=8)
    ref8 = xd.autocorrelator_ed(params8, -1j, 4, POSITIONS, TIMES)
    proj8 = xd.projected_autocorrelator(params8, -1j, "Q_W", 4, POSITIONS, TIMES)
    gap8 = np.max(np.abs(proj8.values - ref8.values))
    proj6 = xd.projected_autocorrelator(PARAMS6, -1j, "Q_W", 3, POSITIONS, TIMES)
    gap6 = np.max(np.abs(proj6.values - grid6.values))
    assert gap8 <= gap6


def test_unknown_projector_rejected():
    with pytest.raises(ValueError):
        xd.projected_autocorrelator(PARAMS6, -1j, "Q_X", 3, [0], [0.0])


# ---------------------------------------------------------------------------
# Lehmann decomposition


@pytest.fixture(scope="module")
def lehmann6():
    return xd.lehmann_decomposition(PARAMS6, -1j, 3, 1)


def test_lehmann_reconstruction_matches_ed(grid6, lehmann6):
    rec = lehmann6.reconstruct(TIMES, connected=True)
    assert np.max(np.abs(rec - grid6.column(1))) < 1e-8


def test_lehmann_reconstruction_matches_ed_l8():
    params8 = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=8)
    dec = xd.lehmann_decomposition(params8, -1j, 4, 1)
    ref = xd.autocorrelator_ed(params8, -1j, 4, [1], TIMES)
    rec = dec.reconstruct(TIMES, connected=True)
    assert np.max(np.abs(rec - ref.column(1))) < 1e-8


def test_lehmann_completeness_at_t0(grid6, lehmann6):
    total = lehmann6.weights.sum()
    full0 = grid6.at(1, 0.0) + np.exp(0.0) * (-1.0) * xd._disconnected_coefficient(-1j)
    assert abs(total - full0) < 1e-10


def test_lehmann_scar_terms_reproduce_projector_gap(lehmann6, grid6):
    proj = xd.projected_autocorrelator(PARAMS6, -1j, "Q_W", 3, POSITIONS, TIMES)
    rec = lehmann6.reconstruct(TIMES, drop_scarred=True)
    assert np.max(np.abs(rec - proj.column(1))) < 1e-12
    assert lehmann6.scarred.sum() == PARAMS6.L
    assert np.all(lehmann6.rung == lehmann6.rung_prime)


def test_lehmann_frequencies_of_scar_terms(lehmann6):
    # scarred eigenstates sit one rung up, so every scarred frequency is omega
    freqs = lehmann6.frequencies[lehmann6.scarred]
    assert np.max(np.abs(freqs - PARAMS6.omega)) < 1e-10


# ---------------------------------------------------------------------------
# infinite temperature


@pytest.fixture(scope="module")
def inf6():
    return xd.infinite_temperature_autocorrelator(PARAMS6, 3, POSITIONS, TIMES)


def test_infinite_temperature_equal_time(inf6):
    assert abs(inf6.at(0, 0.0) - 4.0 / 3.0) < 1e-12
    for x in (-2, -1, 1, 2):
        assert abs(inf6.at(x, 0.0)) < 1e-12


def test_infinite_temperature_dense_trace_oracle():
    params = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=4)
    times = [0.0, 0.6, 1.7]
    positions = [-1, 0, 1]
    got = xd.infinite_temperature_autocorrelator(params, 1, positions, times)
    basis = full_basis(4)
    H = build_hamiltonian(params, basis).matrix.toarray()
    ops = {
        y: local_operator("S_plus_sq", y, basis, basis).matrix.toarray()
        for y in (0, 1, 2)
    }
    for it, t in enumerate(times):
        U = sla.expm(-1j * t * H)
        for ix, x in enumerate(positions):
            a_heis = U.conj().T @ ops[1 + x].conj().T @ U
            want = np.trace(a_heis @ ops[1]) / 3**4
            assert abs(got.values[it, ix] - want) < 1e-10


def test_infinite_temperature_hermitian_symmetry(inf6):
    bwd = xd.infinite_temperature_autocorrelator(PARAMS6, 3, POSITIONS, -TIMES)
    assert np.max(np.abs(bwd.values - np.conj(inf6.values))) < 1e-10


def test_infinite_temperature_stochastic_fallback(inf6):
    st = xd.infinite_temperature_autocorrelator(
        PARAMS6, 3, POSITIONS, TIMES, dense_cap=10, n_samples=24, seed=99
    )
    assert st.meta["trace"] == "stochastic"
    assert st.meta["seed"] == 99
    err = np.max(np.abs(st.values - inf6.values))
    assert err < 6.0 * st.meta["sigma_max"]
    again = xd.infinite_temperature_autocorrelator(
        PARAMS6, 3, POSITIONS, TIMES, dense_cap=10, n_samples=24, seed=99
    )
    assert np.array_equal(st.values, again.values)


# ---------------------------------------------------------------------------
# matrix-element statistics


@pytest.fixture(scope="module")
def scatter8():
    params = ModelParams(J=1.0, h=0.5, D=0.1, J3=0.5, L=8)
    return xd.eth_matrix_elements(params, N=4, site=4)


def test_eth_scar_outlier_closed_form(scatter8):
    L, N = 8, 4
    assert scatter8.is_scar.sum() == 1
    outlier = scatter8.values[scatter8.is_scar][0]
    assert abs(outlier - 4.0 * (L - N) * (N + 1) / L**2) < 1e-10
    assert abs(scatter8.energies[scatter8.is_scar][0] - scatter8.omega) < 1e-10


def test_eth_sum_rule(scatter8):
    # completeness over the target sector: sum of all squared elements
    # equals <N|(S-)^2(S+)^2|N> = 4(L-N)/L
    assert abs(scatter8.values.sum() - 4.0 * (8 - 4) / 8.0) < 1e-10


def test_eth_outlier_dominates(scatter8):
    typical = np.percentile(scatter8.values[~scatter8.is_scar], 99)
    assert scatter8.values[scatter8.is_scar][0] > 50.0 * typical


def test_eth_density_and_counts(scatter8):
    assert scatter8.energies.size == build_basis(8, 2).dim
    assert scatter8.density.shape == scatter8.energies.shape
    assert 0.0 < scatter8.density.min() <= scatter8.density.max() == 1.0


def test_eth_validation():
    with pytest.raises(ValueError):
        xd.eth_matrix_elements(PARAMS6, N=6, site=3)
    with pytest.raises(ValueError):
        xd.eth_matrix_elements(PARAMS6, N=2, site=6)


def test_eth_csv(tmp_path, scatter8):
    path = tmp_path / "eth.csv"
    scatter8.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "E_minus_Nomega,value,is_scar"
    assert len(lines) == 1 + scatter8.energies.size
    assert sum(int(l.rsplit(",", 1)[1]) for l in lines[1:]) == 1


def test_g0_recovers_synthetic_constant(scatter8):
    S = xd.sector_entropy(scatter8.sector_eigenvalues)
    g_true = 0.7
    svals = np.atleast_1d(S(scatter8.sector_eigenvalues))
    synth = xd.EthScatter(
        energies=scatter8.energies,
        values=g_true * np.exp(-svals) / (2 * np.pi),
        is_scar=np.zeros_like(scatter8.is_scar),
        density=scatter8.density,
        sector_label=scatter8.sector_label,
        N=scatter8.N,
        site=scatter8.site,
        omega=scatter8.omega,
        energy_offset=scatter8.energy_offset,
        sector_eigenvalues=scatter8.sector_eigenvalues,
    )
    centers, g0 = xd.g0_binned_average(synth, 0.5, S)
    assert np.max(np.abs(g0 - g_true)) < 1e-12 * g_true


def test_g0_excludes_scar_points(scatter8):
    S = xd.sector_entropy(scatter8.sector_eigenvalues)
    centers, g0 = xd.g0_binned_average(scatter8, 0.5, S)
    boosted = xd.EthScatter(
        energies=scatter8.energies,
        values=np.where(scatter8.is_scar, 1e6, scatter8.values),
        is_scar=scatter8.is_scar,
        density=scatter8.density,
        sector_label=scatter8.sector_label,
        N=scatter8.N,
        site=scatter8.site,
        omega=scatter8.omega,
        energy_offset=scatter8.energy_offset,
        sector_eigenvalues=scatter8.sector_eigenvalues,
    )
    centers2, g02 = xd.g0_binned_average(boosted, 0.5, S)
    assert np.array_equal(centers, centers2)
    assert np.allclose(g0, g02)
    with pytest.raises(ValueError):
        xd.g0_binned_average(scatter8, 0.0, S)


def test_sector_entropy_broadening():
    evals = np.array([0.0, 1.0, 2.0, 10.0])
    S = xd.sector_entropy(evals, broadening=0.5)
    assert S(1.0) > S(6.0)
    with pytest.raises(ValueError):
        xd.sector_entropy(evals, broadening=0.0)


# ---------------------------------------------------------------------------
# grid I/O


def test_grid_round_trip(tmp_path, grid6):
    csv = tmp_path / "c.csv"
    sidecar = tmp_path / "c.json"
    xd.write_correlator_csv(grid6, csv, sidecar)
    back = xd.read_correlator_csv(csv, sidecar)
    assert np.array_equal(back.values, grid6.values)
    assert np.array_equal(back.positions, grid6.positions)
    assert back.meta == grid6.meta
    meta = json.loads(sidecar.read_text())
    assert meta["params"]["L"] == 6
    assert meta["method"] == "ed"


def test_grid_validation():
    with pytest.raises(ValueError):
        xd.CorrelatorGrid(positions=[0, 1], times=[0.0], values=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        xd.CorrelatorGrid(
            positions=[0], times=[0.0], values=np.array([[np.nan]], dtype=complex)
        )


def test_read_rejects_ragged_table(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,t,re,im\n0,0,1,0\n1,0,1,0\n0,1,1,0\n")
    with pytest.raises(ValueError):
        xd.read_correlator_csv(path)
