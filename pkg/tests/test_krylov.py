import numpy as np
import pytest
import scipy.linalg

from scarlab.krylov import NonConvergenceError, expm_apply_adaptive, expm_krylov
from scarlab.spin_core import ModelParams, build_hamiltonian, full_basis

PAPER = dict(J=1.0, h=0.5, D=0.1, J3=0.5)


@pytest.fixture(scope="module")
def small_h():
    params = ModelParams(L=4, **PAPER)
    return build_hamiltonian(params, full_basis(4)).matrix


@pytest.mark.parametrize("t", [0.3, 1.7, 5.0])
def test_matches_dense_expm(small_h, t):
    # oracle: scipy dense expm on the 81-dimensional full space
    dense = np.asarray(small_h.todense())
    rng = np.random.default_rng(11)
    v = rng.standard_normal(81) + 1j * rng.standard_normal(81)
    v /= np.linalg.norm(v)
    expected = scipy.linalg.expm(-1j * t * dense) @ v
    got = expm_apply_adaptive(lambda x: small_h @ x, v, -1j * t, tol=1e-10)
    assert np.linalg.norm(got - expected) < 1e-9


def test_norm_preserved(small_h):
    rng = np.random.default_rng(4)
    v = rng.standard_normal(81) + 1j * rng.standard_normal(81)
    w = expm_apply_adaptive(lambda x: small_h @ x, v, -1j * 3.0, tol=1e-10)
    assert abs(np.linalg.norm(w) - np.linalg.norm(v)) < 1e-9 * np.linalg.norm(v)


def test_zero_time_is_identity(small_h):
    rng = np.random.default_rng(8)
    v = rng.standard_normal(81) + 1j * rng.standard_normal(81)
    w = expm_apply_adaptive(lambda x: small_h @ x, v, 0.0, tol=1e-12)
    assert np.array_equal(w, v)


def test_eigenvector_breakdown_is_exact(small_h):
    # the all-down state is an exact zero mode; Lanczos terminates in one step
    v = np.zeros(81, dtype=complex)
    v[-1] = 1.0
    w, err, converged = expm_krylov(lambda x: small_h @ x, v, -1j * 2.0, tol=1e-12)
    assert converged
    assert np.linalg.norm(w - v) < 1e-12


def test_nonconvergence_raises(small_h):
    rng = np.random.default_rng(2)
    v = rng.standard_normal(81) + 1j * rng.standard_normal(81)
    with pytest.raises(NonConvergenceError):
        expm_apply_adaptive(lambda x: small_h @ x, v, -1j * 50.0, tol=1e-10, max_dim=2, max_halvings=2)
