"""Lanczos propagation of exp(z*A)v for Hermitian A.

Used in two places: full-space unitary evolution of sector vectors (A is a
sparse Hamiltonian, z = -i*t, adaptive substepping) and the local
exponentials inside the TDVP sweeps (A is an effective Hamiltonian given
as a matvec closure, single shot with a hard dimension cap).

The recurrence runs with full reorthogonalization against all previous
Krylov vectors; at these subspace sizes the cost is negligible next to the
matvecs and it removes the classical loss-of-orthogonality failure mode.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg


class NonConvergenceError(RuntimeError):
    """Krylov iteration failed to reach the requested tolerance."""


_BREAKDOWN = 1e-14


def _expm_tridiag(alpha: np.ndarray, beta: np.ndarray, z: complex) -> np.ndarray:
    """First column of exp(z*T) for the real symmetric tridiagonal T."""
    if alpha.size == 1:
        return np.exp(z * alpha[:1]).astype(np.complex128)
    vals, vecs = scipy.linalg.eigh_tridiagonal(alpha, beta)
    return (vecs * np.exp(z * vals)) @ vecs[0].conj()


def expm_krylov(
    matvec: Callable[[np.ndarray], np.ndarray],
    v: np.ndarray,
    z: complex,
    tol: float = 1e-10,
    max_dim: int = 60,
):
    """Single-shot Lanczos approximation of exp(z*A)v.

    Returns (w, err_est, converged).  The error estimate is the usual
    residual surrogate |beta_m * [exp(z T)]_{m,0}|, accepted once two
    consecutive iterations fall below tol * ||v||.
    """
    norm_v = float(np.linalg.norm(v))
    if norm_v == 0.0:
        return v.copy(), 0.0, True
    if z == 0:
        return v.copy(), 0.0, True

    dim = v.size
    m_cap = min(max_dim, dim)
    V = np.empty((m_cap + 1, dim), dtype=np.complex128)
    V[0] = v / norm_v
    alphas = np.empty(m_cap)
    betas = np.empty(m_cap)

    err_prev = np.inf
    for m in range(m_cap):
        w = matvec(V[m])
        a = np.vdot(V[m], w)
        alphas[m] = a.real
        w = w - a * V[m]
        if m > 0:
            w = w - betas[m - 1] * V[m - 1]
        # full reorthogonalization, one pass
        overlaps = V[: m + 1].conj() @ w
        w = w - overlaps @ V[: m + 1]
        b = float(np.linalg.norm(w))
        betas[m] = b

        col = _expm_tridiag(alphas[: m + 1], betas[:m], z)
        if b < _BREAKDOWN * max(1.0, abs(alphas[: m + 1]).max()):
            # invariant subspace reached: the result is exact
            result = norm_v * (col @ V[: m + 1])
            return result, 0.0, True
        err = abs(b * col[-1]) * abs(z)
        if err < tol and err_prev < tol:
            result = norm_v * (col @ V[: m + 1])
            return result, float(err), True
        err_prev = err
        V[m + 1] = w / b

    col = _expm_tridiag(alphas[:m_cap], betas[: m_cap - 1], z)
    result = norm_v * (col @ V[:m_cap])
    return result, float(abs(betas[m_cap - 1] * col[-1]) * abs(z)), False


def expm_apply_adaptive(
    matvec: Callable[[np.ndarray], np.ndarray],
    v: np.ndarray,
    z: complex,
    tol: float = 1e-10,
    max_dim: int = 60,
    max_halvings: int = 24,
):
    """exp(z*A)v with adaptive substepping.

    The interval is split in halves until every substep converges within
    the Krylov dimension cap; the per-substep tolerance is scaled so the
    accumulated error stays below tol.  Raises NonConvergenceError when
    the maximum subdivision depth is reached.
    """
    n_sub = 1
    for _ in range(max_halvings + 1):
        step = z / n_sub
        w = v
        ok = True
        sub_tol = tol / n_sub
        for _k in range(n_sub):
            w, _err, converged = expm_krylov(matvec, w, step, tol=sub_tol, max_dim=max_dim)
            if not converged:
                ok = False
                break
        if ok:
            return w
        n_sub *= 2
    raise NonConvergenceError(
        f"Krylov evolution did not converge after {max_halvings} interval halvings "
        f"(tol={tol}, max_dim={max_dim})"
    )
