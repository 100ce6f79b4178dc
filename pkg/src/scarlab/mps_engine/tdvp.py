"""Time-dependent variational principle sweeps over an MPS.

Environment conventions: left environments are indexed (bra bond, MPO bond,
ket bond), right environments likewise; effective Hamiltonians act on the
flattened site (or bond) tensor and are hermitian in mixed-canonical gauge,
so local exponentials run through the Lanczos propagator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..krylov import NonConvergenceError, expm_krylov
from .mpo import MPOOperator
from .state import MPS, SZ

__all__ = [
    "SchedulePhase",
    "default_schedule",
    "tdvp2_step",
    "tdvp1_step",
    "evolve_schedule",
    "expectation_mpo",
    "trajectory_to_ndjson",
]

KRYLOV_CAP = 30


def _boundaries(mps: MPS, mpo: MPOOperator):
    if mps.L != mpo.L:
        raise ValueError(f"MPS has {mps.L} sites but MPO has {mpo.L}")
    left = np.zeros((1, mpo.tensors[0].shape[0], 1), dtype=np.complex128)
    left[0, 0, 0] = 1.0
    right = np.zeros((1, mpo.tensors[-1].shape[1], 1), dtype=np.complex128)
    right[0, -1, 0] = 1.0
    return left, right


def _update_left(env, w, a):
    t = np.tensordot(env, a, axes=(2, 0))  # (bra, mpo, phys, ket')
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))  # (bra, ket', mpo', phys')
    t = np.tensordot(np.conj(a), t, axes=([0, 1], [0, 3]))  # (bra', ket', mpo')
    return t.transpose(0, 2, 1)


def _update_right(env, w, b):
    t = np.tensordot(b, env, axes=(2, 2))  # (ket', phys, bra, mpo)
    t = np.tensordot(w, t, axes=([1, 3], [3, 1]))  # (mpo', phys', ket', bra)
    t = np.tensordot(t, np.conj(b), axes=([3, 1], [2, 1]))  # (mpo', ket', bra')
    return t.transpose(2, 0, 1)


def _heff1(le, w, re, a):
    t = np.tensordot(le, a, axes=(2, 0))  # (bra, mpo, phys, ket-right)
    t = np.tensordot(t, w, axes=([1, 2], [0, 3]))  # (bra, ket-right, mpo', phys')
    return np.tensordot(t, re, axes=([1, 2], [2, 1]))  # (bra, phys', bra-right)


def _heff0(le, re, c):
    t = np.tensordot(le, c, axes=(2, 0))  # (bra, mpo, ket-right)
    return np.tensordot(t, re, axes=([1, 2], [1, 2]))  # (bra, bra-right)


def _heff2(le, w1, w2, re, theta):
    t = np.tensordot(le, theta, axes=(2, 0))  # (bra, mpo, s1, s2, ket-right)
    t = np.tensordot(t, w1, axes=([1, 2], [0, 3]))  # (bra, s2, ket-right, mid, s1')
    t = np.tensordot(t, w2, axes=([3, 1], [0, 3]))  # (bra, ket-right, s1', mpo', s2')
    return np.tensordot(t, re, axes=([1, 3], [2, 1]))  # (bra, s1', s2', bra-right)


def _exp_local(matvec, x, z, tol, site):
    """exp(z * Heff) applied to a local tensor, failing with the site index."""
    shape = x.shape
    flat = x.reshape(-1)

    def mv(v):
        return matvec(v.reshape(shape)).reshape(-1)

    out, _, converged = expm_krylov(mv, flat, z, tol=tol, max_dim=KRYLOV_CAP)
    if not converged:
        raise NonConvergenceError(
            f"local exponential did not converge at site {site}"
        )
    return out.reshape(shape)


def _split_theta(theta, trunc_eps, max_bond, absorb):
    """SVD split of a two-site tensor; returns (left, right, relative discarded
    weight).  Singular values go right when absorb='right', left otherwise.
    No renormalization after truncation."""
    dl, _, _, dr = theta.shape
    mat = theta.reshape(dl * 3, dr * 3)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    weights = s**2
    total = float(weights.sum())
    if total == 0.0:
        keep = 1
        err = 0.0
    else:
        tail = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
        keep = s.size
        while keep > 1 and tail[keep - 1] <= trunc_eps * total:
            keep -= 1
        if max_bond is not None:
            keep = min(keep, max_bond)
        keep = max(keep, 1)
        err = float(tail[keep] / total)
    u = u[:, :keep]
    s = s[:keep]
    vh = vh[:keep]
    if absorb == "right":
        left = u.reshape(dl, 3, keep)
        right = (s[:, None] * vh).reshape(keep, 3, dr)
    else:
        left = (u * s).reshape(dl, 3, keep)
        right = vh.reshape(keep, 3, dr)
    return left, right, err


def _split_left_site(a):
    """Left-isometric site tensor plus the bond matrix to its right."""
    dl, _, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl * 3, dr))
    return q.reshape(dl, 3, -1), r


def _split_right_site(a):
    """Bond matrix to the left plus a right-isometric site tensor."""
    dl, _, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl, 3 * dr).conj().T)
    return r.conj().T, q.conj().T.reshape(-1, 3, dr)


def tdvp2_step(
    mps: MPS,
    mpo: MPOOperator,
    dt: float,
    trunc_eps: float = 1e-12,
    max_bond: Optional[int] = None,
    krylov_tol: float = 1e-12,
) -> MPS:
    """One symmetric two-site sweep of exp(-i dt H); truncates adaptively."""
    if dt == 0:
        return mps
    L = mps.L
    mps.canonicalize(0)
    lb, rb = _boundaries(mps, mpo)
    ts = mps.tensors
    ws = mpo.tensors

    renv = [None] * L
    renv[L - 1] = rb
    for i in range(L - 2, -1, -1):
        renv[i] = _update_right(renv[i + 1], ws[i + 1], ts[i + 1])
    lenv = [None] * L
    lenv[0] = lb

    zf = -0.5j * dt
    zb = +0.5j * dt

    for i in range(L - 1):
        theta = np.tensordot(ts[i], ts[i + 1], axes=(2, 0))
        theta = _exp_local(
            lambda x: _heff2(lenv[i], ws[i], ws[i + 1], renv[i + 1], x),
            theta, zf, krylov_tol, i,
        )
        left, right, err = _split_theta(theta, trunc_eps, max_bond, absorb="right")
        ts[i] = left
        mps.trunc_err += err
        lenv[i + 1] = _update_left(lenv[i], ws[i], left)
        if i < L - 2:
            right = _exp_local(
                lambda x: _heff1(lenv[i + 1], ws[i + 1], renv[i + 1], x),
                right, zb, krylov_tol, i + 1,
            )
        ts[i + 1] = right
        mps.center = i + 1

    for i in range(L - 2, -1, -1):
        theta = np.tensordot(ts[i], ts[i + 1], axes=(2, 0))
        theta = _exp_local(
            lambda x: _heff2(lenv[i], ws[i], ws[i + 1], renv[i + 1], x),
            theta, zf, krylov_tol, i,
        )
        left, right, err = _split_theta(theta, trunc_eps, max_bond, absorb="left")
        ts[i + 1] = right
        mps.trunc_err += err
        renv[i] = _update_right(renv[i + 1], ws[i + 1], right)
        if i > 0:
            left = _exp_local(
                lambda x: _heff1(lenv[i], ws[i], renv[i], x),
                left, zb, krylov_tol, i,
            )
        ts[i] = left
        mps.center = i

    return mps


def tdvp1_step(
    mps: MPS,
    mpo: MPOOperator,
    dt: float,
    trunc_eps: float = 0.0,
    max_bond: Optional[int] = None,
    krylov_tol: float = 1e-12,
) -> MPS:
    """One symmetric one-site sweep; conserves bond dimensions and norm.

    trunc_eps and max_bond are accepted for signature parity with
    tdvp2_step and ignored: one-site sweeps never truncate.
    """
    if dt == 0:
        return mps
    L = mps.L
    mps.canonicalize(0)
    lb, rb = _boundaries(mps, mpo)
    ts = mps.tensors
    ws = mpo.tensors

    renv = [None] * L
    renv[L - 1] = rb
    for i in range(L - 2, -1, -1):
        renv[i] = _update_right(renv[i + 1], ws[i + 1], ts[i + 1])
    lenv = [None] * L
    lenv[0] = lb

    zf = -0.5j * dt
    zb = +0.5j * dt

    for i in range(L):
        a = _exp_local(
            lambda x: _heff1(lenv[i], ws[i], renv[i], x),
            ts[i], zf, krylov_tol, i,
        )
        if i < L - 1:
            q, c = _split_left_site(a)
            ts[i] = q
            lenv[i + 1] = _update_left(lenv[i], ws[i], q)
            c = _exp_local(
                lambda x: _heff0(lenv[i + 1], renv[i], x),
                c, zb, krylov_tol, i,
            )
            ts[i + 1] = np.tensordot(c, ts[i + 1], axes=(1, 0))
        else:
            ts[i] = a
        mps.center = min(i + 1, L - 1)

    for i in range(L - 1, -1, -1):
        a = _exp_local(
            lambda x: _heff1(lenv[i], ws[i], renv[i], x),
            ts[i], zf, krylov_tol, i,
        )
        if i > 0:
            c, b = _split_right_site(a)
            ts[i] = b
            renv[i - 1] = _update_right(renv[i], ws[i], b)
            c = _exp_local(
                lambda x: _heff0(lenv[i], renv[i - 1], x),
                c, zb, krylov_tol, i - 1,
            )
            ts[i - 1] = np.tensordot(ts[i - 1], c, axes=(2, 0))
        else:
            ts[i] = a
        mps.center = max(i - 1, 0)

    return mps


def expectation_mpo(mps: MPS, mpo: MPOOperator) -> complex:
    """Raw matrix element <psi|W|psi> (no normalization)."""
    lb, rb = _boundaries(mps, mpo)
    env = lb
    for w, a in zip(mpo.tensors, mps.tensors):
        env = _update_left(env, w, a)
    return complex(np.tensordot(env, rb, axes=([0, 1, 2], [0, 1, 2])))


@dataclass(frozen=True)
class SchedulePhase:
    """One leg of an evolution schedule, active until trajectory time t_end.

    method 'auto' runs two-site sweeps until the bond dimension reaches
    max_bond, then switches to one-site sweeps.
    """

    method: str
    dt: float
    eps: float
    max_bond: Optional[int]
    t_end: float

    def __post_init__(self):
        if self.method not in ("tdvp2", "tdvp1", "auto"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be at least 1")
        if not np.isfinite(self.t_end):
            raise ValueError("t_end must be finite")


WARMUP_DT = 1e-6
WARMUP_STEPS = 6


def default_schedule(
    t_end: float,
    dt: float = 0.1,
    eps: float = 1e-12,
    max_bond: Optional[int] = 128,
) -> list:
    """Adaptive two-site growth, one-site once the bond cap is reached.

    A short leg of tiny two-site steps comes first: from a product state
    the distance-3 couplings point outside the low-rank tangent space, and
    full-size first steps pick up an O(dt) error that never heals.  Six
    steps at dt=1e-6 grow the ranks at negligible cost and error.
    """
    span = WARMUP_DT * WARMUP_STEPS
    if t_end <= 2 * span:
        return [SchedulePhase("auto", dt=min(dt, t_end), eps=eps,
                              max_bond=max_bond, t_end=t_end)]
    warm_cap = 32 if max_bond is None else min(32, max_bond)
    return [
        SchedulePhase("tdvp2", dt=WARMUP_DT, eps=0.0, max_bond=warm_cap,
                      t_end=span),
        SchedulePhase("auto", dt=dt, eps=eps, max_bond=max_bond, t_end=t_end),
    ]


def _validate_schedule(phases: Sequence[SchedulePhase]):
    if not phases:
        raise ValueError("schedule is empty")
    prev = 0.0
    for p in phases:
        if not isinstance(p, SchedulePhase):
            raise ValueError("schedule entries must be SchedulePhase")
        if p.t_end <= prev:
            raise ValueError(
                f"schedule t_end values must increase: {p.t_end} after {prev}"
            )
        prev = p.t_end


class _Walker:
    """Advances one MPS through a phase schedule, landing exactly on
    requested stop times.  sign=-1 runs the conjugate trajectory (used for
    bras evolved backwards)."""

    def __init__(self, mps, mpo, phases, sign=1.0, krylov_tol=1e-12):
        _validate_schedule(phases)
        self.mps = mps
        self.mpo = mpo
        self.phases = list(phases)
        self.sign = float(sign)
        self.krylov_tol = krylov_tol
        self.t = 0.0
        self.records = [self._record()]

    def _record(self):
        n2 = self.mps.norm() ** 2
        energy = expectation_mpo(self.mps, self.mpo)
        mag = self.mps.sum_local_expectation(SZ)
        return {
            "t": float(self.t),
            "max_bond": int(self.mps.max_bond()),
            "trunc_err": float(self.mps.trunc_err),
            "energy": float(np.real(energy / n2)) if n2 > 0 else 0.0,
            "magnetization": float(np.real(mag / n2)) if n2 > 0 else 0.0,
            "norm": float(np.sqrt(n2)),
        }

    def _phase_at(self, t):
        for p in self.phases:
            if t < p.t_end - 1e-12:
                return p
        return None

    def _step(self, phase, dt):
        method = phase.method
        if method == "auto":
            cap = phase.max_bond
            method = "tdvp2" if cap is None or self.mps.max_bond() < cap else "tdvp1"
        if method == "tdvp2":
            tdvp2_step(
                self.mps, self.mpo, self.sign * dt,
                trunc_eps=phase.eps, max_bond=phase.max_bond,
                krylov_tol=self.krylov_tol,
            )
        else:
            tdvp1_step(self.mps, self.mpo, self.sign * dt, krylov_tol=self.krylov_tol)

    def advance_to(self, t_target):
        if t_target > self.phases[-1].t_end + 1e-9:
            raise ValueError(
                f"target time {t_target} lies beyond the schedule end "
                f"{self.phases[-1].t_end}"
            )
        if t_target < self.t - 1e-9:
            raise ValueError("stop times must be non-decreasing")
        while self.t < t_target - 1e-12:
            phase = self._phase_at(self.t)
            stop = min(t_target, phase.t_end)
            span = stop - self.t
            n_sub = max(1, int(np.ceil(span / phase.dt - 1e-9)))
            h = span / n_sub
            t_entry = self.t
            for k in range(n_sub):
                self._step(phase, h)
                self.t = stop if k == n_sub - 1 else t_entry + (k + 1) * h
                self.records.append(self._record())

    def finish(self):
        self.advance_to(self.phases[-1].t_end)


def evolve_schedule(
    mps: MPS,
    mpo: MPOOperator,
    schedule: Sequence[SchedulePhase],
    measure_times: Optional[Sequence[float]] = None,
    on_measure: Optional[Callable[[float, MPS], None]] = None,
    sign: float = 1.0,
    krylov_tol: float = 1e-12,
) -> list:
    """Runs the phases in order, mutating mps; returns per-step records.

    measure_times (ascending, within the schedule span) are landed on
    exactly; on_measure(t, mps) is called at each one.
    """
    walker = _Walker(mps, mpo, schedule, sign=sign, krylov_tol=krylov_tol)
    if measure_times is not None:
        for t in measure_times:
            walker.advance_to(float(t))
            if on_measure is not None:
                on_measure(float(t), mps)
    walker.finish()
    return walker.records


def trajectory_to_ndjson(records, path):
    """One JSON object per line with keys t, max_bond, trunc_err, energy,
    magnetization, norm."""
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")
