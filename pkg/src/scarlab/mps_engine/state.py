"""Matrix-product states on an open chain of spin-1 sites.

Tensor layout is (left bond, physical, right bond) with physical index in
the digit convention of the dense code: 0 = up, 1 = zero, 2 = down, and
site 0 is the most significant trit of a dense state vector.  States keep
an orthogonality center and a running total of the relative weight
discarded by truncations; nothing ever renormalizes behind the caller's
back, so norms reflect the actual truncation loss.
"""

from __future__ import annotations

import numpy as np

from ..scar_tower import CoherentState

__all__ = ["MPS", "product_mps", "apply_squared_raising", "PAIR_RAISE", "PAIR_LOWER", "SZ"]

PAIR_RAISE = np.zeros((3, 3))  # (S+)^2 in the digit basis
PAIR_RAISE[0, 2] = 2.0
PAIR_LOWER = PAIR_RAISE.T.copy()
SZ = np.diag([1.0, 0.0, -1.0])


class MPS:
    """Open-boundary MPS with an orthogonality center.

    Sites left of the center are left-isometries, sites right of it are
    right-isometries.  All mutating methods keep that structure; use
    canonical_residuals to audit it.
    """

    def __init__(self, tensors, center: int = 0, trunc_err: float = 0.0):
        self.tensors = [np.asarray(t, dtype=np.complex128) for t in tensors]
        if not self.tensors:
            raise ValueError("empty tensor list")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("edge bonds must have dimension 1")
        for i, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 3:
                raise ValueError(f"tensor {i} is not (left, 3, right)")
            if i and t.shape[0] != self.tensors[i - 1].shape[2]:
                raise ValueError(f"bond mismatch between sites {i - 1} and {i}")
        if not 0 <= center < len(self.tensors):
            raise ValueError("center out of range")
        self.center = center
        self.trunc_err = float(trunc_err)

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "MPS":
        return MPS([t.copy() for t in self.tensors], self.center, self.trunc_err)

    # -- gauge ------------------------------------------------------------

    def _qr_left(self, i: int):
        """Make site i a left isometry, absorbing the rest into site i+1."""
        t = self.tensors[i]
        dl, d, dr = t.shape
        q, r = np.linalg.qr(t.reshape(dl * d, dr))
        k = q.shape[1]
        self.tensors[i] = q.reshape(dl, d, k)
        self.tensors[i + 1] = np.tensordot(r, self.tensors[i + 1], axes=(1, 0))

    def _qr_right(self, i: int):
        """Make site i a right isometry, absorbing the rest into site i-1."""
        t = self.tensors[i]
        dl, d, dr = t.shape
        q, r = np.linalg.qr(t.reshape(dl, d * dr).conj().T)
        k = q.shape[1]
        self.tensors[i] = q.conj().T.reshape(k, d, dr)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], r.conj().T, axes=(2, 0))

    def canonicalize(self, center: int = 0) -> "MPS":
        """Restore canonical form around the given center, from scratch."""
        if not 0 <= center < self.L:
            raise ValueError("center out of range")
        for i in range(center):
            self._qr_left(i)
        for i in range(self.L - 1, center, -1):
            self._qr_right(i)
        self.center = center
        return self

    def move_center(self, k: int) -> "MPS":
        """Shift the center assuming the state is already canonical."""
        while self.center < k:
            self._qr_left(self.center)
            self.center += 1
        while self.center > k:
            self._qr_right(self.center)
            self.center -= 1
        return self

    def canonical_residuals(self):
        """Per-site deviation from the expected isometry property."""
        out = []
        for i, t in enumerate(self.tensors):
            dl, d, dr = t.shape
            if i < self.center:
                m = t.reshape(dl * d, dr)
                out.append(float(np.max(np.abs(m.conj().T @ m - np.eye(dr)))))
            elif i > self.center:
                m = t.reshape(dl, d * dr)
                out.append(float(np.max(np.abs(m @ m.conj().T - np.eye(dl)))))
            else:
                out.append(0.0)
        return out

    # -- scalars ----------------------------------------------------------

    def overlap(self, other: "MPS") -> complex:
        """<self|other> by a left-to-right transfer contraction."""
        if other.L != self.L:
            raise ValueError("length mismatch")
        env = np.ones((1, 1), dtype=np.complex128)
        for a, b in zip(self.tensors, other.tensors):
            t = np.tensordot(env, b, axes=(1, 0))  # (abra, s, r)
            env = np.tensordot(np.conj(a), t, axes=([0, 1], [0, 1]))
        return complex(env[0, 0])

    def norm(self) -> float:
        return float(np.sqrt(max(self.overlap(self).real, 0.0)))

    def normalize(self) -> "MPS":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero state")
        self.tensors[self.center] = self.tensors[self.center] / n
        return self

    def to_dense(self, cap: int = 3**12) -> np.ndarray:
        """Dense amplitudes ordered by the integer code of the digit string."""
        if 3**self.L > cap:
            raise ValueError(f"3^{self.L} exceeds the dense cap {cap}")
        v = np.ones((1, 1), dtype=np.complex128)
        for t in self.tensors:
            v = np.tensordot(v, t, axes=(1, 0))  # (codes, s, r)
            v = v.reshape(v.shape[0] * 3, v.shape[2])
        return v[:, 0]

    # -- local operators ----------------------------------------------------

    def apply_local(self, mat: np.ndarray, site: int) -> "MPS":
        """New MPS with a 3x3 operator applied at one site (unnormalized)."""
        if not 0 <= site < self.L:
            raise ValueError(f"site {site} out of range")
        out = self.copy()
        out.tensors[site] = np.tensordot(
            np.asarray(mat, dtype=np.complex128), out.tensors[site], axes=(1, 1)
        ).transpose(1, 0, 2)
        return out

    def expectation_local(self, mat: np.ndarray, site: int) -> complex:
        """Raw <psi|O_site|psi> (no normalization)."""
        return self.overlap(self.apply_local(mat, site))

    def sum_local_expectation(self, mat: np.ndarray) -> complex:
        """Raw sum_j <psi|O_j|psi> via one transfer sweep per operator stack."""
        mat = np.asarray(mat, dtype=np.complex128)
        # envs[j] accumulates identity transfer left of j with one insertion
        total = 0.0 + 0.0j
        left = np.ones((1, 1), dtype=np.complex128)
        rights = [np.ones((1, 1), dtype=np.complex128)]
        for t in reversed(self.tensors[1:]):
            e = np.tensordot(t, rights[-1], axes=(2, 1))  # (l, s, rbra)
            rights.append(np.tensordot(e, np.conj(t), axes=([1, 2], [1, 2])))
        rights.reverse()
        for j, t in enumerate(self.tensors):
            tm = np.tensordot(mat, t, axes=(1, 1)).transpose(1, 0, 2)
            e = np.tensordot(left, tm, axes=(1, 0))  # (lbra, s, r)
            e = np.tensordot(np.conj(t), e, axes=([0, 1], [0, 1]))  # (rbra, r)
            total += np.tensordot(e, rights[j], axes=([0, 1], [1, 0]))
            e2 = np.tensordot(left, t, axes=(1, 0))
            left = np.tensordot(np.conj(t), e2, axes=([0, 1], [0, 1]))
        return complex(total)


def product_mps(zeta: complex, L: int) -> MPS:
    """Bond-dimension-1 coherent product state, normalized."""
    coh = CoherentState(zeta=complex(zeta), L=L)
    tensors = [coh.site_amplitudes(j).reshape(1, 3, 1) for j in range(L)]
    return MPS(tensors, center=L - 1)


def apply_squared_raising(mps: MPS, site: int) -> MPS:
    """(S+_site)^2 |psi>, unnormalized; bond dimensions are unchanged."""
    return mps.apply_local(PAIR_RAISE, site)
