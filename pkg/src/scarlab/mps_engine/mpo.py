"""Matrix-product operator for the spin-1 XY chain with range-3 hopping.

The Hamiltonian is a finite-state machine walking left to right: a ready
state emits either the on-site field term, an open S+ or S- string, or
nothing; open strings close on the next site (distance 1, coupling J/2)
or are carried across two sites and closed at distance 3 (coupling J3/2).
That needs 8 machine states with the range-3 term and 4 without it.
"""

from __future__ import annotations

import numpy as np

from ..spin_core import ModelParams

__all__ = ["MPOOperator", "build_mpo", "S_PLUS", "S_MINUS", "S_Z_DIAG"]

_SQRT2 = np.sqrt(2.0)

S_PLUS = np.zeros((3, 3))  # digit basis, row = out
S_PLUS[0, 1] = _SQRT2
S_PLUS[1, 2] = _SQRT2
S_MINUS = S_PLUS.T.copy()
S_Z_DIAG = np.diag([1.0, 0.0, -1.0])
_EYE = np.eye(3)


class MPOOperator:
    """Uniform-bond MPO; boundary selection is by the first and last
    machine states (ready and finished)."""

    def __init__(self, tensors):
        self.tensors = [np.asarray(t, dtype=np.float64) for t in tensors]
        for i, t in enumerate(self.tensors):
            if t.ndim != 4 or t.shape[2:] != (3, 3):
                raise ValueError(f"tensor {i} is not (wl, wr, 3, 3)")
            if i and t.shape[0] != self.tensors[i - 1].shape[1]:
                raise ValueError(f"bond mismatch between sites {i - 1} and {i}")

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def bond_dim(self) -> int:
        return max(t.shape[0] for t in self.tensors)

    def left_boundary(self) -> np.ndarray:
        v = np.zeros(self.tensors[0].shape[0])
        v[0] = 1.0
        return v

    def right_boundary(self) -> np.ndarray:
        v = np.zeros(self.tensors[-1].shape[1])
        v[-1] = 1.0
        return v

    def to_dense(self, cap: int = 3**8) -> np.ndarray:
        """Contract to a (3^L, 3^L) matrix, row/column order matching the
        dense code convention (site 0 most significant)."""
        if 3**self.L > cap:
            raise ValueError(f"3^{self.L} exceeds the dense cap {cap}")
        acc = self.left_boundary().reshape(-1, 1, 1)  # (w, out, in)
        for t in self.tensors:
            acc = np.einsum("abc,avst->vbsct", acc, t).reshape(
                t.shape[1], acc.shape[1] * 3, acc.shape[2] * 3
            )
        return np.tensordot(self.right_boundary(), acc, axes=(0, 0))


def build_mpo(params: ModelParams) -> MPOOperator:
    """Finite-state-machine MPO of the model Hamiltonian (open chains only)."""
    if params.boundary != "open":
        raise ValueError("MPO construction supports open boundaries only")
    onsite = np.diag([2.0 * params.h, params.h - params.D, 0.0])
    hop = 0.5 * params.J
    hop3 = 0.5 * params.J3

    if params.J3 != 0.0:
        # states: 0 ready, 1-3 open S+ at distance 1..3, 4-6 open S-, 7 finished
        w = np.zeros((8, 8, 3, 3))
        w[0, 0] = _EYE
        w[0, 1] = S_PLUS
        w[0, 4] = S_MINUS
        w[0, 7] = onsite
        w[1, 7] = hop * S_MINUS
        w[4, 7] = hop * S_PLUS
        w[1, 2] = _EYE
        w[2, 3] = _EYE
        w[3, 7] = hop3 * S_MINUS
        w[4, 5] = _EYE
        w[5, 6] = _EYE
        w[6, 7] = hop3 * S_PLUS
        w[7, 7] = _EYE
    else:
        # states: 0 ready, 1 open S+, 2 open S-, 3 finished
        w = np.zeros((4, 4, 3, 3))
        w[0, 0] = _EYE
        w[0, 1] = S_PLUS
        w[0, 2] = S_MINUS
        w[0, 3] = onsite
        w[1, 3] = hop * S_MINUS
        w[2, 3] = hop * S_PLUS
        w[3, 3] = _EYE

    return MPOOperator([w.copy() for _ in range(params.L)])
