"""Spin-1 scar-tower laboratory: exact and tensor-network dynamics with transport analysis."""

import os as _os

# SCARLAB_THREADS is the only environment variable honored; it must be
# translated to the BLAS pool sizes before numpy is first imported.
_threads = _os.environ.get("SCARLAB_THREADS", "")
if _threads.isdigit() and int(_threads) > 0:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .spin_core import (  # noqa: F401
    ModelParams,
    SectorBasis,
    SparseOperator,
    StateVector,
    apply,
    build_basis,
    build_hamiltonian,
    embed_in_full,
    expectation,
    full_basis,
    full_spectrum,
    inner,
    local_operator,
)
