"""Sharded state-vector simulation of local Hamiltonians.

A ``2**N`` amplitude vector is split over ``2**N_g`` lockstep workers. Terms
of a local Hamiltonian are merged into dense 7-qubit blocks and applied as
tiled matrix products, which is enough to build Lanczos ground-state search
and product-formula time evolution on top.
"""
__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConfigurationError,
    ContractError,
    FormatError,
    NumericalError,
    QSVError,
    UnsupportedTermError,
)
from .fabric import Mesh, all_reduce_sum, all_to_all, broadcast, spawn_mesh
from .state import (
    ShardedState,
    axpy,
    gather_dense,
    init_product_state,
    init_random_state,
    inner_product,
    norm,
    permute_local,
    scatter_dense,
    swap_global_local,
    zeros_state,
)
from .hamiltonian import (
    BlockedTerm,
    Hamiltonian,
    LocalTerm,
    block_terms,
    build_random_local,
    build_xxz,
    hamiltonian_to_dense,
    hamiltonian_to_sparse,
)
from .apply import apply_hamiltonian, apply_term, count_cost, multiply_last_block, plan_schedule
from .lanczos import ground_state, lanczos_full, lanczos_ritz_vector, lanczos_tridiag, tridiag_eigen
from .evolve import evolve, step, taylor_roots
from .observables import connected_correlator, expectation, reduced_density_matrix, renyi2
from .checkpoint import load_state, save_state
