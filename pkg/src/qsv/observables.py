"""Expectation values, correlators, reduced density matrices and Renyi-2 entropy."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .apply import apply_hamiltonian
from .errors import ConfigurationError, ContractError, NumericalError
from .fabric import all_reduce_sum
from .hamiltonian import Hamiltonian, LocalTerm, block_terms
from .state import ShardedState, _relayout_local, _swap, inner_product

__all__ = [
    "ReducedDensityMatrix",
    "RDM_CAP",
    "connected_correlator",
    "expectation",
    "reduced_density_matrix",
    "renyi2",
]

RDM_CAP = 14
REDUCE_CHUNK = 1 << 20


def _imag_tol(state: ShardedState) -> float:
    return 1e-8 if state.dtype == np.complex128 else 1e-4


def expectation(state: ShardedState, H: Hamiltonian, plan=None) -> float:
    """``<psi|H|psi> / <psi|psi>``; warns if the state is not normalized."""
    nn = inner_product(state, state).real
    if abs(nn - 1.0) > 1e-6:
        warnings.warn(f"state norm squared is {nn:.8g}, dividing it out", RuntimeWarning, stacklevel=2)
    val = inner_product(state, apply_hamiltonian(state, H, plan))
    if abs(val.imag) > _imag_tol(state) * max(1.0, abs(val)):
        raise NumericalError(f"expectation value has imaginary part {val.imag:.3g}; is H Hermitian?")
    return val.real / nn


def _site_operator(state: ShardedState, ops: dict[int, np.ndarray]) -> Hamiltonian:
    support = tuple(sorted(ops))
    m = np.array([[1.0 + 0j]])
    for q in support:
        m = np.kron(m, np.asarray(ops[q], dtype=np.complex128))
    return block_terms([LocalTerm(support, m)], state.num_qubits, state.tiling[1])


def connected_correlator(
    state: ShardedState, op_a: np.ndarray, site_i: int, op_b: np.ndarray, site_j: int
) -> float:
    """``<A_i B_j> - <A_i><B_j>`` for Hermitian single-qubit operators."""
    if site_i == site_j:
        raise ContractError("connected correlator needs two distinct sites")
    ab = expectation(state, _site_operator(state, {site_i: op_a, site_j: op_b}))
    a = expectation(state, _site_operator(state, {site_i: op_a}))
    b = expectation(state, _site_operator(state, {site_j: op_b}))
    return ab - a * b


@dataclass
class ReducedDensityMatrix:
    subsystem: tuple[int, ...]
    matrix: np.ndarray

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def purity(self) -> float:
        return float(np.vdot(self.matrix, self.matrix).real)

    def check(self, tol: float = 1e-8) -> None:
        """Raise :class:`NumericalError` unless Hermitian, unit trace and PSD within ``tol``."""
        m = self.matrix
        if np.abs(m - m.conj().T).max() > tol:
            raise NumericalError("reduced density matrix is not Hermitian")
        if abs(self.trace - 1.0) > tol:
            raise NumericalError(f"reduced density matrix has trace {self.trace}")
        if np.linalg.eigvalsh(m).min() < -tol:
            raise NumericalError("reduced density matrix has a negative eigenvalue")


def reduced_density_matrix(
    state: ShardedState, A: Sequence[int], *, cap: int = RDM_CAP, normalize: bool = True
) -> ReducedDensityMatrix:
    """``Tr_{not A} |psi><psi|`` with ``A`` in ascending qubit order.

    Qubits of ``A`` that are global get swapped into the shards first, then
    ``A`` is moved to the trailing local positions so each shard contributes
    one ``(rows, 2**|A|)`` Gram product. The result is accumulated in double
    precision.
    """
    A = tuple(sorted(set(int(q) for q in A)))
    if len(A) > cap:
        raise ConfigurationError(f"subsystem of {len(A)} qubits exceeds the cap of {cap}")
    if A and (A[0] < 0 or A[-1] >= state.num_qubits):
        raise ContractError(f"subsystem {A} out of range for {state.num_qubits} qubits")
    if len(A) > state.num_local:
        raise ConfigurationError(
            f"subsystem of {len(A)} qubits does not fit in {state.num_local} local qubits"
        )
    work = state
    hit = [q for q in state.global_qubits if q in A]
    if hit:
        spare = [q for q in state.local_qubits if q not in A][: len(hit)]
        work = _swap(work, list(zip(hit, spare)), inplace=False)
    order = [q for q in work.local_qubits if q not in A] + list(A)
    work = _relayout_local(work, order, inplace=False)
    dim = 1 << len(A)

    def gram(s, shard):
        m = shard.reshape(-1, dim).astype(np.complex128, copy=False)
        return m.T @ m.conj()

    rho = all_reduce_sum(work.mesh, work.mesh.map(gram, work.shards), chunk=REDUCE_CHUNK)
    rho = 0.5 * (rho + rho.conj().T)
    if normalize:
        rho = rho / np.trace(rho).real
    return ReducedDensityMatrix(A, rho)


def renyi2(rdm: ReducedDensityMatrix) -> float:
    """Second Renyi entropy ``-log2 Tr(rho**2)`` in bits."""
    p = rdm.purity()
    if not 0.0 < p <= 1.0 + 1e-8:
        raise NumericalError(f"Tr(rho^2) = {p!r} is outside (0, 1]")
    return max(0.0, -math.log2(p))
