"""Lanczos tridiagonalization and memory-lean ground-state search.

Three variants of the same recurrence:

* :func:`lanczos_full` keeps every Krylov vector,
* :func:`lanczos_tridiag` keeps only the three vectors the recurrence needs,
* :func:`lanczos_ritz_vector` replays the recurrence from the same seed with
  the stored coefficients and accumulates a Ritz vector (four vectors).

All three perform the same floating point operations in the same order, so
the first two produce bit-identical coefficients and the third reconstructs
the same Krylov vectors. The operator is any callable ``x -> A x`` and the
vectors may be :class:`~qsv.state.ShardedState` or plain numpy arrays.

No reorthogonalization is done; loss of orthogonality shows up as ghost
copies of converged eigenvalues, which is harmless when only the extremal
pair is wanted.
"""
from __future__ import annotations

import time
import weakref
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .apply import apply_hamiltonian, plan_schedule
from .errors import ContractError
from .fabric import Mesh
from .hamiltonian import Hamiltonian
from .state import DEFAULT_TILING, ShardedState, axpy, inner_product, init_random_state, norm

__all__ = [
    "RitzPair",
    "TridiagResult",
    "VectorCensus",
    "ground_state",
    "hamiltonian_operator",
    "lanczos_full",
    "lanczos_ritz_vector",
    "lanczos_tridiag",
    "tridiag_eigen",
]

DEFAULT_K = 200
DEFAULT_DELTA = 1e-10

Operator = Callable[[Any], Any]


@dataclass
class TridiagResult:
    """Coefficients of ``T_j``: ``betas[0]`` is the seed norm, ``betas[n]``
    for ``n >= 1`` the off-diagonals, ``betas[-1]`` the norm of the first
    vector left out of the basis."""

    alphas: np.ndarray
    betas: np.ndarray
    terminated_early: bool
    max_alpha_imag: float = 0.0

    @property
    def j(self) -> int:
        return len(self.alphas)

    def matrix(self) -> np.ndarray:
        return np.diag(self.alphas) + np.diag(self.betas[1:-1], 1) + np.diag(self.betas[1:-1], -1)


@dataclass
class RitzPair:
    value: float
    coeffs: np.ndarray
    vector: Any
    residual: float
    tridiag: TridiagResult | None = None
    shift: float = 0.0
    wall_time: float = 0.0

    def record(self) -> dict:
        return {
            "energy": float(self.value),
            "residual": float(self.residual),
            "iterations": int(self.tridiag.j) if self.tridiag else len(self.coeffs),
            "terminated_early": bool(self.tridiag.terminated_early) if self.tridiag else False,
            "wall_time": float(self.wall_time),
        }


class VectorCensus:
    """Counts how many full vectors an algorithm holds at once.

    Vectors are registered as they are created and held through weak
    references, so a vector that goes out of scope stops counting as soon as
    it is freed.
    """

    def __init__(self):
        self._refs: list[weakref.ref] = []
        self.peak = 0

    def track(self, v):
        self._refs.append(weakref.ref(v))
        self.sample()
        return v

    def sample(self) -> int:
        self._refs = [r for r in self._refs if r() is not None]
        self.peak = max(self.peak, len(self._refs))
        return len(self._refs)


class _NoCensus:
    def track(self, v):
        return v

    def sample(self) -> int:
        return 0


# Vector primitives shared by both vector types. In-place updates keep the
# number of live vectors at what the algorithms promise.

def _zeros_like(x):
    return x.zeros_like() if isinstance(x, ShardedState) else np.zeros_like(x)


def _copy(x):
    return x.copy()


def _vdot(x, y) -> complex:
    return inner_product(x, y) if isinstance(x, ShardedState) else complex(np.vdot(x, y))


def _norm(x) -> float:
    if isinstance(x, ShardedState):
        return norm(x)
    return float(np.sqrt(max(np.vdot(x, x).real, 0.0)))


def _idiv(x, c: float) -> None:
    if isinstance(x, ShardedState):
        x.mesh.map(lambda s, a: np.divide(a, c, out=a), x.shards)
    else:
        np.divide(x, c, out=x)


def _iaxpy(alpha: complex, x, y) -> None:
    """``y += alpha * x``."""
    if isinstance(y, ShardedState):
        axpy(alpha, x, y, out=y)
    else:
        y += alpha * x


def _check_args(x0, K: int, delta: float) -> None:
    if K < 1:
        raise ContractError(f"Krylov dimension must be at least 1, got {K}")
    if not delta > 0:
        raise ContractError(f"breakdown threshold must be positive, got {delta}")
    if _norm(x0) == 0.0:
        raise ContractError("seed vector is zero")


def lanczos_full(
    applyH: Operator, x0, K: int, delta: float = DEFAULT_DELTA, *, census: VectorCensus | None = None
) -> tuple[TridiagResult, list]:
    """Lanczos with the Krylov basis kept in memory.

    Returns the coefficients and the list of normalized Krylov vectors
    ``x_0 .. x_{j-1}``. On breakdown (``beta_n < delta``) the basis holds every
    vector generated before the breakdown.
    """
    _check_args(x0, K, delta)
    census = census or _NoCensus()
    alphas: list[float] = []
    betas: list[float] = []
    Q: list = []
    imag = 0.0
    x_prev = census.track(_zeros_like(x0))
    x = census.track(_copy(x0))
    for n in range(K):
        beta = _norm(x)
        betas.append(beta)
        if beta < delta:
            return TridiagResult(np.array(alphas), np.array(betas), True, imag), Q
        _idiv(x, beta)
        Q.append(x)
        x_next = census.track(applyH(x))
        a = _vdot(x, x_next)
        imag = max(imag, abs(a.imag))
        alphas.append(a.real)
        _iaxpy(-a.real, x, x_next)
        _iaxpy(-beta, x_prev, x_next)
        x_prev, x = x, x_next
        census.sample()
    betas.append(_norm(x))
    return TridiagResult(np.array(alphas), np.array(betas), False, imag), Q


def lanczos_tridiag(
    applyH: Operator, x0, K: int, delta: float = DEFAULT_DELTA, *, census: VectorCensus | None = None
) -> TridiagResult:
    """Lanczos coefficients only, holding three vectors at a time."""
    _check_args(x0, K, delta)
    census = census or _NoCensus()
    alphas: list[float] = []
    betas: list[float] = []
    imag = 0.0
    x_prev = census.track(_zeros_like(x0))
    x = census.track(_copy(x0))
    for n in range(K):
        beta = _norm(x)
        betas.append(beta)
        if beta < delta:
            return TridiagResult(np.array(alphas), np.array(betas), True, imag)
        _idiv(x, beta)
        x_next = census.track(applyH(x))
        a = _vdot(x, x_next)
        imag = max(imag, abs(a.imag))
        alphas.append(a.real)
        _iaxpy(-a.real, x, x_next)
        _iaxpy(-beta, x_prev, x_next)
        x_prev, x = x, x_next
        census.sample()
    betas.append(_norm(x))
    return TridiagResult(np.array(alphas), np.array(betas), False, imag)


def lanczos_ritz_vector(
    applyH: Operator, x0, t: TridiagResult, v: np.ndarray, *, census: VectorCensus | None = None
):
    """Rebuild ``u = sum_n v_n x_n`` by replaying the recurrence from ``x0``.

    ``x0`` must be the exact seed of the first pass. Holds four vectors at a
    time. The result is normalized.
    """
    v = np.asarray(v)
    if v.ndim != 1 or len(v) != t.j:
        raise ContractError(f"expected {t.j} Ritz coefficients, got shape {v.shape}")
    census = census or _NoCensus()
    u = census.track(_zeros_like(x0))
    x_prev = census.track(_zeros_like(x0))
    x = census.track(_copy(x0))
    for n in range(len(v)):
        beta = t.betas[n]
        _idiv(x, beta)
        _iaxpy(v[n], x, u)
        if n == len(v) - 1:
            # The next Krylov vector would not contribute to u.
            break
        x_next = census.track(applyH(x))
        _iaxpy(-t.alphas[n], x, x_next)
        _iaxpy(-beta, x_prev, x_next)
        x_prev, x = x, x_next
        census.sample()
    _idiv(u, _norm(u))
    return u


def tridiag_eigen(t: TridiagResult) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of ``T_j``.

    Each eigenvector's largest-magnitude entry is made positive.
    """
    if len(t.betas) != len(t.alphas) + 1:
        raise ContractError(f"inconsistent lengths: {len(t.alphas)} alphas, {len(t.betas)} betas")
    if t.j == 0:
        return np.zeros(0), np.zeros((0, 0))
    w, V = eigh_tridiagonal(np.asarray(t.alphas, float), np.asarray(t.betas[1:-1], float))
    idx = np.abs(V).argmax(axis=0)
    V = V * np.sign(V[idx, np.arange(V.shape[1])])
    return w, V


def hamiltonian_operator(H: Hamiltonian, shift: float = 0.0) -> Operator:
    """``x -> (H - shift) x`` for sharded states, with the apply plan cached per layout."""
    plans: dict = {}

    def op(x: ShardedState) -> ShardedState:
        key = (x.wires, x.num_global)
        if key not in plans:
            plans[key] = plan_schedule(H, x.num_qubits, x.num_global, x.wires)
        y = apply_hamiltonian(x, H, plans[key])
        if shift:
            axpy(-shift, x, y, out=y)
        return y

    return op


def ground_state(
    H: Hamiltonian,
    seed: int,
    K: int = DEFAULT_K,
    delta: float = DEFAULT_DELTA,
    *,
    mesh: Mesh,
    precision: str = "double",
    tiling: tuple[int, int] = DEFAULT_TILING,
    x0: ShardedState | None = None,
    shift: float | None = None,
) -> RitzPair:
    """Lowest eigenpair of ``H`` by two-pass Lanczos.

    The search runs on ``H - s`` with ``s`` the sum of block Frobenius norms,
    which puts the lowest eigenvalue furthest from zero. The returned value is
    unshifted; the residual is the Lanczos estimate ``beta_j |v_{j-1}|``.
    ``K=1`` degenerates to the Rayleigh quotient of the seed.
    """
    if K < 1:
        raise ContractError(f"ground_state needs K >= 1, got {K}")
    start = time.perf_counter()
    if x0 is None:
        x0 = init_random_state(mesh, H.num_qubits, seed, precision=precision, tiling=tiling)
    s = H.norm_bound() if shift is None else shift
    op = hamiltonian_operator(H, s)
    t = lanczos_tridiag(op, x0, K, delta)
    w, V = tridiag_eigen(t)
    v = V[:, 0]
    u = lanczos_ritz_vector(op, x0, t, v)
    residual = float(t.betas[-1] * abs(v[-1]))
    return RitzPair(
        value=float(w[0] + s),
        coeffs=v,
        vector=u,
        residual=residual,
        tridiag=t,
        shift=s,
        wall_time=time.perf_counter() - start,
    )
