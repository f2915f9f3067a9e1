"""Distributed ``|psi> -> H|psi>``.

A blocked term acting on the last ``B`` physical (local) positions is a
right-multiplication of every shard, viewed as a ``(2**(N_l-B), 2**B)``
matrix. Terms elsewhere need the state re-laid-out first: a local
permutation if all their qubits are local, a global/local swap (one
``all_to_all``) if any of them is global.

:func:`plan_schedule` orders the terms and inserts the layout changes;
:func:`apply_hamiltonian` executes a plan, keeping the input state and an
accumulator co-laid-out and restoring the original layout only once, at the
end of the plan.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, ContractError
from .fabric import broadcast
from .hamiltonian import BlockedTerm, Hamiltonian
from .state import ShardedState, _relayout_local, _swap, permute_local, swap_global_local

__all__ = [
    "Accumulate",
    "ApplyPlan",
    "CostReport",
    "Multiply",
    "PermuteLocal",
    "Swap",
    "apply_hamiltonian",
    "apply_term",
    "count_cost",
    "multiply_last_block",
    "plan_schedule",
]

ROW_TILE = 512


@dataclass(frozen=True)
class Swap:
    pairs: tuple[tuple[int, int], ...]
    states: int = 1
    amplitudes_moved: int = 0


@dataclass(frozen=True)
class PermuteLocal:
    targets: tuple[int, ...]
    local_order: tuple[int, ...]
    states: int = 1


@dataclass(frozen=True)
class Multiply:
    term: int
    wires: tuple[int, ...]
    member_sizes: tuple[int, ...] = ()


@dataclass(frozen=True)
class Accumulate:
    term: int


Step = Union[Swap, PermuteLocal, Multiply, Accumulate]


@dataclass
class ApplyPlan:
    steps: list[Step]
    initial_wires: tuple[int, ...]
    num_qubits: int
    num_global: int
    block_size: int

    @property
    def swap_steps(self) -> list[Swap]:
        return [s for s in self.steps if isinstance(s, Swap)]

    @property
    def permute_steps(self) -> list[PermuteLocal]:
        return [s for s in self.steps if isinstance(s, PermuteLocal)]

    @property
    def term_order(self) -> list[int]:
        return [s.term for s in self.steps if isinstance(s, Multiply)]


@dataclass
class CostReport:
    padded_multiplies: int
    unpadded_multiplies: int
    swaps: int
    bytes_moved: int
    permutations: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def padding_ratio(self) -> float:
        return self.padded_multiplies / self.unpadded_multiplies if self.unpadded_multiplies else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["padding_ratio"] = self.padding_ratio
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def reorder_matrix(matrix: np.ndarray, support: Sequence[int], wires: Sequence[int]) -> np.ndarray:
    """Rewrite a term matrix from sorted-support bit order into ``wires`` bit order."""
    support = list(support)
    if list(wires) == support:
        return matrix
    b = len(support)
    axes = [support.index(q) for q in wires]
    return matrix.reshape([2] * (2 * b)).transpose(axes + [a + b for a in axes]).reshape(matrix.shape)


def _block_size(matrix: np.ndarray) -> int:
    b = matrix.shape[0].bit_length() - 1
    if matrix.shape != (1 << b, 1 << b):
        raise ContractError(f"block matrix must be 2**B square, got {matrix.shape}")
    return b


def _row_tile(state: ShardedState, row_tile: int | None) -> int:
    tile = row_tile or ROW_TILE
    sub = 1 << state.tiling[0]
    if tile % sub:
        raise ConfigurationError(f"row tile {tile} is not a multiple of {sub}")
    return tile


def _matmul_tiles(src: np.ndarray, mT: np.ndarray, dst: np.ndarray, accumulate: bool, tile: int) -> None:
    rows = src.shape[0]
    for lo in range(0, rows, tile):
        hi = min(lo + tile, rows)
        if accumulate:
            dst[lo:hi] += src[lo:hi] @ mT
        else:
            np.matmul(src[lo:hi], mT, out=dst[lo:hi])


def multiply_last_block(
    state: ShardedState, matrix: np.ndarray, *, row_tile: int | None = None
) -> ShardedState:
    """Apply a ``2**B x 2**B`` matrix to the last ``B`` physical qubits.

    The matrix basis follows the physical order of those qubits. ``B`` must
    equal the lane exponent of the state's tiling.
    """
    b = _block_size(matrix)
    if b != state.tiling[1]:
        raise ConfigurationError(
            f"block size {b} does not match the lane width 2**{state.tiling[1]} of this state"
        )
    tile = _row_tile(state, row_tile)
    mT = np.ascontiguousarray(matrix.T, dtype=state.dtype)
    copies = broadcast(state.mesh, mT)
    out = state.zeros_like()

    def kernel(s, src, dst, m):
        _matmul_tiles(src.reshape(-1, 1 << b), m, dst.reshape(-1, 1 << b), False, tile)

    state.mesh.map(kernel, state.shards, out.shards, copies)
    return out


def _restore(state: ShardedState, wires: Sequence[int], inplace: bool) -> ShardedState:
    for step in _layout_steps(state.wires, tuple(wires), state.num_global):
        if isinstance(step, Swap):
            state = _swap(state, step.pairs, inplace)
        else:
            state = _relayout_local(state, step.local_order, inplace)
        inplace = True
    return state


def apply_term(state: ShardedState, term: BlockedTerm, *, row_tile: int | None = None) -> ShardedState:
    """``term |psi>`` as a new state with the same layout as ``state``."""
    b = term.num_qubits
    if term.support[-1] >= state.num_qubits:
        raise ContractError(f"term on {term.support} does not fit {state.num_qubits} qubits")
    work = state
    hit = [q for q in state.global_qubits if q in term.support]
    if hit:
        spare = [q for q in state.local_qubits if q not in term.support][: len(hit)]
        work = swap_global_local(work, list(zip(hit, spare)))
    if set(work.local_qubits[-b:]) != set(term.support):
        work = permute_local(work, term.support)
    wires = work.local_qubits[-b:]
    out = multiply_last_block(work, reorder_matrix(term.matrix, term.support, wires), row_tile=row_tile)
    return _restore(out, state.wires, inplace=True)


def _layout_steps(current: Sequence[int], target: Sequence[int], num_global: int) -> list[Step]:
    cur, tgt = list(current), list(target)
    ng = num_global
    steps: list[Step] = []
    while cur[:ng] != tgt[:ng]:
        pairs = [(cur[p], tgt[p]) for p in range(ng) if cur[p] != tgt[p] and cur.index(tgt[p]) >= ng]
        if not pairs:
            p = next(p for p in range(ng) if cur[p] != tgt[p])
            pairs = [(cur[p], cur[ng])]
        _swap_wires(cur, pairs)
        steps.append(Swap(tuple(pairs), amplitudes_moved=_moved(len(cur), len(pairs))))
    if cur[ng:] != tgt[ng:]:
        steps.append(PermuteLocal(tuple(tgt[ng:]), tuple(tgt[ng:])))
    return steps


def _swap_wires(wires: list[int], pairs: Sequence[tuple[int, int]]) -> None:
    for g, l in pairs:
        i, j = wires.index(g), wires.index(l)
        wires[i], wires[j] = wires[j], wires[i]


def _moved(num_qubits: int, k: int) -> int:
    # Amplitudes whose owner changes when k global qubits are swapped out.
    return (1 << num_qubits) - (1 << (num_qubits - k))


def plan_schedule(
    H: Hamiltonian, num_qubits: int, num_global: int, layout: Sequence[int] | None = None
) -> ApplyPlan:
    """Order the terms of ``H`` and insert the layout changes they need.

    Greedy: apply every term that is already fully local; when none is,
    take the next term in order and swap its global qubits for local qubits
    that the remaining terms use least. Whole layout restoration is
    deferred to the end of the plan.
    """
    B = H.block_size
    initial = tuple(layout) if layout is not None else tuple(range(num_qubits))
    if num_qubits - num_global < B:
        raise ConfigurationError(f"{num_qubits - num_global} local qubits cannot hold a {B}-qubit block")
    wires = list(initial)
    remaining = list(range(len(H.terms)))
    steps: list[Step] = []
    states = 1
    sizes = [tuple(H.provenance[m].num_qubits for m in t.members) if H.provenance else (B,) for t in H.terms]

    while remaining:
        globals_ = set(wires[:num_global])
        ready = [t for t in remaining if not globals_ & set(H.terms[t].support)]
        if ready:
            tail = set(wires[-B:])
            pick = next((t for t in ready if set(H.terms[t].support) == tail), ready[0])
        else:
            pick = remaining[0]
            support = set(H.terms[pick].support)
            clash = [q for q in wires[:num_global] if q in support]
            others = [t for t in remaining if t != pick]

            def score(q):
                return (sum(q in H.terms[t].support for t in others), wires.index(q))

            spare = sorted((q for q in wires[num_global:] if q not in support), key=score)
            pairs = tuple(zip(clash, spare[: len(clash)]))
            _swap_wires(wires, pairs)
            steps.append(Swap(pairs, states, _moved(num_qubits, len(pairs))))
        term = H.terms[pick]
        if set(wires[-B:]) != set(term.support):
            local = [q for q in wires[num_global:] if q not in term.support] + list(term.support)
            wires[num_global:] = local
            steps.append(PermuteLocal(term.support, tuple(local), states))
        steps.append(Multiply(pick, tuple(wires[-B:]), sizes[pick]))
        steps.append(Accumulate(pick))
        states = 2
        remaining.remove(pick)

    for step in _layout_steps(wires, initial, num_global):
        if isinstance(step, Swap):
            step = Swap(step.pairs, states, step.amplitudes_moved)
        else:
            step = PermuteLocal(step.targets, step.local_order, states)
        steps.append(step)
    return ApplyPlan(steps, initial, num_qubits, num_global, B)


def count_cost(plan: ApplyPlan, num_qubits: int, *, itemsize: int = 8, padding: str = "block") -> CostReport:
    """Multiply-accumulate and traffic counts for executing ``plan``.

    ``padding="block"`` counts one ``2**(N-B) x 2**B x 2**B`` product per
    blocked term. ``padding="naive"`` counts what padding every raw ``k``-qubit
    term up to ``2**B`` on its own would cost: ``2**(N-k) x 2**B x 2**B``.
    The unpadded count is ``2**(N-k) x 2**k x 2**k`` per raw term.
    """
    B, N = plan.block_size, num_qubits
    padded = unpadded = moved = 0
    for step in plan.steps:
        if isinstance(step, Multiply):
            sizes = step.member_sizes or (B,)
            unpadded += sum(1 << (N + k) for k in sizes)
            if padding == "block":
                padded += 1 << (N + B)
            elif padding == "naive":
                padded += sum(1 << (N - k + 2 * B) for k in sizes)
            else:
                raise ValueError(f"unknown padding mode {padding!r}")
        elif isinstance(step, Swap):
            moved += step.amplitudes_moved * step.states * itemsize
    return CostReport(
        padded_multiplies=padded,
        unpadded_multiplies=unpadded,
        swaps=len(plan.swap_steps),
        bytes_moved=moved,
        permutations=len(plan.permute_steps),
    )


def apply_hamiltonian(
    state: ShardedState, H: Hamiltonian, plan: ApplyPlan | None = None, *, row_tile: int | None = None
) -> ShardedState:
    """Return ``H |psi>`` in the layout of ``state``.

    ``state`` is re-laid-out in place while the plan runs (its logical content
    never changes) and is back in its original layout on return. Each
    Multiply/Accumulate pair runs as one fused pass, so besides ``state`` and
    the accumulator only one row tile of ``h_i |psi>`` exists at a time.
    """
    if plan is None:
        plan = plan_schedule(H, state.num_qubits, state.num_global, state.wires)
    if plan.initial_wires != state.wires or plan.num_global != state.num_global:
        raise ContractError("plan was built for a different layout")
    if H.block_size != state.tiling[1]:
        raise ConfigurationError(f"block size {H.block_size} does not match lane exponent {state.tiling[1]}")
    B = H.block_size
    tile = _row_tile(state, row_tile)
    initial = state.wires
    acc: ShardedState | None = None
    pending: tuple[int, list[np.ndarray]] | None = None

    try:
        for step in plan.steps:
            if isinstance(step, Swap):
                _swap(state, step.pairs, inplace=True)
                if acc is not None:
                    _swap(acc, step.pairs, inplace=True)
            elif isinstance(step, PermuteLocal):
                _relayout_local(state, step.local_order, inplace=True)
                if acc is not None:
                    _relayout_local(acc, step.local_order, inplace=True)
            elif isinstance(step, Multiply):
                if state.local_qubits[-B:] != step.wires:
                    raise ContractError(f"layout drifted from the plan before term {step.term}")
                term = H.terms[step.term]
                mT = np.ascontiguousarray(reorder_matrix(term.matrix, term.support, step.wires).T, dtype=state.dtype)
                pending = (step.term, broadcast(state.mesh, mT))
            elif isinstance(step, Accumulate):
                if pending is None or pending[0] != step.term:
                    raise ContractError("Accumulate must directly follow the Multiply of the same term")
                if acc is None:
                    acc = state.zeros_like()

                def kernel(s, src, dst, m):
                    _matmul_tiles(src.reshape(-1, 1 << B), m, dst.reshape(-1, 1 << B), True, tile)

                state.mesh.map(kernel, state.shards, acc.shards, pending[1])
                pending = None
    finally:
        if state.wires != initial:
            _restore(state, initial, inplace=True)

    if acc is None:
        acc = state.zeros_like()
    elif acc.wires != initial:
        raise ContractError("plan did not restore the initial layout")
    return acc
