"""Distributed wavefunctions.

An ``N``-qubit state is split over the ``2**N_g`` workers of a mesh. The first
``N_g`` *physical* positions are global (their bits select the shard), the
remaining ``N_l = N - N_g`` positions are local (their bits index within a
shard). Bit strings are big-endian: physical position 0 is the most
significant bit.

Which logical qubit sits at which physical position is metadata
(:attr:`ShardedState.wires`), so reorganizations such as
:func:`permute_local` and :func:`swap_global_local` never change the logical
content of a state; :func:`gather_dense` always returns amplitudes in logical
order.

Every shard buffer has shape ``(2**(N_l - t_sub - t_lane), 2**t_sub,
2**t_lane)``, i.e. its last two dimensions are multiples of the tile sizes.
Reorganizations go through strided views, so the only arrays ever
materialized are tile-shaped shard buffers and one-dimensional exchange
segments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ConfigurationError, ContractError
from .fabric import Mesh, all_reduce_sum, all_to_all

__all__ = [
    "DEFAULT_TILING",
    "GATHER_CAP",
    "PRECISIONS",
    "ShardedState",
    "axpy",
    "gather_dense",
    "init_product_state",
    "init_random_state",
    "inner_product",
    "norm",
    "permute_local",
    "scatter_dense",
    "swap_global_local",
    "zeros_state",
]

PRECISIONS = {"single": np.dtype(np.complex64), "double": np.dtype(np.complex128)}
DEFAULT_TILING = (3, 7)
GATHER_CAP = 28


def _dtype(precision: str) -> np.dtype:
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ConfigurationError(f"unknown precision {precision!r}; use 'single' or 'double'") from None


def _precision_name(dtype: np.dtype) -> str:
    return "single" if np.dtype(dtype) == np.complex64 else "double"


def shard_shape(num_local: int, tiling: tuple[int, int]) -> tuple[int, int, int]:
    t_sub, t_lane = tiling
    return (1 << (num_local - t_sub - t_lane), 1 << t_sub, 1 << t_lane)


def check_tiling(arr: np.ndarray, tiling: tuple[int, int]) -> None:
    assert arr.ndim >= 2, f"shard array must have at least two dimensions, got {arr.shape}"
    assert arr.shape[-2] % (1 << tiling[0]) == 0 and arr.shape[-1] % (1 << tiling[1]) == 0, (
        f"shard array {arr.shape} violates the ({1 << tiling[0]}, {1 << tiling[1]}) tiling"
    )


def _check_geometry(num_qubits: int, mesh: Mesh, tiling: tuple[int, int]) -> int:
    t_sub, t_lane = tiling
    if t_sub < 0 or t_lane < 0:
        raise ConfigurationError(f"tiling exponents must be non-negative, got {tiling}")
    num_local = num_qubits - mesh.num_global
    if num_local < t_sub + t_lane or num_local < 1:
        raise ConfigurationError(
            f"{num_qubits} qubits on {mesh.num_shards} shards leaves {num_local} local "
            f"qubits; the ({t_sub}, {t_lane}) tiling needs at least {max(1, t_sub + t_lane)}"
        )
    return num_local


def _alloc(num_local: int, tiling: tuple[int, int], dtype: np.dtype, zero: bool = False) -> np.ndarray:
    shape = shard_shape(num_local, tiling)
    arr = np.zeros(shape, dtype) if zero else np.empty(shape, dtype)
    check_tiling(arr, tiling)
    return arr


def bit_permuted_view(flat: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Strided view of a ``2**n`` vector with its bit axes reordered.

    Output bit ``i`` (big-endian) is input bit ``axes[i]``. Runs of axes that
    stay adjacent are merged, so the view has as few dimensions as possible.
    """
    runs: list[list[int]] = []
    for a in axes:
        if runs and runs[-1][-1] + 1 == a:
            runs[-1].append(a)
        else:
            runs.append([a])
    by_input = sorted(range(len(runs)), key=lambda r: runs[r][0])
    shape = [1 << len(runs[r]) for r in by_input]
    where = {r: i for i, r in enumerate(by_input)}
    return flat.reshape(shape).transpose([where[r] for r in range(len(runs))])


@dataclass(eq=False)
class ShardedState:
    """A ``2**num_qubits`` complex vector distributed over a mesh.

    ``wires[p]`` is the logical qubit currently stored at physical position
    ``p``; :attr:`qubit_order` is its inverse.
    """

    mesh: Mesh
    num_qubits: int
    shards: list[np.ndarray]
    wires: tuple[int, ...]
    tiling: tuple[int, int] = DEFAULT_TILING

    def __post_init__(self):
        self.tiling = tuple(self.tiling)
        if sorted(self.wires) != list(range(self.num_qubits)):
            raise ContractError(f"wires {self.wires} are not a permutation of 0..{self.num_qubits - 1}")
        self.mesh.check_lockstep(self.shards)
        for s in self.shards:
            check_tiling(s, self.tiling)

    @property
    def num_global(self) -> int:
        return self.mesh.num_global

    @property
    def num_local(self) -> int:
        return self.num_qubits - self.mesh.num_global

    @property
    def dtype(self) -> np.dtype:
        return self.shards[0].dtype

    @property
    def precision(self) -> str:
        return _precision_name(self.dtype)

    @property
    def qubit_order(self) -> tuple[int, ...]:
        """Physical position of each logical qubit."""
        order = [0] * self.num_qubits
        for p, q in enumerate(self.wires):
            order[q] = p
        return tuple(order)

    @property
    def global_qubits(self) -> tuple[int, ...]:
        return self.wires[: self.num_global]

    @property
    def local_qubits(self) -> tuple[int, ...]:
        return self.wires[self.num_global :]

    def flat(self, shard: int) -> np.ndarray:
        return self.shards[shard].reshape(-1)

    def _like(self, shards: list[np.ndarray], wires: Iterable[int] | None = None) -> "ShardedState":
        return ShardedState(
            self.mesh, self.num_qubits, shards, tuple(self.wires if wires is None else wires), self.tiling
        )

    def copy(self) -> "ShardedState":
        return self._like(self.mesh.map(lambda s, a: a.copy(), self.shards))

    def zeros_like(self) -> "ShardedState":
        return self._like(
            self.mesh.map(lambda s: _alloc(self.num_local, self.tiling, self.dtype, zero=True))
        )

    def astype(self, precision: str) -> "ShardedState":
        dtype = _dtype(precision)
        return self._like(self.mesh.map(lambda s, a: a.astype(dtype), self.shards))

    def __mul__(self, c: complex) -> "ShardedState":
        return self._like(self.mesh.map(lambda s, a: a * c, self.shards))

    __rmul__ = __mul__

    def __truediv__(self, c: complex) -> "ShardedState":
        return self._like(self.mesh.map(lambda s, a: a / c, self.shards))

    def same_layout(self, other: "ShardedState") -> bool:
        return (
            self.mesh is other.mesh
            and self.num_qubits == other.num_qubits
            and self.wires == other.wires
            and self.dtype == other.dtype
            and self.tiling == other.tiling
        )


def _require_same_layout(x: ShardedState, y: ShardedState) -> None:
    if not x.same_layout(y):
        raise ContractError("states do not share mesh, qubit count, qubit order and precision")


def zeros_state(
    mesh: Mesh, num_qubits: int, precision: str = "single", tiling: tuple[int, int] = DEFAULT_TILING
) -> ShardedState:
    num_local = _check_geometry(num_qubits, mesh, tiling)
    dtype = _dtype(precision)
    shards = mesh.map(lambda s: _alloc(num_local, tiling, dtype, zero=True))
    return ShardedState(mesh, num_qubits, shards, tuple(range(num_qubits)), tiling)


def init_product_state(
    mesh: Mesh,
    num_qubits: int,
    bits: str | Sequence[int],
    precision: str = "single",
    tiling: tuple[int, int] = DEFAULT_TILING,
) -> ShardedState:
    """The computational basis state ``|b_0 b_1 ... b_{N-1}>``."""
    bits = [int(b) for b in bits]
    if len(bits) != num_qubits or any(b not in (0, 1) for b in bits):
        raise ContractError(f"expected {num_qubits} bits, got {bits!r}")
    state = zeros_state(mesh, num_qubits, precision, tiling)
    index = int("".join(map(str, bits)), 2) if bits else 0
    shard, offset = divmod(index, 1 << state.num_local)
    state.flat(shard)[offset] = 1
    return state


def _gaussian_block(seed: int, start: int, count: int) -> np.ndarray:
    # Counter-based: amplitude i consumes raw words 2i and 2i+1 of the Philox
    # stream, and one Philox block holds four words.
    gen = np.random.Philox(key=seed)
    gen.advance(start // 2)
    raw = gen.random_raw(2 * (count + start % 2))[2 * (start % 2) :]
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.sqrt(-2.0 * np.log(u1)) * np.exp(2j * np.pi * u2)


def init_random_state(
    mesh: Mesh,
    num_qubits: int,
    seed: int,
    precision: str = "single",
    tiling: tuple[int, int] = DEFAULT_TILING,
) -> ShardedState:
    """Normalized vector of i.i.d. complex Gaussian amplitudes.

    Amplitude ``i`` depends only on ``(seed, i)``, and the normalization sums
    fixed-size chunks with :func:`math.fsum`, so the gathered state is
    bit-identical for every mesh size.
    """
    num_local = _check_geometry(num_qubits, mesh, tiling)
    dtype = _dtype(precision)
    size = 1 << num_local
    chunk = 1 << min(num_local, sum(tiling))

    def draw(s):
        z = _gaussian_block(seed, s * size, size)
        sq = (z.real**2 + z.imag**2).reshape(-1, chunk).sum(axis=1)
        return z, sq

    parts = mesh.map(draw)
    total = math.fsum(float(v) for _, sq in parts for v in sq)
    scale = 1.0 / math.sqrt(total)

    def finish(s, part):
        out = _alloc(num_local, tiling, dtype)
        out.reshape(-1)[:] = part[0] * scale
        return out

    shards = mesh.map(finish, parts)
    return ShardedState(mesh, num_qubits, shards, tuple(range(num_qubits)), tiling)


def scatter_dense(
    mesh: Mesh,
    vector: np.ndarray,
    precision: str | None = None,
    tiling: tuple[int, int] = DEFAULT_TILING,
) -> ShardedState:
    """Distribute a dense logical-order vector over ``mesh``."""
    vector = np.asarray(vector)
    num_qubits = int(vector.size).bit_length() - 1
    if vector.ndim != 1 or vector.size != 1 << num_qubits:
        raise ContractError(f"vector length {vector.size} is not a power of two")
    dtype = _dtype(precision) if precision else np.result_type(vector.dtype, np.complex64)
    num_local = _check_geometry(num_qubits, mesh, tiling)
    size = 1 << num_local

    def fill(s):
        out = _alloc(num_local, tiling, dtype)
        out.reshape(-1)[:] = vector[s * size : (s + 1) * size]
        return out

    return ShardedState(mesh, num_qubits, mesh.map(fill), tuple(range(num_qubits)), tiling)


def gather_dense(state: ShardedState, cap: int = GATHER_CAP) -> np.ndarray:
    """All amplitudes in logical big-endian order, whatever the current layout."""
    if state.num_qubits > cap:
        raise CapacityError(f"refusing to gather {state.num_qubits} qubits (cap is {cap})")
    physical = np.concatenate([state.flat(s) for s in state.mesh.shard_ids])
    view = bit_permuted_view(physical, state.qubit_order)
    return np.ascontiguousarray(view).reshape(-1)


def axpy(alpha: complex, x: ShardedState, y: ShardedState, out: ShardedState | None = None) -> ShardedState:
    """``y + alpha * x``; pass ``out=y`` to update ``y`` in place."""
    _require_same_layout(x, y)
    if out is None:
        return y._like(x.mesh.map(lambda s, a, b: b + alpha * a, x.shards, y.shards))
    _require_same_layout(x, out)

    def update(s, a, b, o):
        if o is b:
            o += alpha * a
        else:
            np.add(b, alpha * a, out=o)

    x.mesh.map(update, x.shards, y.shards, out.shards)
    return out


def inner_product(x: ShardedState, y: ShardedState) -> complex:
    """``sum(conj(x_i) * y_i)``, reduced across shards in a fixed order."""
    _require_same_layout(x, y)
    partials = x.mesh.map(lambda s, a, b: complex(np.vdot(a, b)), x.shards, y.shards)
    return complex(all_reduce_sum(x.mesh, partials))


def norm(x: ShardedState) -> float:
    return math.sqrt(max(inner_product(x, x).real, 0.0))


def _relayout_local(state: ShardedState, local_wires: Sequence[int], inplace: bool) -> ShardedState:
    old = state.local_qubits
    if sorted(local_wires) != sorted(old):
        raise ContractError(f"{list(local_wires)} is not a reordering of the local qubits {list(old)}")
    wires = state.global_qubits + tuple(local_wires)
    if tuple(local_wires) == old:
        return state if inplace else state.copy()
    index = {q: i for i, q in enumerate(old)}
    axes = [index[q] for q in local_wires]

    def move(s, shard):
        out = _alloc(state.num_local, state.tiling, state.dtype)
        view = bit_permuted_view(shard.reshape(-1), axes)
        np.copyto(out.reshape(view.shape), view)
        return out

    shards = state.mesh.map(move, state.shards)
    if not inplace:
        return state._like(shards, wires)
    state.shards, state.wires = shards, wires
    return state


def permute_local(state: ShardedState, targets: Sequence[int]) -> ShardedState:
    """Move the local logical qubits ``targets`` to the last physical positions.

    ``targets`` end up in the given order; other local qubits keep their
    relative order. No communication is involved. Returns a new state.
    """
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise ContractError(f"repeated qubit in {targets}")
    if len(targets) > sum(state.tiling):
        raise ContractError(
            f"can move at most {sum(state.tiling)} qubits at once under tiling {state.tiling}"
        )
    if any(q not in state.local_qubits for q in targets):
        raise ContractError(f"targets {targets} include non-local qubits; swap them in first")
    rest = [q for q in state.local_qubits if q not in targets]
    return _relayout_local(state, rest + targets, inplace=False)


def _swap(state: ShardedState, pairs: Sequence[tuple[int, int]], inplace: bool) -> ShardedState:
    pairs = [(int(g), int(l)) for g, l in pairs]
    if not pairs:
        return state if inplace else state.copy()
    ng, nl = state.num_global, state.num_local
    flat_q = [q for pair in pairs for q in pair]
    if len(set(flat_q)) != len(flat_q):
        raise ContractError(f"overlapping swap pairs {pairs}")
    order = state.qubit_order
    gpos = [order[g] for g, _ in pairs]
    lpos = [order[l] - ng for _, l in pairs]
    if len(pairs) > ng or any(p >= ng for p in gpos) or any(p < 0 for p in lpos):
        raise ContractError(f"pairs {pairs} must each be (global qubit, local qubit)")
    k = len(pairs)
    rest = [a for a in range(nl) if a not in lpos]
    send_axes = lpos + rest
    recv_axes = [0] * nl
    for i, a in enumerate(send_axes):
        recv_axes[a] = i

    def shard_bits(s):
        return [(s >> (ng - 1 - p)) & 1 for p in gpos]

    def with_bits(s, bits):
        for p, b in zip(gpos, bits):
            shift = ng - 1 - p
            s = (s & ~(1 << shift)) | (b << shift)
        return s

    def split(s, shard):
        seg = np.ascontiguousarray(bit_permuted_view(shard.reshape(-1), send_axes))
        return list(seg.reshape(1 << k, -1))

    segments = state.mesh.map(split, state.shards)
    routing = np.empty((state.mesh.num_shards, 1 << k, 2), dtype=np.int64)
    for s in state.mesh.shard_ids:
        slot = int("".join(map(str, shard_bits(s))), 2)
        for b in range(1 << k):
            bits = [(b >> (k - 1 - i)) & 1 for i in range(k)]
            routing[s, b] = (with_bits(s, bits), slot)
    received = all_to_all(state.mesh, segments, routing)

    def join(s, parts):
        out = _alloc(nl, state.tiling, state.dtype)
        view = bit_permuted_view(np.concatenate(parts), recv_axes)
        np.copyto(out.reshape(view.shape), view)
        return out

    shards = state.mesh.map(join, received)
    wires = list(state.wires)
    for gp, lp in zip(gpos, lpos):
        wires[gp], wires[ng + lp] = wires[ng + lp], wires[gp]
    if not inplace:
        return state._like(shards, wires)
    state.shards, state.wires = shards, tuple(wires)
    return state


def swap_global_local(state: ShardedState, pairs: Sequence[tuple[int, int]]) -> ShardedState:
    """Exchange the roles of global and local qubits with one ``all_to_all``.

    Each pair is ``(global_qubit, local_qubit)`` given by logical label; after
    the call the two qubits have traded physical positions. Returns a new
    state; the logical content is unchanged.
    """
    return _swap(state, pairs, inplace=False)
