"""Virtual core mesh.

A :class:`Mesh` is a fixed pool of ``2**num_global`` lockstep workers, one per
shard of a distributed array. Work is issued to every worker at once through
:meth:`Mesh.map`, and workers only synchronize through the collectives in this
module (``all_to_all``, ``all_reduce_sum``, ``broadcast``), each of which acts
as a full barrier.

The emulated interconnect is a full all-to-all network; topology is not
modelled. Each worker is meant to stand in for one core, so BLAS is pinned to a
single thread while a mesh is open.
"""
from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigurationError, ContractError

__all__ = [
    "Mesh",
    "spawn_mesh",
    "all_to_all",
    "all_reduce_sum",
    "broadcast",
    "worker_threads",
]


def _is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def worker_threads(num_shards: int) -> int:
    """Number of OS threads backing a mesh, capped by ``QSV_THREADS``."""
    cap = os.environ.get("QSV_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(num_shards, limit))


class Mesh:
    """A set of ``num_shards`` lockstep workers.

    Use :func:`spawn_mesh` to construct one. Meshes are context managers;
    closing a mesh shuts down its threads and restores the BLAS thread count.
    """

    def __init__(self, num_shards: int, *, threads: int | None = None, pin_blas: bool = True):
        if not _is_power_of_two(num_shards):
            raise ConfigurationError(f"mesh size must be a power of two, got {num_shards!r}")
        self.num_shards = int(num_shards)
        self.num_global = self.num_shards.bit_length() - 1
        self.threads = threads if threads is not None else worker_threads(self.num_shards)
        self._pool = (
            ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="qsv-worker")
            if self.threads > 1
            else None
        )
        self._blas = threadpool_limits(limits=1, user_api="blas") if pin_blas else None
        self.stats: Counter[str] = Counter()
        self.closed = False

    def __repr__(self) -> str:
        return f"Mesh(num_shards={self.num_shards}, threads={self.threads})"

    def __enter__(self) -> "Mesh":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self.closed:
            return
        if self._pool is not None:
            self._pool.shutdown(wait=True)
        if self._blas is not None:
            self._blas.restore_original_limits()
        self.closed = True

    @property
    def shard_ids(self) -> range:
        return range(self.num_shards)

    def check_lockstep(self, *per_shard: Sequence[Any]) -> None:
        """Raise if any per-worker argument list does not have one entry per shard."""
        for arg in per_shard:
            if len(arg) != self.num_shards:
                raise ContractError(
                    f"collective entered with {len(arg)} participants on a "
                    f"{self.num_shards}-worker mesh"
                )

    def map(self, fn: Callable[..., Any], *per_shard: Sequence[Any]) -> list[Any]:
        """Run ``fn(shard_id, *args)`` on every worker and wait for all of them.

        Each positional argument is a sequence with one entry per shard. Results
        come back in shard-id order.
        """
        if self.closed:
            raise ContractError("mesh is closed")
        self.check_lockstep(*per_shard)
        rows = [tuple(arg[s] for arg in per_shard) for s in self.shard_ids]
        if self._pool is None:
            return [fn(s, *row) for s, row in zip(self.shard_ids, rows)]
        futures = [self._pool.submit(fn, s, *row) for s, row in zip(self.shard_ids, rows)]
        return [f.result() for f in futures]


def spawn_mesh(num_shards: int, *, threads: int | None = None, pin_blas: bool = True) -> Mesh:
    """Create a mesh of ``num_shards`` idle workers (``num_shards`` a power of two)."""
    return Mesh(num_shards, threads=threads, pin_blas=pin_blas)


def _check_routing(routing: np.ndarray, workers: int, slots: int) -> np.ndarray:
    routing = np.asarray(routing)
    if routing.shape != (workers, slots, 2):
        raise ContractError(
            f"routing must have shape ({workers}, {slots}, 2), got {routing.shape}"
        )
    receivers, dest = routing[..., 0], routing[..., 1]
    if receivers.min() < 0 or receivers.max() >= workers or dest.min() < 0 or dest.max() >= slots:
        raise ContractError("routing refers to a worker or slot outside the mesh")
    flat = (receivers * slots + dest).ravel()
    if np.unique(flat).size != flat.size:
        raise ContractError("routing is not a bijection")
    return routing


def all_to_all(
    mesh: Mesh, segments: Sequence[Sequence[np.ndarray]], routing: np.ndarray
) -> list[list[np.ndarray]]:
    """Exchange equal-size segments between workers.

    ``segments[s][k]`` is the ``k``-th buffer sent by worker ``s`` and
    ``routing[s, k] = (r, j)`` names the receiving worker ``r`` and the slot
    ``j`` it lands in. Returns ``out`` with ``out[r][j]`` the received buffer.
    ``routing`` must be a bijection on (worker, slot) pairs.
    """
    mesh.check_lockstep(segments)
    slots = len(segments[0])
    if any(len(row) != slots for row in segments):
        raise ContractError("every worker must send the same number of segments")
    size = segments[0][0].size if slots else 0
    dtype = segments[0][0].dtype if slots else None
    for row in segments:
        for buf in row:
            if buf.size != size or buf.dtype != dtype:
                raise ContractError("all_to_all segments must have equal size and dtype")
    routing = _check_routing(routing, mesh.num_shards, slots)

    out: list[list[Any]] = [[None] * slots for _ in mesh.shard_ids]
    moved = 0
    for s in mesh.shard_ids:
        for k in range(slots):
            r, j = int(routing[s, k, 0]), int(routing[s, k, 1])
            out[r][j] = segments[s][k]
            if r != s:
                moved += segments[s][k].nbytes
    mesh.stats["all_to_all"] += 1
    mesh.stats["bytes_moved"] += moved
    return out


def all_reduce_sum(mesh: Mesh, values: Sequence[Any], *, chunk: int | None = None) -> Any:
    """Sum one contribution per worker in ascending shard-id order.

    ``values`` may hold scalars or equal-shape arrays. Array reductions are
    carried out in chunks of at most ``chunk`` elements to bound message
    sizes; chunking does not change the result because every element is still
    summed in the same fixed order.
    """
    mesh.check_lockstep(values)
    mesh.stats["all_reduce"] += 1
    if not isinstance(values[0], np.ndarray):
        total = values[0]
        for v in values[1:]:
            total = total + v
        return total

    shape = values[0].shape
    flats = [np.ascontiguousarray(v).reshape(-1) for v in values]
    if any(f.size != flats[0].size for f in flats):
        raise ContractError("all_reduce_sum contributions have different shapes")
    step = chunk or flats[0].size or 1
    total = np.empty_like(flats[0])
    for lo in range(0, flats[0].size, step):
        hi = lo + step
        acc = flats[0][lo:hi].copy()
        for f in flats[1:]:
            acc += f[lo:hi]
        total[lo:hi] = acc
    return total.reshape(shape)


def broadcast(mesh: Mesh, value: Any, root: int = 0) -> list[Any]:
    """Replicate ``value`` (held by ``root``) onto every worker."""
    if not 0 <= root < mesh.num_shards:
        raise ConfigurationError(f"broadcast root {root} is not a shard of {mesh}")
    mesh.stats["broadcast"] += 1
    if isinstance(value, np.ndarray):
        copies = [value.copy() for _ in mesh.shard_ids]
        for c in copies:
            c.flags.writeable = False
        return copies
    return [value for _ in mesh.shard_ids]
