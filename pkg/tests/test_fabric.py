import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsv.errors import ConfigurationError, ContractError
from qsv.fabric import all_reduce_sum, all_to_all, broadcast, spawn_mesh, worker_threads


@pytest.mark.parametrize("n", [0, 3, 6, -4])
def test_mesh_size_must_be_power_of_two(n):
    with pytest.raises(ConfigurationError):
        spawn_mesh(n)


def test_map_runs_every_worker_in_shard_order(mesh_factory):
    mesh = mesh_factory(8, threads=4)
    assert mesh.num_global == 3
    assert mesh.map(lambda s, x: s * 10 + x, list(range(8))) == [s * 11 for s in range(8)]


def test_map_rejects_missing_participant(mesh_factory):
    mesh = mesh_factory(4)
    with pytest.raises(ContractError):
        mesh.map(lambda s, x: x, [1, 2, 3])


def test_closed_mesh_refuses_work():
    mesh = spawn_mesh(2)
    mesh.close()
    with pytest.raises(ContractError):
        mesh.map(lambda s: s)


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("QSV_THREADS", "2")
    assert worker_threads(8) == 2
    assert worker_threads(1) == 1
    with spawn_mesh(8) as mesh:
        assert mesh.threads == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 3), st.data())
def test_all_to_all_delivers_along_any_bijection(log_workers, log_slots, data):
    workers, slots = 1 << log_workers, 1 << log_slots
    perm = data.draw(st.permutations(range(workers * slots)))
    routing = np.array([[divmod(perm[s * slots + k], slots) for k in range(slots)] for s in range(workers)])
    segments = [[np.full(3, s * slots + k, dtype=np.int64) for k in range(slots)] for s in range(workers)]
    with spawn_mesh(workers, threads=1) as mesh:
        out = all_to_all(mesh, segments, routing)
        assert mesh.stats["all_to_all"] == 1
    for s in range(workers):
        for k in range(slots):
            r, j = routing[s, k]
            assert out[r][j][0] == s * slots + k


def test_all_to_all_rejects_non_bijection(mesh_factory):
    mesh = mesh_factory(2)
    segs = [[np.zeros(2)], [np.zeros(2)]]
    with pytest.raises(ContractError):
        all_to_all(mesh, segs, np.array([[[0, 0]], [[0, 0]]]))


def test_all_to_all_rejects_ragged_segments(mesh_factory):
    mesh = mesh_factory(2)
    segs = [[np.zeros(2)], [np.zeros(3)]]
    with pytest.raises(ContractError):
        all_to_all(mesh, segs, np.array([[[1, 0]], [[0, 0]]]))


def test_all_to_all_counts_only_cross_worker_bytes(mesh_factory):
    mesh = mesh_factory(2)
    segs = [[np.zeros(4, np.complex64), np.zeros(4, np.complex64)] for _ in range(2)]
    routing = np.array([[[0, 0], [1, 0]], [[0, 1], [1, 1]]])
    all_to_all(mesh, segs, routing)
    assert mesh.stats["bytes_moved"] == 2 * 4 * 8


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=4, max_size=4), st.integers(1, 7))
def test_all_reduce_is_ascending_and_chunk_invariant(vals, chunk):
    rng = np.random.default_rng(0)
    arrays = [v + rng.normal(size=11) for v in vals]
    with spawn_mesh(4, threads=1) as mesh:
        whole = all_reduce_sum(mesh, arrays)
        chunked = all_reduce_sum(mesh, arrays, chunk=chunk)
        scalar = all_reduce_sum(mesh, vals)
    expected = ((arrays[0] + arrays[1]) + arrays[2]) + arrays[3]
    assert np.array_equal(whole, expected)
    assert np.array_equal(chunked, expected)
    assert scalar == ((vals[0] + vals[1]) + vals[2]) + vals[3]


def test_broadcast_gives_each_worker_a_read_only_copy(mesh_factory):
    mesh = mesh_factory(4)
    value = np.arange(6.0)
    copies = broadcast(mesh, value, root=2)
    assert len(copies) == 4
    assert all(np.array_equal(c, value) for c in copies)
    assert all(c is not value and not c.flags.writeable for c in copies)
    assert value.flags.writeable
    with pytest.raises(ConfigurationError):
        broadcast(mesh, value, root=4)
