import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsv.errors import CapacityError, ConfigurationError, ContractError
from qsv.fabric import spawn_mesh
from qsv.state import (
    axpy,
    bit_permuted_view,
    check_tiling,
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


def test_product_state_gathers_to_one_hot(mesh_factory):
    mesh = mesh_factory(4)
    bits = "1011000001"
    psi = init_product_state(mesh, 10, bits, precision="double", tiling=(1, 7))
    v = gather_dense(psi)
    assert v[int(bits, 2)] == 1
    assert np.count_nonzero(v) == 1


def test_product_state_rejects_bad_bits(mesh_factory):
    with pytest.raises(ContractError):
        init_product_state(mesh_factory(1), 3, [0, 2, 1], tiling=(0, 3))


def test_random_state_is_normalized_and_deterministic(mesh_factory):
    mesh = mesh_factory(2)
    a = init_random_state(mesh, 12, seed=5, precision="double")
    b = init_random_state(mesh, 12, seed=5, precision="double")
    c = init_random_state(mesh, 12, seed=6, precision="double")
    assert norm(a) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(gather_dense(a), gather_dense(b))
    assert not np.allclose(gather_dense(a), gather_dense(c))


@pytest.mark.parametrize("precision", ["single", "double"])
def test_random_state_identical_for_every_mesh_size(precision):
    ref = None
    for shards in (1, 2, 4, 8):
        with spawn_mesh(shards) as mesh:
            v = gather_dense(init_random_state(mesh, 13, seed=11, precision=precision))
        if ref is None:
            ref = v
        assert np.array_equal(v, ref)


def test_scatter_gather_round_trip_is_bit_exact(mesh_factory):
    rng = np.random.default_rng(1)
    v = rng.normal(size=1 << 11) + 1j * rng.normal(size=1 << 11)
    psi = scatter_dense(mesh_factory(4), v, precision="double", tiling=(2, 7))
    assert np.array_equal(gather_dense(psi), v)
    assert psi.precision == "double"


def test_precision_sets_dtype(mesh_factory):
    mesh = mesh_factory(1)
    assert zeros_state(mesh, 10).dtype == np.complex64
    assert zeros_state(mesh, 10, "double").dtype == np.complex128
    with pytest.raises(ConfigurationError):
        zeros_state(mesh, 10, "half")


def test_shards_keep_tiled_shape(mesh_factory):
    psi = init_random_state(mesh_factory(2), 14, seed=0)
    for shard in psi.shards:
        assert shard.shape == (2**3, 2**3, 2**7)
    psi = permute_local(psi, [2, 3, 4, 5, 6, 7, 8, 9])
    for shard in psi.shards:
        check_tiling(shard, psi.tiling)


def test_too_few_local_qubits_for_tiling(mesh_factory):
    with pytest.raises(ConfigurationError):
        zeros_state(mesh_factory(4), 10)
    zeros_state(mesh_factory(4), 10, tiling=(1, 7))


def test_gather_cap(mesh_factory):
    psi = zeros_state(mesh_factory(1), 10)
    with pytest.raises(CapacityError):
        gather_dense(psi, cap=9)


def test_bit_permuted_view_matches_transpose():
    flat = np.arange(64)
    axes = [3, 0, 5, 1, 2, 4]
    expect = flat.reshape((2,) * 6).transpose(axes).reshape(-1)
    assert np.array_equal(np.ascontiguousarray(bit_permuted_view(flat, axes)).reshape(-1), expect)


def test_axpy_and_inner_product_match_numpy(mesh_factory):
    mesh = mesh_factory(4)
    x = init_random_state(mesh, 11, 1, "double", tiling=(1, 7))
    y = init_random_state(mesh, 11, 2, "double", tiling=(1, 7))
    xv, yv = gather_dense(x), gather_dense(y)
    assert inner_product(x, y) == pytest.approx(np.vdot(xv, yv), abs=1e-14)
    z = axpy(0.5 - 2j, x, y)
    assert np.allclose(gather_dense(z), yv + (0.5 - 2j) * xv, atol=1e-15)
    axpy(1.0, x, y, out=y)
    assert np.allclose(gather_dense(y), yv + xv, atol=1e-15)


def test_layout_mismatch_is_rejected(mesh_factory):
    mesh = mesh_factory(2)
    x = init_random_state(mesh, 10, 1, "double", tiling=(2, 7))
    y = swap_global_local(x, [(0, 5)])
    with pytest.raises(ContractError):
        inner_product(x, y)


def test_swap_preserves_logical_content_and_moves_wires(mesh_factory):
    mesh = mesh_factory(4)
    psi = init_random_state(mesh, 12, 3, "double")
    before = gather_dense(psi)
    out = swap_global_local(psi, [(0, 7), (1, 11)])
    assert out.global_qubits == (7, 11)
    assert out.qubit_order[0] == 7 and out.qubit_order[1] == 11
    assert mesh.stats["all_to_all"] == 1
    assert np.array_equal(gather_dense(out), before)
    assert psi.wires == tuple(range(12))


def test_swap_rejects_bad_pairs(mesh_factory):
    psi = init_random_state(mesh_factory(2), 10, 3, tiling=(2, 7))
    with pytest.raises(ContractError):
        swap_global_local(psi, [(3, 4)])
    with pytest.raises(ContractError):
        swap_global_local(psi, [(0, 0)])


def test_permute_local_puts_targets_last(mesh_factory):
    psi = init_random_state(mesh_factory(2), 12, 4, "double")
    out = permute_local(psi, [9, 2, 5])
    assert out.local_qubits[-3:] == (9, 2, 5)
    assert out.local_qubits[:-3] == tuple(q for q in range(1, 12) if q not in (9, 2, 5))
    assert np.array_equal(gather_dense(out), gather_dense(psi))


def test_permute_local_refuses_globals_and_too_many_targets(mesh_factory):
    psi = init_random_state(mesh_factory(2), 12, 4)
    with pytest.raises(ContractError):
        permute_local(psi, [0, 3])
    with pytest.raises(ContractError):
        permute_local(psi, list(range(1, 12)))


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_swap_and_permute_are_involutions(data):
    n = 12
    with spawn_mesh(4, threads=1) as mesh:
        psi = init_random_state(mesh, n, 9, "double", tiling=(1, 7))
        locals_ = data.draw(st.permutations(list(psi.local_qubits)))
        k = data.draw(st.integers(1, 2))
        globals_ = data.draw(st.permutations(list(psi.global_qubits)))[:k]
        pairs = list(zip(globals_, locals_[:k]))
        swapped = swap_global_local(psi, pairs)
        back = swap_global_local(swapped, [(l, g) for g, l in pairs])
        assert back.wires == psi.wires
        assert all(np.array_equal(a, b) for a, b in zip(back.shards, psi.shards))

        targets = data.draw(st.permutations(list(swapped.local_qubits)))[: data.draw(st.integers(1, 8))]
        moved = permute_local(swapped, targets)
        assert np.array_equal(gather_dense(moved), gather_dense(psi))
        restored = permute_local(moved, swapped.local_qubits[-8:])
        assert np.array_equal(gather_dense(restored), gather_dense(psi))
        if restored.wires == swapped.wires:
            assert all(np.array_equal(a, b) for a, b in zip(restored.shards, swapped.shards))
