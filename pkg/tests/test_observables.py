import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import PAULI, apply_terms, partial_trace, random_state
from qsv.errors import ConfigurationError, ContractError, NumericalError
from qsv.fabric import spawn_mesh
from qsv.hamiltonian import LocalTerm, block_terms, build_random_local, build_xxz
from qsv.observables import (
    ReducedDensityMatrix,
    connected_correlator,
    expectation,
    reduced_density_matrix,
    renyi2,
)
from qsv.state import gather_dense, init_product_state, init_random_state, scatter_dense, swap_global_local


def _bell(mesh):
    return scatter_dense(mesh, np.array([1, 0, 0, 1]) / np.sqrt(2), precision="double", tiling=(0, 2))


def test_aligned_state_xxz_energy(mesh_factory):
    n = 10
    psi = init_product_state(mesh_factory(4), n, [0] * n, "double", tiling=(1, 7))
    assert expectation(psi, block_terms(build_xxz(n), n)) == pytest.approx(-n / 2, abs=1e-12)


def test_expectation_matches_quadratic_form(mesh_factory):
    n = 10
    terms = build_random_local(n, k=3, seed=7)
    psi = init_random_state(mesh_factory(2), n, 8, "double", tiling=(2, 7))
    v = gather_dense(psi)
    assert expectation(psi, block_terms(terms, n)) == pytest.approx(np.vdot(v, apply_terms(v, terms, n)).real, abs=1e-12)


def test_unnormalized_state_warns_and_divides(mesh_factory):
    n = 10
    H = block_terms(build_xxz(n), n)
    psi = init_product_state(mesh_factory(1), n, [0] * n, "double", tiling=(3, 7))
    with pytest.warns(RuntimeWarning):
        assert expectation(psi * 2.0, H) == pytest.approx(-n / 2)


def test_correlator_vanishes_on_product_state(mesh_factory):
    psi = init_product_state(mesh_factory(2), 10, "0110100101", "double", tiling=(2, 7))
    assert connected_correlator(psi, PAULI["X"], 0, PAULI["X"], 5) == pytest.approx(0.0, abs=1e-14)
    assert connected_correlator(psi, PAULI["Z"], 1, PAULI["Z"], 9) == pytest.approx(0.0, abs=1e-14)


def test_bell_pair_xx_correlation(mesh_factory):
    assert connected_correlator(_bell(mesh_factory(1)), PAULI["X"], 0, PAULI["X"], 1) == pytest.approx(1.0)


def test_correlator_needs_distinct_sites(mesh_factory):
    with pytest.raises(ContractError):
        connected_correlator(_bell(mesh_factory(1)), PAULI["X"], 0, PAULI["X"], 0)


def test_correlator_matches_oracle(mesh_factory):
    n = 10
    psi = init_random_state(mesh_factory(4), n, 2, "double", tiling=(1, 7))
    v = gather_dense(psi)
    X, Z = PAULI["X"], PAULI["Z"]

    def ev(support, matrix):
        return np.vdot(v, apply_terms(v, [LocalTerm(support, matrix)], n)).real

    expect = ev((2, 8), np.kron(X, Z)) - ev((2,), X) * ev((8,), Z)
    assert connected_correlator(psi, X, 2, Z, 8) == pytest.approx(expect, abs=1e-12)


def test_bell_pair_marginal_is_maximally_mixed(mesh_factory):
    rdm = reduced_density_matrix(_bell(mesh_factory(1)), [0])
    assert np.allclose(rdm.matrix, np.eye(2) / 2)
    assert renyi2(rdm) == pytest.approx(1.0)


def test_product_state_marginal_is_pure(mesh_factory):
    psi = init_product_state(mesh_factory(2), 10, "1010101010", "double", tiling=(2, 7))
    rdm = reduced_density_matrix(psi, [0, 3, 4, 9])
    assert np.linalg.matrix_rank(rdm.matrix) == 1
    assert renyi2(rdm) == pytest.approx(0.0, abs=1e-14)


def test_rdm_matches_partial_trace(mesh_factory):
    n = 12
    psi = init_random_state(mesh_factory(4), n, 3, "double")
    v = gather_dense(psi)
    for A in ([0, 1, 2, 3], [1, 5, 7, 11], [4]):
        rdm = reduced_density_matrix(psi, A)
        assert np.abs(rdm.matrix - partial_trace(v, A, n)).max() <= 1e-12
        rdm.check()
    assert psi.wires == tuple(range(n))


def test_rdm_is_layout_independent(mesh_factory):
    n = 12
    psi = init_random_state(mesh_factory(4), n, 3, "double")
    moved = swap_global_local(psi, [(0, 6), (1, 2)])
    a = reduced_density_matrix(psi, [0, 2, 6, 9]).matrix
    b = reduced_density_matrix(moved, [0, 2, 6, 9]).matrix
    assert np.abs(a - b).max() <= 1e-15


def test_rdm_refusals(mesh_factory):
    psi = init_random_state(mesh_factory(4), 12, 3, "double")
    with pytest.raises(ConfigurationError):
        reduced_density_matrix(psi, range(6), cap=5)
    with pytest.raises(ConfigurationError):
        reduced_density_matrix(psi, range(11))
    with pytest.raises(ContractError):
        reduced_density_matrix(psi, [12])


def test_renyi2_reference_values():
    assert renyi2(ReducedDensityMatrix((0, 1, 2), np.eye(8) / 8)) == pytest.approx(3.0)
    ghz = np.zeros((4, 4))
    ghz[0, 0] = ghz[3, 3] = 0.5
    assert renyi2(ReducedDensityMatrix((0, 1), ghz)) == pytest.approx(1.0)
    with pytest.raises(NumericalError):
        renyi2(ReducedDensityMatrix((0,), np.zeros((2, 2))))
    with pytest.raises(NumericalError):
        renyi2(ReducedDensityMatrix((0,), np.eye(2)))


def test_whole_system_of_pure_state_has_zero_entropy(mesh_factory):
    psi = init_random_state(mesh_factory(1), 8, 3, "double", tiling=(1, 7))
    assert renyi2(reduced_density_matrix(psi, range(8))) == pytest.approx(0.0, abs=1e-12)


def test_ghz_subsystem_entropy(mesh_factory):
    n = 9
    v = np.zeros(1 << n)
    v[0] = v[-1] = 2**-0.5
    psi = scatter_dense(mesh_factory(2), v, precision="double", tiling=(1, 7))
    assert renyi2(reduced_density_matrix(psi, [0, 1, 2, 3])) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sets(st.integers(0, 11), min_size=1, max_size=8))
def test_entropy_bounds_and_complementarity(seed, A):
    n = 12
    rng = np.random.default_rng(seed)
    # Mix a random state with a product state so both low and high entropies occur.
    w = rng.uniform()
    v = w * random_state(n, rng)
    v[0] += 1 - w
    v /= np.linalg.norm(v)
    with spawn_mesh(4, threads=1) as mesh:
        psi = scatter_dense(mesh, v, precision="double", tiling=(0, 7))
        rest = [q for q in range(n) if q not in A]
        s_a = renyi2(reduced_density_matrix(psi, sorted(A)))
        s_b = renyi2(reduced_density_matrix(psi, rest)) if len(rest) <= psi.num_local else None
    assert 0.0 <= s_a <= len(A) + 1e-12
    if s_b is not None:
        assert abs(s_a - s_b) <= 1e-8


def test_single_precision_state_gives_valid_rdm(mesh_factory):
    psi = init_random_state(mesh_factory(2), 14, 1, "single")
    rdm = reduced_density_matrix(psi, range(6))
    assert rdm.matrix.dtype == np.complex128
    rdm.check(tol=1e-6)
    assert 0 <= renyi2(rdm) <= 6
