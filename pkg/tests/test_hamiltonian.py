import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import PAULI, apply_terms, dense_matrix, random_hermitian
from qsv.errors import CapacityError, ContractError, FormatError, UnsupportedTermError
from qsv.hamiltonian import (
    LocalTerm,
    block_terms,
    build_random_local,
    build_xxz,
    dump_hamiltonian_text,
    hamiltonian_to_dense,
    hamiltonian_to_sparse,
    load_hamiltonian_text,
    term_to_dense_on,
)


def test_local_term_validation():
    with pytest.raises(ContractError):
        LocalTerm((1, 0), np.eye(4))
    with pytest.raises(ContractError):
        LocalTerm((0, 1), np.eye(2))
    with pytest.raises(ContractError):
        LocalTerm((0,), np.array([[0, 1], [0, 0]], dtype=complex))


def test_xxz_bond_matrix():
    (bond, *_) = build_xxz(4, J=-1.0, Delta=0.5, periodic=False)
    expected = -(np.kron(PAULI["X"], PAULI["X"]) + np.kron(PAULI["Y"], PAULI["Y"]) + 0.5 * np.kron(PAULI["Z"], PAULI["Z"]))
    assert np.allclose(bond.matrix, expected)
    assert bond.support == (0, 1)


def test_xxz_bond_list():
    assert [t.support for t in build_xxz(5)] == [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]
    assert len(build_xxz(5, periodic=False)) == 4


def test_aligned_state_energy_is_j_delta_n():
    n = 9
    psi = np.zeros(1 << n, complex)
    psi[0] = 1
    e = np.vdot(psi, apply_terms(psi, build_xxz(n), n)).real
    assert e == pytest.approx(-0.5 * n)


def test_random_local_ensemble():
    terms = build_random_local(16, k=6, seed=3)
    assert len(terms) == 16
    assert terms[0].support == tuple(range(6))
    assert terms[-1].support == (0, 1, 2, 3, 4, 15)
    for t in terms:
        assert np.allclose(t.matrix, t.matrix.conj().T)
    norms = [np.linalg.norm(t.matrix) for t in build_random_local(64, 6, seed=1)]
    assert np.mean(norms) == pytest.approx(math.sqrt(6), rel=0.02)
    again = build_random_local(16, k=6, seed=3)
    assert all(np.array_equal(a.matrix, b.matrix) for a, b in zip(terms, again))


def test_blocking_window_pattern_open_chain():
    H = block_terms(build_xxz(22, periodic=False), 22)
    assert [t.support for t in H.terms] == [
        tuple(range(0, 7)),
        tuple(range(6, 13)),
        tuple(range(12, 19)),
        tuple(range(15, 22)),
    ]
    assert [len(t.members) for t in H.terms] == [6, 6, 6, 3]


def test_blocking_keeps_wrap_bond_apart():
    H = block_terms(build_xxz(10), 10)
    assert [t.support for t in H.terms] == [tuple(range(7)), tuple(range(3, 10)), (0, 1, 2, 3, 4, 5, 9)]
    assert H.terms[-1].members == (9,)


def test_blocking_rejects_wide_terms():
    with pytest.raises(UnsupportedTermError):
        block_terms([LocalTerm(tuple(range(8)), np.eye(256))], 10)


def test_blocked_and_raw_dense_agree():
    terms = build_xxz(10)
    H = block_terms(terms, 10)
    assert np.abs(dense_matrix(H.terms, 10) - dense_matrix(terms, 10)).max() <= 1e-12
    assert np.abs(hamiltonian_to_dense(H) - dense_matrix(terms, 10)).max() <= 1e-12


def test_term_to_dense_on_matches_oracle():
    rng = np.random.default_rng(0)
    t = LocalTerm((1, 4), random_hermitian(4, rng))
    qubits = [0, 1, 3, 4]
    # Relabel the oracle onto the 4 target qubits.
    local = LocalTerm((qubits.index(1), qubits.index(4)), t.matrix)
    assert np.allclose(term_to_dense_on(t, qubits), dense_matrix([local], 4))


@settings(max_examples=20, deadline=None)
@given(st.integers(7, 9), st.lists(st.tuples(st.integers(0, 8), st.integers(1, 3)), min_size=1, max_size=6), st.integers(0, 2**16))
def test_blocking_preserves_operator(n, specs, seed):
    rng = np.random.default_rng(seed)
    terms = []
    for first, k in specs:
        support = tuple(sorted({(first + j) % n for j in range(k)}))
        terms.append(LocalTerm(support, random_hermitian(1 << len(support), rng)))
    H = block_terms(terms, n)
    assert all(t.num_qubits == 7 for t in H.terms)
    assert np.abs(dense_matrix(H.terms, n) - dense_matrix(terms, n)).max() <= 1e-12


def test_sparse_matches_oracle():
    terms = build_random_local(8, k=3, seed=2)
    assert np.abs(hamiltonian_to_sparse(terms, 8).toarray() - dense_matrix(terms, 8)).max() <= 1e-12


def test_dense_cap():
    with pytest.raises(CapacityError):
        hamiltonian_to_dense(block_terms(build_xxz(16), 16))


def test_norm_bound_is_upper_bound():
    terms = build_random_local(8, k=3, seed=5)
    H = block_terms(terms, 8)
    assert np.abs(np.linalg.eigvalsh(dense_matrix(terms, 8))).max() <= H.norm_bound()


def test_text_format_round_trip():
    terms = build_random_local(7, k=2, seed=4)
    n, back = load_hamiltonian_text(dump_hamiltonian_text(7, terms))
    assert n == 7
    assert all(a.support == b.support and np.array_equal(a.matrix, b.matrix) for a, b in zip(terms, back))


def test_text_format_builders_and_comments():
    n, terms = load_hamiltonian_text("# chain\n8\nxxz(-1, 0.5, false)\nrandom6(3)\n")
    assert n == 8
    assert len(terms) == 7 + 8


@pytest.mark.parametrize("text", ["", "x\n", "4\nsupport=[0,1] matrix=AAAA\n", "4\nfoo(1)\n", "4\nxxz(1)\n"])
def test_text_format_errors(text):
    with pytest.raises(FormatError):
        load_hamiltonian_text(text)
