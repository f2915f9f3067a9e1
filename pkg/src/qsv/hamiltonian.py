"""Local Hamiltonians and the blocking compiler.

Raw Hamiltonians are lists of :class:`LocalTerm` (a ``k``-qubit Hermitian
matrix on a sorted list of qubits). :func:`block_terms` merges them into
:class:`BlockedTerm` objects that act on exactly ``B`` qubits, padding with
identities where needed, which is the only shape the apply kernels accept.

Qubits are labelled ``0 .. N-1``; a term's matrix is written in the
big-endian computational basis of its support, in sorted order.
"""
from __future__ import annotations

import base64
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .errors import CapacityError, ConfigurationError, ContractError, FormatError, UnsupportedTermError

__all__ = [
    "PAULI",
    "BlockedTerm",
    "Hamiltonian",
    "LocalTerm",
    "block_terms",
    "build_random_local",
    "build_xxz",
    "dump_hamiltonian_text",
    "hamiltonian_to_dense",
    "hamiltonian_to_sparse",
    "load_hamiltonian_text",
    "term_to_dense_on",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

DEFAULT_BLOCK = 7
DENSE_CAP = 14


def _check_hermitian(matrix: np.ndarray, what: str) -> None:
    scale = np.linalg.norm(matrix)
    if np.abs(matrix - matrix.conj().T).max(initial=0.0) > 1e-12 * scale:
        raise ContractError(f"{what} is not Hermitian")


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """A Hermitian operator acting on a few qubits."""

    support: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        support = tuple(int(q) for q in self.support)
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", matrix)
        if list(support) != sorted(set(support)) or (support and support[0] < 0):
            raise ContractError(f"support {support} must be sorted, distinct and non-negative")
        dim = 1 << len(support)
        if matrix.shape != (dim, dim):
            raise ContractError(f"a term on {len(support)} qubits needs a {dim}x{dim} matrix, got {matrix.shape}")
        _check_hermitian(matrix, f"term on {support}")

    @property
    def num_qubits(self) -> int:
        return len(self.support)


@dataclass(frozen=True, eq=False)
class BlockedTerm(LocalTerm):
    """A term on exactly ``B`` qubits; ``members`` index the raw terms summed into it."""

    members: tuple[int, ...] = ()


@dataclass(eq=False)
class Hamiltonian:
    num_qubits: int
    terms: list[BlockedTerm]
    provenance: list[LocalTerm] = field(default_factory=list)
    block_size: int = DEFAULT_BLOCK

    def __len__(self) -> int:
        return len(self.terms)

    def norm_bound(self) -> float:
        """Sum of Frobenius norms of the blocks, an upper bound on the spectral norm."""
        return float(sum(np.linalg.norm(t.matrix) for t in self.terms))


def build_xxz(num_qubits: int, J: float = -1.0, Delta: float = 0.5, periodic: bool = True) -> list[LocalTerm]:
    """Nearest-neighbour ``J (XX + YY + Delta ZZ)`` terms on a chain.

    Terms come in chain order; with ``periodic`` the closing bond ``(0, N-1)``
    is last.
    """
    if num_qubits < 3:
        raise ConfigurationError("the XXZ chain needs at least 3 qubits")
    P = PAULI
    bond = J * (np.kron(P["X"], P["X"]) + np.kron(P["Y"], P["Y"]) + Delta * np.kron(P["Z"], P["Z"]))
    bond = bond.real.astype(complex)
    pairs = [(i, i + 1) for i in range(num_qubits - 1)]
    if periodic:
        pairs.append((0, num_qubits - 1))
    return [LocalTerm(p, bond) for p in pairs]


def build_random_local(
    num_qubits: int, k: int = 6, seed: int = 0, frobenius: float = math.sqrt(6.0)
) -> list[LocalTerm]:
    """Periodic chain of random Hermitian ``k``-qubit terms ``h[i, i+k-1]``.

    Each term is ``(G + G^dagger) / sqrt(2)`` with ``G`` complex Gaussian; the
    entry scale is set so that the mean Frobenius norm is ``frobenius``.
    """
    if num_qubits < k:
        raise ConfigurationError(f"need at least k={k} qubits, got {num_qubits}")
    dim = 1 << k
    sigma = frobenius / (dim * math.sqrt(2.0))
    rng = np.random.default_rng(seed)
    terms = []
    for i in range(num_qubits):
        g = rng.normal(scale=sigma, size=(dim, dim)) + 1j * rng.normal(scale=sigma, size=(dim, dim))
        h = (g + g.conj().T) / math.sqrt(2.0)
        support = tuple(sorted((i + j) % num_qubits for j in range(k)))
        terms.append(LocalTerm(support, h))
    return terms


def term_to_dense_on(term: LocalTerm, qubits: Sequence[int]) -> np.ndarray:
    """Embed ``term`` into the operator space of ``qubits`` (sorted, containing its support)."""
    qubits = [int(q) for q in qubits]
    if qubits != sorted(set(qubits)):
        raise ContractError(f"target qubits {qubits} must be sorted and distinct")
    if not set(term.support) <= set(qubits):
        raise ContractError(f"support {term.support} is not contained in {qubits}")
    m, k = len(qubits), len(term.support)
    full = np.kron(term.matrix, np.eye(1 << (m - k)))
    order = list(term.support) + [q for q in qubits if q not in term.support]
    axes = [order.index(q) for q in qubits]
    full = full.reshape([2] * (2 * m)).transpose(axes + [a + m for a in axes])
    return full.reshape(1 << m, 1 << m)


def _is_linear(support: Sequence[int], B: int) -> bool:
    return support[-1] - support[0] + 1 <= B


def _pad_support(support: Sequence[int], num_qubits: int, B: int) -> tuple[int, ...]:
    support = sorted(support)
    if len(support) == B:
        return tuple(support)
    if _is_linear(support, B):
        start = min(support[0], num_qubits - B)
        return tuple(range(start, start + B))
    for start in support:
        window = {(start + j) % num_qubits for j in range(B)}
        if set(support) <= window:
            return tuple(sorted(window))

    def gap(q):
        return min(min(abs(q - u), num_qubits - abs(q - u)) for u in support)

    spare = sorted((q for q in range(num_qubits) if q not in support), key=lambda q: (gap(q), q))
    return tuple(sorted(support + spare[: B - len(support)]))


def block_terms(terms: Sequence[LocalTerm], num_qubits: int, B: int = DEFAULT_BLOCK) -> Hamiltonian:
    """Greedily merge raw terms, in order, into ``B``-qubit blocks.

    A term joins the open block while the union of supports stays within
    ``B`` qubits. Terms whose support does not fit a linear window of ``B``
    qubits (periodic wrap-around bonds) never share a block with linear ones.
    Short blocks are padded with identity on neighbouring qubits.
    """
    if num_qubits < B:
        raise ConfigurationError(f"cannot form {B}-qubit blocks on {num_qubits} qubits")
    terms = list(terms)
    groups: list[tuple[list[int], set[int]]] = []
    open_kind = None
    for idx, term in enumerate(terms):
        if term.num_qubits > B:
            raise UnsupportedTermError(f"term on {term.support} spans more than {B} qubits")
        if term.support and term.support[-1] >= num_qubits:
            raise ContractError(f"term on {term.support} lies outside {num_qubits} qubits")
        kind = _is_linear(term.support, B) if term.support else True
        if groups and kind == open_kind and len(groups[-1][1] | set(term.support)) <= B:
            groups[-1][0].append(idx)
            groups[-1][1].update(term.support)
        else:
            groups.append(([idx], set(term.support)))
            open_kind = kind

    blocked = []
    for members, union in groups:
        support = _pad_support(sorted(union), num_qubits, B) if union else tuple(range(B))
        matrix = sum(term_to_dense_on(terms[i], support) for i in members)
        blocked.append(BlockedTerm(support, matrix, members=tuple(members)))
    return Hamiltonian(num_qubits, blocked, terms, B)


def hamiltonian_to_sparse(H: Hamiltonian | Sequence[LocalTerm], num_qubits: int | None = None) -> sparse.csr_matrix:
    """Sparse ``2**N x 2**N`` matrix of a Hamiltonian or of a raw term list.

    Built by direct bit arithmetic on basis indices, independently of the
    reshape-based apply path.
    """
    if isinstance(H, Hamiltonian):
        terms, n = H.terms, H.num_qubits
    else:
        terms, n = list(H), num_qubits
    if n is None:
        raise ContractError("num_qubits is required for a raw term list")
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for term in terms:
        k = term.num_qubits
        shifts = [n - 1 - q for q in term.support]
        local = np.zeros(dim, dtype=np.int64)
        mask = 0
        for t, sh in enumerate(shifts):
            local |= ((idx >> sh) & 1) << (k - 1 - t)
            mask |= 1 << sh
        spread = np.zeros(1 << k, dtype=np.int64)
        for a in range(1 << k):
            for t, sh in enumerate(shifts):
                spread[a] |= ((a >> (k - 1 - t)) & 1) << sh
        base = idx & ~mask
        rows.append(np.repeat(idx, 1 << k))
        cols.append((base[:, None] | spread[None, :]).ravel())
        vals.append(term.matrix[local[:, None], np.arange(1 << k)[None, :]].ravel())
    if not terms:
        return sparse.csr_matrix((dim, dim), dtype=complex)
    coo = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return coo.tocsr()


def hamiltonian_to_dense(
    H: Hamiltonian | Sequence[LocalTerm], num_qubits: int | None = None, cap: int = DENSE_CAP
) -> np.ndarray:
    n = H.num_qubits if isinstance(H, Hamiltonian) else num_qubits
    if n is not None and n > cap:
        raise CapacityError(f"refusing a dense {n}-qubit Hamiltonian (cap is {cap})")
    return hamiltonian_to_sparse(H, n).toarray()


# --- text format -----------------------------------------------------------

_TERM_RE = re.compile(r"^support=\[([0-9,\s]*)\]\s+matrix=(\S+)$")
_BUILDER_RE = re.compile(r"^(xxz|random6)\((.*)\)$")


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "1", "yes"):
        return True
    if value in ("false", "0", "no"):
        return False
    raise FormatError(f"cannot read {text!r} as a boolean")


def load_hamiltonian_text(text: str) -> tuple[int, list[LocalTerm]]:
    """Parse the plain-text Hamiltonian format.

    The first non-comment line is the qubit count. Every further line is
    either ``support=[i,j,...] matrix=<base64>`` (little-endian complex128,
    row-major) or a builder call ``xxz(J,Delta,periodic)`` / ``random6(seed)``.
    Lines starting with ``#`` are ignored.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise FormatError("empty Hamiltonian file")
    try:
        n = int(lines[0])
    except ValueError:
        raise FormatError(f"first line must be the qubit count, got {lines[0]!r}") from None
    terms: list[LocalTerm] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if m := _TERM_RE.match(line):
            support = tuple(int(q) for q in m.group(1).split(",") if q.strip())
            try:
                raw = base64.b64decode(m.group(2), validate=True)
            except ValueError:
                raise FormatError(f"line {lineno}: bad base64 payload") from None
            dim = 1 << len(support)
            if len(raw) != dim * dim * 16:
                raise FormatError(f"line {lineno}: expected {dim * dim} complex doubles")
            matrix = np.frombuffer(raw, dtype="<c16").reshape(dim, dim).astype(complex)
            terms.append(LocalTerm(support, matrix))
        elif m := _BUILDER_RE.match(line.replace(" ", "")):
            args = [a for a in m.group(2).split(",") if a]
            try:
                if m.group(1) == "xxz":
                    J, Delta = float(args[0]), float(args[1])
                    periodic = _parse_bool(args[2]) if len(args) > 2 else True
                    terms.extend(build_xxz(n, J, Delta, periodic))
                else:
                    terms.extend(build_random_local(n, 6, int(args[0])))
            except (IndexError, ValueError) as exc:
                raise FormatError(f"line {lineno}: bad builder arguments ({exc})") from None
        else:
            raise FormatError(f"line {lineno}: cannot parse {line!r}")
    return n, terms


def dump_hamiltonian_text(num_qubits: int, terms: Iterable[LocalTerm]) -> str:
    out = [str(num_qubits)]
    for t in terms:
        payload = base64.b64encode(np.ascontiguousarray(t.matrix, dtype="<c16").tobytes()).decode()
        out.append(f"support=[{','.join(map(str, t.support))}] matrix={payload}")
    return "\n".join(out) + "\n"
