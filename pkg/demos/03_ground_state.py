"""Ground state of the periodic XXZ chain, then its correlations and entanglement."""
from qsv.fabric import spawn_mesh
from qsv.hamiltonian import PAULI, block_terms, build_xxz
from qsv.lanczos import ground_state
from qsv.observables import connected_correlator, reduced_density_matrix, renyi2

n = 14
H = block_terms(build_xxz(n), n)
with spawn_mesh(4) as mesh:
    rp = ground_state(H, seed=0, K=120, mesh=mesh, tiling=(3, 7))
    print(f"E0 = {rp.value:.10f}   E0/N = {rp.value / n:.6f}   residual = {rp.residual:.2e}")
    print("Krylov steps:", rp.tridiag.j)

    u = rp.vector
    X = PAULI["X"]
    for r in range(1, n // 2 + 1):
        print(f"<X_0 X_{r}>_c = {connected_correlator(u, X, 0, X, r):+.6f}")
    for m in range(1, n // 2 + 1):
        print(f"S2 of first {m} qubits: {renyi2(reduced_density_matrix(u, range(m))):.4f} bits")
