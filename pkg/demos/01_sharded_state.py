"""A 12-qubit state spread over 4 shards, moved around and gathered back."""
import numpy as np

from qsv.fabric import spawn_mesh
from qsv.state import gather_dense, init_random_state, permute_local, swap_global_local

with spawn_mesh(4) as mesh:
    psi = init_random_state(mesh, 12, seed=0, precision="double")
    print("shards:", mesh.num_shards, "global qubits:", psi.num_global, "local qubits:", psi.num_local)
    print("shard array shape:", psi.shards[0].shape)

    # Exchange the two global qubits with local ones; this is an all-to-all.
    moved = swap_global_local(psi, [(0, 10), (1, 11)])
    print("wires after swap:", moved.wires)
    print("all_to_all calls so far:", mesh.stats["all_to_all"])

    # Reordering local qubits needs no communication.
    shuffled = permute_local(moved, [0, 1, 2])
    print("wires after local permutation:", shuffled.wires)

    # The logical vector does not depend on the layout.
    same = np.array_equal(gather_dense(shuffled), gather_dense(psi))
    print("gathered vectors identical:", same)
