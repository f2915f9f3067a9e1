"""Batch pipelines behind the ``qsv`` command line.

Each pipeline takes a resolved configuration dict, writes its outputs and a
``manifest.json`` into ``output_dir`` and returns the manifest.
"""
from __future__ import annotations

import csv
import json
import os
import platform
import time
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .apply import apply_hamiltonian, count_cost, plan_schedule
from .checkpoint import save_state
from .errors import CapacityError, ConfigurationError
from .evolve import evolve, make_plan
from .fabric import spawn_mesh
from .hamiltonian import PAULI, block_terms, build_random_local, build_xxz, load_hamiltonian_text
from .lanczos import ground_state
from .observables import RDM_CAP, connected_correlator, reduced_density_matrix, renyi2
from .state import init_product_state, init_random_state

SCHEMA_VERSION = 1

DEFAULTS: dict[str, dict[str, Any]] = {
    "ground-state": {
        "N": 12,
        "shards": 1,
        "precision": "double",
        "tiling": None,
        "block_size": 7,
        "hamiltonian": "xxz",
        "hamiltonian_file": None,
        "J": -1.0,
        "Delta": 0.5,
        "periodic": True,
        "K": 100,
        "delta": 1e-10,
        "seed": 0,
        "correlator_op": "X",
        "max_subsystem": None,
        "checkpoint": None,
        "output_dir": "qsv-ground-state",
    },
    "evolve": {
        "N": 16,
        "shards": 1,
        "precision": "single",
        "tiling": None,
        "block_size": 7,
        "k": 6,
        "seed": 0,
        "t": 10.0,
        "delta_t": 0.02,
        "sample_every": 25,
        "subsystems": [1, 2, 4, 8],
        "renormalize": False,
        "checkpoint": None,
        "output_dir": "qsv-evolve",
    },
    "bench": {
        "N": [20, 21, 22],
        "shards": [1],
        "precision": "single",
        "tiling": None,
        "block_size": 7,
        "repetitions": 3,
        "warmup": 1,
        "seed": 0,
        "memory_limit_bytes": None,
        "output_dir": "qsv-bench",
    },
}


def resolve_config(command: str, config: dict[str, Any] | None = None, overrides: dict[str, Any] | None = None) -> dict:
    """Defaults, then the config document, then ``--set`` overrides.

    Unknown keys raise :class:`ConfigurationError` naming the key.
    """
    base = dict(DEFAULTS[command])
    for source in (config or {}), (overrides or {}):
        for key, value in source.items():
            if key not in base:
                raise ConfigurationError(f"unknown config key {key!r} for {command}")
            base[key] = value
    return base


def auto_tiling(num_qubits: int, shards: int, block_size: int, tiling=None) -> tuple[int, int]:
    """Tiling for a run: the lane exponent must be the block size; the sublane
    exponent is 3 when the shard is big enough and shrinks otherwise."""
    if tiling is not None:
        return int(tiling[0]), int(tiling[1])
    num_local = num_qubits - (int(shards).bit_length() - 1)
    if num_local < block_size:
        raise ConfigurationError(
            f"{num_qubits} qubits on {shards} shards leaves {num_local} local qubits, "
            f"fewer than the block size {block_size}"
        )
    return min(3, num_local - block_size), block_size


def _environment() -> dict:
    return {
        "qsv": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads_cap": os.environ.get("QSV_THREADS"),
    }


def _write_manifest(out: Path, command: str, config: dict, seeds: dict, wall: dict, outputs: list[Path]) -> dict:
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "seeds": seeds,
        "precision": config["precision"],
        "shards": config["shards"],
        "wall_time": wall,
        "outputs": [p.name for p in outputs],
        "environment": _environment(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    missing = [p.name for p in outputs if not p.exists()]
    if missing:
        raise RuntimeError(f"outputs not written: {missing}")
    return manifest


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    return path


def _ground_state_hamiltonian(cfg: dict):
    N = int(cfg["N"])
    if cfg["hamiltonian_file"]:
        n_file, terms = load_hamiltonian_text(Path(cfg["hamiltonian_file"]).read_text())
        if n_file != N:
            raise ConfigurationError(f"Hamiltonian file is for {n_file} qubits but N={N}")
        return terms
    if cfg["hamiltonian"] != "xxz":
        raise ConfigurationError(f"unknown hamiltonian {cfg['hamiltonian']!r}; use 'xxz' or hamiltonian_file")
    return build_xxz(N, float(cfg["J"]), float(cfg["Delta"]), bool(cfg["periodic"]))


def run_ground_state(cfg: dict) -> dict:
    """Ground state energy, ``<O_0 O_n>`` connected correlators and ``S_2`` of leading blocks.

    Blocks run up to ``N // 2`` qubits by default; for a pure state the rest
    follow from ``S_2(A) = S_2(complement)``.
    """
    t_start = time.perf_counter()
    N, shards, B = int(cfg["N"]), int(cfg["shards"]), int(cfg["block_size"])
    if cfg["correlator_op"] not in PAULI:
        raise ConfigurationError(f"correlator_op must be one of {sorted(PAULI)}")
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tiling = auto_tiling(N, shards, B, cfg["tiling"])
    H = block_terms(_ground_state_hamiltonian(cfg), N, B)
    outputs: list[Path] = []
    wall: dict[str, float] = {}

    with spawn_mesh(shards) as mesh:
        t0 = time.perf_counter()
        rp = ground_state(
            H, int(cfg["seed"]), int(cfg["K"]), float(cfg["delta"]),
            mesh=mesh, precision=cfg["precision"], tiling=tiling,
        )
        wall["lanczos"] = time.perf_counter() - t0
        u = rp.vector
        record = rp.record()
        outputs.append(out / "ground_state.json")
        outputs[-1].write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")

        t0 = time.perf_counter()
        op = PAULI[cfg["correlator_op"]]
        rows = [(n, connected_correlator(u, op, 0, op, n)) for n in range(1, N)]
        outputs.append(_write_csv(out / "correlators.csv", ["distance", "value"], rows))
        wall["correlators"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        top = min(N // 2, RDM_CAP, u.num_local)
        if cfg["max_subsystem"] is not None:
            top = min(top, int(cfg["max_subsystem"]))
        rows = [(M, renyi2(reduced_density_matrix(u, range(M)))) for M in range(1, top + 1)]
        outputs.append(_write_csv(out / "entropy.csv", ["subsystem_size", "S2"], rows))
        wall["entropy"] = time.perf_counter() - t0

        if cfg["checkpoint"]:
            outputs.append(save_state(out / cfg["checkpoint"], u))

    wall["total"] = time.perf_counter() - t_start
    return _write_manifest(out, "ground-state", cfg, {"lanczos_seed": int(cfg["seed"])}, wall, outputs)


def run_evolve(cfg: dict) -> dict:
    """Quench from ``|0...0>`` under a random k-local Hamiltonian, sampling ``S_2`` of leading blocks."""
    t_start = time.perf_counter()
    N, shards, B = int(cfg["N"]), int(cfg["shards"]), int(cfg["block_size"])
    plan = make_plan(float(cfg["t"]), float(cfg["delta_t"]), renormalize=bool(cfg["renormalize"]))
    subsystems = [int(M) for M in cfg["subsystems"]]
    if any(M < 1 or M > N - 1 for M in subsystems):
        raise ConfigurationError(f"subsystem sizes must lie in 1..{N - 1}, got {subsystems}")
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tiling = auto_tiling(N, shards, B, cfg["tiling"])
    H = block_terms(build_random_local(N, int(cfg["k"]), int(cfg["seed"])), N, B)
    outputs: list[Path] = []

    def entropies(t, psi):
        return [("S2", M, renyi2(reduced_density_matrix(psi, range(M)))) for M in subsystems]

    with spawn_mesh(shards) as mesh:
        psi = init_product_state(mesh, N, [0] * N, precision=cfg["precision"], tiling=tiling)
        t0 = time.perf_counter()
        final, rows = evolve(psi, H, plan.t, plan.delta_t, [(int(cfg["sample_every"]), entropies)], plan=plan)
        wall = {"evolve": time.perf_counter() - t0}
        rows = [(f"{t:.10g}", name, sub, value) for t, name, sub, value in rows]
        outputs.append(_write_csv(out / "entropy_vs_time.csv", ["t", "observable", "subsystem", "value"], rows))
        if cfg["checkpoint"]:
            outputs.append(save_state(out / cfg["checkpoint"], final))

    wall["total"] = time.perf_counter() - t_start
    return _write_manifest(out, "evolve", cfg, {"hamiltonian_seed": int(cfg["seed"])}, wall, outputs)


def memory_estimate(num_qubits: int, precision: str) -> int:
    """Bytes needed to apply H: state, accumulator and two relayout buffers."""
    itemsize = 8 if precision == "single" else 16
    return 4 * (1 << num_qubits) * itemsize


def available_memory() -> int:
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return 1 << 62


def time_apply(num_qubits: int, shards: int, *, precision: str = "single", block_size: int = 7,
               tiling=None, repetitions: int = 3, warmup: int = 1, seed: int = 0) -> dict:
    """Mean and min wall time of one nearest-neighbour ``H|psi>`` update."""
    if repetitions < 1:
        raise ConfigurationError("repetitions must be at least 1")
    tiling = auto_tiling(num_qubits, shards, block_size, tiling)
    H = block_terms(build_xxz(num_qubits), num_qubits, block_size)
    with spawn_mesh(shards) as mesh:
        psi = init_random_state(mesh, num_qubits, seed, precision=precision, tiling=tiling)
        plan = plan_schedule(H, num_qubits, mesh.num_global, psi.wires)
        for _ in range(warmup):
            apply_hamiltonian(psi, H, plan)
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            apply_hamiltonian(psi, H, plan)
            times.append(time.perf_counter() - t0)
        threads = mesh.threads
    cost = count_cost(plan, num_qubits, itemsize=psi.dtype.itemsize)
    return {
        "N": num_qubits,
        "shards": shards,
        "threads": threads,
        "mean_s": float(np.mean(times)),
        "min_s": float(np.min(times)),
        "times_s": times,
        "cost": cost.to_dict(),
    }


def run_apply_benchmark(cfg: dict) -> dict:
    """Time ``H|psi>`` over a grid of qubit and shard counts."""
    t_start = time.perf_counter()
    Ns = [int(n) for n in np.atleast_1d(cfg["N"])]
    shard_counts = [int(s) for s in np.atleast_1d(cfg["shards"])]
    if int(cfg["repetitions"]) < 1:
        raise ConfigurationError("repetitions must be at least 1")
    limit = cfg["memory_limit_bytes"] or available_memory()
    for N in Ns:
        need = memory_estimate(N, cfg["precision"])
        if need > limit:
            raise CapacityError(f"N={N} needs about {need / 2**30:.2f} GiB, only {limit / 2**30:.2f} GiB available")
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    points = [
        time_apply(N, S, precision=cfg["precision"], block_size=int(cfg["block_size"]), tiling=cfg["tiling"],
                   repetitions=int(cfg["repetitions"]), warmup=int(cfg["warmup"]), seed=int(cfg["seed"]))
        for S in shard_counts
        for N in Ns
    ]
    path = out / "bench.json"
    path.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "points": points}, indent=2) + "\n")
    wall = {"total": time.perf_counter() - t_start}
    return _write_manifest(out, "bench", cfg, {"state_seed": int(cfg["seed"])}, wall, [path])
