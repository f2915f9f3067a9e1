"""Binary state checkpoints.

Layout (little-endian): magic ``b"QSV1"``, ``u16`` version (1), ``u8``
precision (0 single, 1 double), ``u8`` qubit count, then ``2**N``
amplitudes in logical order as interleaved (real, imag) pairs.
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .fabric import Mesh
from .state import DEFAULT_TILING, ShardedState, gather_dense, scatter_dense

__all__ = ["MAGIC", "VERSION", "load_state", "read_checkpoint", "save_state"]

MAGIC = b"QSV1"
VERSION = 1
_HEADER = struct.Struct("<4sHBB")
_CODES = {"single": 0, "double": 1}
_WIRE = {0: np.dtype("<c8"), 1: np.dtype("<c16")}


def save_state(path: str | os.PathLike, state: ShardedState) -> Path:
    """Write ``state`` in logical amplitude order; the file appears atomically."""
    path = Path(path)
    code = _CODES[state.precision]
    amps = gather_dense(state).astype(_WIRE[code], copy=False)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, code, state.num_qubits))
        f.write(amps.tobytes())
    os.replace(tmp, path)
    return path


def read_checkpoint(path: str | os.PathLike) -> tuple[str, np.ndarray]:
    """Return ``(precision, amplitudes)`` after validating the whole file."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a checkpoint header")
    magic, version, code, n = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if code not in _WIRE:
        raise FormatError(f"{path}: unknown precision code {code}")
    dtype = _WIRE[code]
    expected = _HEADER.size + (1 << n) * dtype.itemsize
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {n} qubits, found {len(data)}")
    amps = np.frombuffer(data, dtype=dtype, offset=_HEADER.size)
    precision = "single" if code == 0 else "double"
    return precision, amps.astype(amps.dtype.newbyteorder("="))


def load_state(
    path: str | os.PathLike,
    mesh: Mesh,
    *,
    precision: str | None = None,
    tiling: tuple[int, int] = DEFAULT_TILING,
) -> ShardedState:
    """Load a checkpoint onto ``mesh``, optionally widening or narrowing its precision."""
    stored, amps = read_checkpoint(path)
    return scatter_dense(mesh, amps, precision=precision or stored, tiling=tiling)
