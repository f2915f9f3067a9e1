"""``qsv`` command line: ground-state, evolve, bench and checkpoint.

Exit codes: 0 success, 2 usage or configuration error, 3 capacity refusal,
4 malformed input file, 1 anything else.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import pipelines
from .checkpoint import read_checkpoint, save_state
from .errors import CapacityError, ConfigurationError, ContractError, FormatError
from .fabric import spawn_mesh
from .state import scatter_dense

log = logging.getLogger("qsv")

EXIT_USAGE, EXIT_CAPACITY, EXIT_FORMAT = 2, 3, 4


class UsageError(Exception):
    pass


def _parse_set(items: Sequence[str]) -> dict[str, Any]:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsv", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("ground-state", "Lanczos ground state, correlators and entanglement"),
        ("evolve", "quench dynamics with Renyi-2 sampling"),
        ("bench", "time one H|psi> update over qubit and shard counts"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="JSON config document")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key; VALUE is parsed as JSON when possible")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    ck = sub.add_parser("checkpoint", help="inspect or convert state checkpoints")
    ck_sub = ck.add_subparsers(dest="action", required=True)
    info = ck_sub.add_parser("info", help="print header and norm of a checkpoint")
    info.add_argument("path")
    conv = ck_sub.add_parser("convert", help="rewrite a checkpoint at another precision")
    conv.add_argument("src")
    conv.add_argument("dst")
    conv.add_argument("--precision", choices=["single", "double"], required=True)
    return parser


_RUNNERS = {
    "ground-state": pipelines.run_ground_state,
    "evolve": pipelines.run_evolve,
    "bench": pipelines.run_apply_benchmark,
}


def _checkpoint(args) -> int:
    if args.action == "info":
        precision, amps = read_checkpoint(args.path)
        n = amps.size.bit_length() - 1
        print(json.dumps({"num_qubits": n, "precision": precision, "norm": float(np.linalg.norm(amps))}))
        return 0
    _, amps = read_checkpoint(args.src)
    with spawn_mesh(1) as mesh:
        n = amps.size.bit_length() - 1
        state = scatter_dense(mesh, amps, precision=args.precision, tiling=(0, min(7, n)))
        save_state(args.dst, state)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "checkpoint":
            return _checkpoint(args)
        cfg = pipelines.resolve_config(args.command, _load_config(args.config), _parse_set(args.set))
        if args.print_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        manifest = _RUNNERS[args.command](cfg)
        log.info("wrote %s to %s", ", ".join(manifest["outputs"]), cfg["output_dir"])
        return 0
    except (UsageError, ConfigurationError, ContractError) as exc:
        parser.error(str(exc))
    except CapacityError as exc:
        print(f"qsv: refusing: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except FormatError as exc:
        print(f"qsv: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return 1
