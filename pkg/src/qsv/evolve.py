"""Real-time evolution with a factored Taylor propagator.

The order-6 Taylor polynomial of ``exp(-i dt H)`` is written as a product of
six linear factors ``(1 - i a_n dt H)``, where ``-1/a_n`` are the roots of
``sum_n x**n / n!``. Each factor costs one application of ``H`` and needs no
storage beyond the state and one product vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .apply import apply_hamiltonian, plan_schedule
from .errors import ConfigurationError
from .hamiltonian import Hamiltonian
from .state import ShardedState, axpy, norm

__all__ = ["EvolutionPlan", "evolve", "make_plan", "step", "taylor_roots", "steps_for"]

DEFAULT_DT = 0.02

Row = tuple[float, str, str, float]
Callback = Callable[[float, ShardedState], Iterable[tuple[str, str, float]]]


def taylor_roots(order: int = 6) -> list[complex]:
    """Coefficients ``a_n`` with ``prod_n (1 + a_n x) = sum_{n<=order} x**n / n!``.

    Complex roots come in conjugate pairs; pairs are ordered by increasing
    ``|Im a|`` with the negative-imaginary member first, and a real root
    (odd orders) goes last.
    """
    if order < 1:
        raise ConfigurationError(f"order must be at least 1, got {order}")
    # np.roots wants the highest power first.
    coeffs = [1.0 / math.factorial(n) for n in range(order, -1, -1)]
    a = -1.0 / np.roots(coeffs)
    real = [complex(x.real, 0.0) for x in a if abs(x.imag) < 1e-12]
    lower = sorted((x for x in a if x.imag <= -1e-12), key=lambda x: (-x.imag, x.real))
    out: list[complex] = []
    for x in lower:
        x = complex(x)
        out += [x, x.conjugate()]
    return out + real


@dataclass(frozen=True)
class EvolutionPlan:
    delta_t: float
    q: int
    roots: tuple[complex, ...] = field(default_factory=lambda: tuple(taylor_roots(6)))
    renormalize_each_step: bool = False

    @property
    def t(self) -> float:
        return self.q * self.delta_t


def steps_for(t: float, delta_t: float) -> int:
    """Number of steps ``q`` with ``q * delta_t == t``; raises if ``t/delta_t`` is not integral."""
    if delta_t <= 0:
        raise ConfigurationError(f"time step must be positive, got {delta_t}")
    if t < 0:
        raise ConfigurationError(f"evolution time must be non-negative, got {t}")
    q = round(t / delta_t)
    if abs(q * delta_t - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigurationError(f"t={t} is not an integer multiple of delta_t={delta_t}")
    return int(q)


def make_plan(t: float, delta_t: float = DEFAULT_DT, *, order: int = 6, renormalize: bool = False) -> EvolutionPlan:
    return EvolutionPlan(delta_t, steps_for(t, delta_t), tuple(taylor_roots(order)), renormalize)


def step(state: ShardedState, H: Hamiltonian, plan: EvolutionPlan, *, apply_plan=None, inplace: bool = False) -> ShardedState:
    """One propagator step: the factors act in the order ``a_1, a_2, ...``."""
    psi = state if inplace else state.copy()
    if apply_plan is None:
        apply_plan = plan_schedule(H, psi.num_qubits, psi.num_global, psi.wires)
    for a in plan.roots:
        h_psi = apply_hamiltonian(psi, H, apply_plan)
        axpy(-1j * a * plan.delta_t, h_psi, psi, out=psi)
        del h_psi
    if plan.renormalize_each_step:
        n = norm(psi)
        psi.mesh.map(lambda s, x: np.divide(x, n, out=x), psi.shards)
    return psi


def evolve(
    state: ShardedState,
    H: Hamiltonian,
    t: float,
    delta_t: float = DEFAULT_DT,
    callbacks: Sequence[tuple[int, Callback]] = (),
    *,
    plan: EvolutionPlan | None = None,
) -> tuple[ShardedState, list[Row]]:
    """Evolve ``state`` to time ``t`` and sample observables along the way.

    Each callback is ``(every, fn)``: ``fn(time, state)`` runs before the first
    step and after every ``every``-th step, and yields
    ``(observable, subsystem, value)`` tuples. Returns the final state and the
    collected ``(t, observable, subsystem, value)`` rows.
    """
    if plan is None:
        plan = make_plan(t, delta_t)
    elif abs(plan.t - t) > 1e-9 * max(1.0, abs(t)):
        raise ConfigurationError(f"plan covers t={plan.t}, asked for t={t}")
    for every, _ in callbacks:
        if every < 1:
            raise ConfigurationError(f"callback interval must be >= 1, got {every}")
    rows: list[Row] = []

    def sample(k: int, psi: ShardedState) -> None:
        now = k * plan.delta_t
        for every, fn in callbacks:
            if k % every == 0:
                rows.extend((now, name, str(sub), float(val)) for name, sub, val in fn(now, psi))

    psi = state.copy()
    apply_plan = plan_schedule(H, psi.num_qubits, psi.num_global, psi.wires)
    sample(0, psi)
    for k in range(1, plan.q + 1):
        step(psi, H, plan, apply_plan=apply_plan, inplace=True)
        sample(k, psi)
    return psi, rows
