"""Exact stationary quantities of the model on tiny lattices.

States are bitmasks, bit ``i`` standing for site ``i + 1``. The generator is
built densely (at most 4096 states) and the stationary law is obtained by a
direct solve on the closed class reached from the empty lattice.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .core import BoundaryMechanism, InvalidParamsError

MAX_SITES = 12


class ReducibleChainError(RuntimeError):
    """The chain started from the empty lattice has several closed classes."""


class FluxBalanceError(RuntimeError):
    """Entry and exit currents disagree beyond round-off."""


@dataclass(frozen=True)
class FiniteModelSpec:
    L: int
    mechanism: BoundaryMechanism
    reservoir_density: float = 0.0

    def __post_init__(self):
        if self.L > MAX_SITES:
            raise InvalidParamsError(f"L={self.L} exceeds the oracle limit of {MAX_SITES} sites")
        if self.L < self.mechanism.range:
            raise InvalidParamsError("L must be at least the mechanism range")
        if not 0.0 <= self.reservoir_density <= 1.0:
            raise InvalidParamsError("reservoir_density must lie in [0, 1]")

    @property
    def n_states(self) -> int:
        return 1 << self.L


def build_generator(spec: FiniteModelSpec) -> np.ndarray:
    """Dense rate matrix; rows sum to zero."""
    L = spec.L
    n = spec.n_states
    Q = np.zeros((n, n))
    R = spec.mechanism.range
    low = (1 << R) - 1
    exit_rate = 1.0 - spec.reservoir_density
    states = np.arange(n)
    for x in range(1, L):
        a, b = 1 << (x - 1), 1 << x
        s = states[((states & a) != 0) & ((states & b) == 0)]
        Q[s, s ^ a ^ b] += 1.0
    if exit_rate > 0:
        last = 1 << (L - 1)
        s = states[(states & last) != 0]
        Q[s, s ^ last] += exit_rate
    for t in spec.mechanism.transitions:
        if t.rate == 0:
            continue
        s = states[(states & low) == t.source_bits]
        Q[s, (s & ~low) | t.target_bits] += t.rate
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def stationary_distribution(Q: np.ndarray, start: int = 0, tol: float = 1e-10) -> np.ndarray:
    """Stationary law of the chain started from state ``start`` (the empty lattice)."""
    n = Q.shape[0]
    adj = csr_matrix((Q > 0) & ~np.eye(n, dtype=bool))
    reach = np.sort(breadth_first_order(adj, start, directed=True, return_predecessors=False))
    sub = adj[reach][:, reach]
    ncomp, comp = connected_components(sub, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(comp == c)
        out = sub[members].indices
        if np.all(comp[out] == c):
            closed.append(reach[members])
    if len(closed) != 1:
        raise ReducibleChainError(
            f"{len(closed)} closed classes reachable from state {start}: "
            + "; ".join(str(c[:8].tolist()) for c in closed)
        )
    cls = closed[0]
    A = Q[np.ix_(cls, cls)].T.copy()
    A[-1, :] = 1.0
    b = np.zeros(len(cls))
    b[-1] = 1.0
    pi_c = linalg.solve(A, b)
    pi = np.zeros(n)
    pi[cls] = pi_c
    resid = np.max(np.abs(pi @ Q))
    if resid > tol:
        raise RuntimeError(f"stationary residual {resid:.3g} exceeds {tol}")
    return pi


def _pattern_mask(pattern: Sequence[int | None]) -> tuple[int, int]:
    mask = val = 0
    for i, v in enumerate(pattern):
        if v is None:
            continue
        if v not in (0, 1):
            raise InvalidParamsError(f"pattern entries are 0, 1 or None, got {v!r}")
        mask |= 1 << i
        val |= int(v) << i
    return mask, val


def pattern_probability(pi: np.ndarray, pattern: Sequence[int | None]) -> float:
    """Stationary probability that sites 1.. match ``pattern`` (None = any)."""
    mask, val = _pattern_mask(pattern)
    states = np.arange(pi.size)
    return float(pi[(states & mask) == val].sum())


def exact_event_rate(
    pi: np.ndarray,
    mechanism: BoundaryMechanism,
    transition: int | tuple[Sequence[int], Sequence[int]],
    pattern: Sequence[int | None],
) -> float:
    """Rate of the transition's clock times the probability of ``pattern``."""
    if isinstance(transition, int):
        rate = mechanism.transitions[transition].rate
    else:
        rate = mechanism.rate_of(*transition)
    if rate == 0:
        return 0.0
    return rate * pattern_probability(pi, pattern)


def exact_entry_current(
    pi: np.ndarray, mechanism: BoundaryMechanism, reservoir_density: float = 0.0, tol: float = 1e-10
) -> float:
    """Stationary net rate of particle creation at the boundary.

    Checked against the exit flux ``(1 - reservoir_density) * P(site L occupied)``.
    """
    n = pi.size
    L = n.bit_length() - 1
    if 1 << L != n:
        raise ValueError("pi must have 2**L entries")
    states = np.arange(n)
    low = (1 << mechanism.range) - 1
    entry = 0.0
    for t in mechanism.transitions:
        gain = bin(t.target_bits).count("1") - bin(t.source_bits).count("1")
        if t.rate == 0 or gain == 0:
            continue
        entry += t.rate * gain * float(pi[(states & low) == t.source_bits].sum())
    exit_flux = (1.0 - reservoir_density) * float(pi[(states >> (L - 1)) & 1 == 1].sum())
    if abs(entry - exit_flux) > tol:
        raise FluxBalanceError(f"entry current {entry!r} != exit current {exit_flux!r}")
    return entry


def solve(spec: FiniteModelSpec) -> np.ndarray:
    return stationary_distribution(build_generator(spec))


__all__ = [
    "FiniteModelSpec",
    "FluxBalanceError",
    "ReducibleChainError",
    "build_generator",
    "exact_entry_current",
    "exact_event_rate",
    "pattern_probability",
    "solve",
    "stationary_distribution",
]
