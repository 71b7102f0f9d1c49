"""Lattice configurations, class labels, boundary mechanisms and the pure
state-transition rules shared by every simulation path.

Sites are numbered from 1. A configuration stores one class label per site;
empty sites carry :data:`HOLE`, which ranks below every particle class, so an
occupancy-only model is simply the one-class case.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HOLE = np.iinfo(np.int32).max
"""Label of an empty site. Compares greater than every particle class."""

LABEL_DTYPE = np.int32


class InvalidParamsError(ValueError):
    """Model or mechanism parameters outside their admissible domain."""


def is_hole(label: int) -> bool:
    return int(label) == HOLE


def occupancy_bits(pattern: Sequence[int]) -> int:
    """Encode an occupancy pattern on sites 1..R as an int (bit i = site i+1)."""
    code = 0
    for i, b in enumerate(pattern):
        if b not in (0, 1):
            raise InvalidParamsError(f"pattern entries must be 0 or 1, got {b!r}")
        code |= int(b) << i
    return code


def pattern_from_bits(code: int, length: int) -> tuple[int, ...]:
    return tuple((code >> i) & 1 for i in range(length))


@dataclass(frozen=True, eq=False)
class Configuration:
    """Class labels on sites 1..window_len.

    ``labels[x - 1]`` is the label of site ``x``. Instances are treated as
    values: the transition functions below never mutate their input.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=LABEL_DTYPE)
        if labels.ndim != 1 or labels.size < 1:
            raise ValueError("a configuration needs at least one site")
        if np.any(labels < 1):
            raise ValueError("class labels are positive integers or HOLE")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, window_len: int) -> Configuration:
        return cls(np.full(window_len, HOLE, dtype=LABEL_DTYPE))

    @classmethod
    def from_occupancy(cls, occ: Iterable[int]) -> Configuration:
        occ = np.asarray(list(occ), dtype=np.int64)
        return cls(np.where(occ > 0, 1, HOLE).astype(LABEL_DTYPE))

    @classmethod
    def from_labels(cls, labels: Iterable[int | None]) -> Configuration:
        """Build from class labels; ``None`` or ``HOLE`` marks an empty site."""
        return cls(np.array([HOLE if v is None else v for v in labels], dtype=LABEL_DTYPE))

    @property
    def window_len(self) -> int:
        return int(self.labels.size)

    def label(self, x: int) -> int:
        """Label at site ``x``; sites beyond the window read as empty."""
        if x < 1:
            raise IndexError(f"site {x} is not on the lattice")
        if x > self.window_len:
            return HOLE
        return int(self.labels[x - 1])

    def occupancy(self) -> np.ndarray:
        return (self.labels != HOLE).astype(np.int8)

    @property
    def rightmost_occupied(self) -> int | None:
        occupied = np.flatnonzero(self.labels != HOLE)
        return int(occupied[-1]) + 1 if occupied.size else None

    @property
    def particle_count(self) -> int:
        return int(np.count_nonzero(self.labels != HOLE))

    def restrict_pattern(self, R: int) -> tuple[int, ...]:
        """Occupancy pattern on sites 1..R."""
        return tuple(int(self.label(x) != HOLE) for x in range(1, R + 1))

    def resized(self, window_len: int) -> Configuration:
        """Pad with empty sites or drop sites beyond ``window_len``."""
        if window_len < 1:
            raise ValueError("window_len must be >= 1")
        if window_len <= self.window_len:
            return Configuration(self.labels[:window_len])
        pad = np.full(window_len - self.window_len, HOLE, dtype=LABEL_DTYPE)
        return Configuration(np.concatenate([self.labels, pad]))

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        n = max(self.window_len, other.window_len)
        return bool(np.array_equal(self.resized(n).labels, other.resized(n).labels))

    def __hash__(self):
        rm = self.rightmost_occupied or 0
        return hash(self.labels[:rm].tobytes())

    def __repr__(self):
        shown = ["." if v == HOLE else str(int(v)) for v in self.labels[:40]]
        more = "..." if self.window_len > 40 else ""
        return f"Configuration({''.join(shown)}{more}, L={self.window_len})"


@dataclass(frozen=True)
class Transition:
    source: tuple[int, ...]
    target: tuple[int, ...]
    rate: float

    @property
    def source_bits(self) -> int:
        return occupancy_bits(self.source)

    @property
    def target_bits(self) -> int:
        return occupancy_bits(self.target)


@dataclass(frozen=True)
class BoundaryMechanism:
    """Finite-range boundary dynamics: pattern ``source`` on sites 1..R is
    replaced by ``target`` at the given rate."""

    range: int
    transitions: tuple[Transition, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.range < 1:
            raise InvalidParamsError("mechanism range must be >= 1")
        trans = tuple(
            t if isinstance(t, Transition) else Transition(tuple(t[0]), tuple(t[1]), float(t[2]))
            for t in self.transitions
        )
        seen = set()
        for t in trans:
            if len(t.source) != self.range or len(t.target) != self.range:
                raise InvalidParamsError(f"patterns must have exactly {self.range} sites: {t}")
            occupancy_bits(t.source)
            occupancy_bits(t.target)
            if not np.isfinite(t.rate) or t.rate < 0:
                raise InvalidParamsError(f"rates must be finite and >= 0: {t}")
            if t.source == t.target:
                raise InvalidParamsError(f"source and target coincide: {t}")
            key = (t.source, t.target)
            if key in seen:
                raise InvalidParamsError(f"duplicate transition {key}")
            seen.add(key)
        object.__setattr__(self, "transitions", trans)

    def rate_of(self, source: Sequence[int], target: Sequence[int]) -> float:
        for t in self.transitions:
            if t.source == tuple(source) and t.target == tuple(target):
                return t.rate
        return 0.0

    def index_of(self, source: Sequence[int], target: Sequence[int]) -> int:
        for i, t in enumerate(self.transitions):
            if t.source == tuple(source) and t.target == tuple(target):
                return i
        raise KeyError((tuple(source), tuple(target)))


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the boundary-driven model.

    ``reservoir_density`` is ``None`` for the half-line, otherwise the
    lattice is finite and a particle on its last site leaves at rate
    ``1 - reservoir_density``.
    """

    lam: float
    eps: float = 0.0
    num_classes: int = 1
    reservoir_density: float | None = None

    def __post_init__(self):
        check_rates(self.lam, self.eps)
        if int(self.num_classes) != self.num_classes or self.num_classes < 1:
            raise InvalidParamsError("num_classes must be an integer >= 1")
        if self.reservoir_density is not None and not 0.0 <= self.reservoir_density <= 1.0:
            raise InvalidParamsError("reservoir_density must lie in [0, 1]")

    @property
    def half_line(self) -> bool:
        return self.reservoir_density is None

    @property
    def exit_probability(self) -> float:
        return 0.0 if self.reservoir_density is None else 1.0 - self.reservoir_density


def check_rates(lam: float, eps: float) -> None:
    if not (np.isfinite(lam) and np.isfinite(eps)):
        raise InvalidParamsError("rates must be finite")
    if lam < 0 or eps < 0:
        raise InvalidParamsError(f"rates must be >= 0 (lam={lam}, eps={eps})")
    if lam + eps >= 0.5:
        raise InvalidParamsError(f"need lam + eps < 1/2 (lam={lam}, eps={eps})")


def concrete_mechanism(lam: float, eps: float) -> BoundaryMechanism:
    """Range-2 mechanism creating a particle at site 1 with rate
    ``lam + eps * occupancy(2)`` when site 1 is empty."""
    check_rates(lam, eps)
    return BoundaryMechanism(
        2,
        (
            Transition((0, 0), (1, 0), float(lam)),
            Transition((0, 1), (1, 1), float(lam + eps)),
        ),
    )


def tasep_mechanism(lam: float) -> BoundaryMechanism:
    """Range-1 Poisson source of rate ``lam`` (the plain TASEP(lam) boundary)."""
    if not np.isfinite(lam) or lam < 0:
        raise InvalidParamsError("lam must be finite and >= 0")
    return BoundaryMechanism(1, (Transition((0,), (1,), float(lam)),))


def apply_bulk_jump(config: Configuration, x: int) -> Configuration:
    """Attempt the jump of the particle at ``x`` onto ``x + 1``.

    The pair is exchanged when site ``x`` holds a particle of strictly
    higher priority (smaller class) than the content of ``x + 1``.
    """
    if not 1 <= x < config.window_len:
        raise IndexError(f"bulk jump at site {x} outside window 1..{config.window_len}")
    a = config.labels[x - 1]
    b = config.labels[x]
    if a == HOLE or b <= a:
        return config
    labels = config.labels.copy()
    labels[x - 1], labels[x] = b, a
    return Configuration(labels)


def apply_boundary_transition(
    config: Configuration, mech: BoundaryMechanism, ti: int
) -> Configuration:
    """Replace the occupancy pattern on sites 1..R by the transition's target
    if it currently equals the transition's source; otherwise no-op.

    Newly occupied sites receive class-1 particles.
    """
    t = mech.transitions[ti]
    R = mech.range
    if config.window_len < R:
        raise IndexError(f"window of {config.window_len} sites is shorter than range {R}")
    if config.restrict_pattern(R) != t.source:
        return config
    labels = config.labels.copy()
    for i, (old, new) in enumerate(zip(t.source, t.target)):
        if old == 0 and new == 1:
            labels[i] = 1
        elif old == 1 and new == 0:
            labels[i] = HOLE
    return Configuration(labels)


def leq(config_a: Configuration, config_b: Configuration) -> bool:
    """Sitewise occupancy order on the union of both windows."""
    n = max(config_a.window_len, config_b.window_len)
    occ_a = config_a.resized(n).occupancy()
    occ_b = config_b.resized(n).occupancy()
    return bool(np.all(occ_a <= occ_b))
