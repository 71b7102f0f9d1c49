"""Independent Poisson clock streams and their chronological merge.

Every stream is identified by a :class:`StreamId` and owns a counter-based
substream: its ``n``-th variate is a pure function of ``(master_seed, stream,
n)``. A stream can therefore be materialized at any time, in any order,
without touching the randomness of any other stream.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import IntEnum

import numba
import numpy as np

_U64 = np.uint64
GOLDEN = _U64(0x9E3779B97F4A7C15)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53
MASK64 = (1 << 64) - 1


class StreamKind(IntEnum):
    BULK = 1
    BOUNDARY = 2
    CLASS_ENTRY = 3
    RESERVOIR = 4
    MARK = 5
    INIT = 6


RANK_SHIFT = 56


@dataclass(frozen=True, order=True)
class StreamId:
    """Stream identity; the dataclass order is the deterministic tie-break order."""

    kind: StreamKind
    index: int

    def __post_init__(self):
        object.__setattr__(self, "kind", StreamKind(self.kind))
        if not 0 <= self.index < (1 << RANK_SHIFT):
            raise ValueError(f"stream index out of range: {self.index}")

    @property
    def rank(self) -> int:
        return (int(self.kind) << RANK_SHIFT) | int(self.index)

    @classmethod
    def bulk(cls, x: int) -> StreamId:
        return cls(StreamKind.BULK, x)

    @classmethod
    def boundary(cls, i: int) -> StreamId:
        return cls(StreamKind.BOUNDARY, i)

    @classmethod
    def class_entry(cls, j: int) -> StreamId:
        return cls(StreamKind.CLASS_ENTRY, j)


@dataclass(frozen=True)
class ClockEvent:
    time: float
    stream: StreamId


class InvalidRateError(ValueError):
    pass


@numba.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


@numba.njit(cache=True)
def stream_key(seed, kind, index):
    s = mix64(mix64(_U64(seed)) + _U64(kind) * GOLDEN)
    return mix64(s ^ mix64(_U64(index) + _U64(0x632BE59BD9B4E019)))


@numba.njit(inline="always", cache=True)
def variate_bits(key, n):
    return mix64(key + (_U64(n) + _U64(1)) * GOLDEN)


@numba.njit(inline="always", cache=True)
def uniform_at(key, n):
    """The ``n``-th uniform of a substream, strictly inside (0, 1)."""
    return (float(variate_bits(key, n) >> _U64(11)) + 0.5) * _TWO_M53


@numba.njit(inline="always", cache=True)
def exponential_at(key, n, rate):
    return -math.log(uniform_at(key, n)) / rate


def _as_seed(seed: int) -> np.uint64:
    return np.uint64(int(seed) & MASK64)


def key_of(seed: int, kind: int, index: int) -> np.uint64:
    """Substream key as a numpy scalar (compiled code returns a Python int)."""
    return np.uint64(int(stream_key(_as_seed(seed), np.uint64(int(kind)), np.uint64(int(index)))))


class StreamRng:
    """Sequential view of one substream."""

    __slots__ = ("seed", "stream", "key", "counter")

    def __init__(self, seed: int, stream: StreamId):
        self.seed = int(seed) & MASK64
        self.stream = stream
        self.key = key_of(seed, stream.kind, stream.index)
        self.counter = 0

    def uniform(self) -> float:
        u = uniform_at(self.key, np.uint64(self.counter))
        self.counter += 1
        return float(u)

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)])


def derive_stream_rng(master_seed: int, stream: StreamId) -> StreamRng:
    return StreamRng(master_seed, stream)


def exponential_from_uniform(u: float, rate: float) -> float:
    if not rate > 0:
        raise InvalidRateError(f"rate must be > 0, got {rate}")
    return -math.log(u) / rate


def sample_exponential(rng: StreamRng, rate: float) -> float:
    """Waiting time of a rate-``rate`` Poisson clock; advances ``rng``."""
    if not rate > 0:
        raise InvalidRateError(f"rate must be > 0, got {rate}")
    return exponential_from_uniform(rng.uniform(), rate)


class MergedClocks:
    """Chronological merge of independent constant-rate Poisson streams.

    Each active stream keeps exactly one pending arrival, regenerated when
    consumed. A stream activated at time ``t`` discards its arrivals up to
    ``t``, so its arrival times do not depend on when it was activated.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._heap: list[tuple[float, int, StreamId]] = []
        self._rng: dict[StreamId, StreamRng] = {}
        self._rate: dict[StreamId, float] = {}
        self._pending: dict[StreamId, float] = {}

    def activate(self, stream: StreamId, rate: float, at: float = 0.0) -> None:
        if stream in self._rate:
            raise ValueError(f"stream {stream} already active")
        if not rate > 0:
            raise InvalidRateError(f"rate-0 streams are excluded from the merge: {stream}")
        rng = derive_stream_rng(self.seed, stream)
        t = sample_exponential(rng, rate)
        while t <= at:
            t += sample_exponential(rng, rate)
        self._rng[stream] = rng
        self._rate[stream] = rate
        self._pending[stream] = t
        heapq.heappush(self._heap, (t, stream.rank, stream))

    @property
    def active(self) -> dict[StreamId, float]:
        return dict(self._rate)

    def peek(self) -> ClockEvent | None:
        if not self._heap:
            return None
        t, _, s = self._heap[0]
        return ClockEvent(t, s)

    def next_event(self) -> ClockEvent | None:
        """Pop the earliest pending arrival, or ``None`` when nothing is active."""
        if not self._heap:
            return None
        t, rank, s = self._heap[0]
        nxt = t + sample_exponential(self._rng[s], self._rate[s])
        self._pending[s] = nxt
        heapq.heapreplace(self._heap, (nxt, rank, s))
        return ClockEvent(t, s)


def next_event(queue: MergedClocks) -> ClockEvent | None:
    return queue.next_event()
