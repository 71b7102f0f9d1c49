"""Chronological event sweep on the half-line or on a finite lattice.

The heavy lifting happens in :mod:`tasep_lab._kernel`; this module owns the
state arrays, translates model descriptions into stream layouts, grows the
lazy window, and turns the raw accumulators into :class:`TrajectoryStats`.

A *layout* fixes which constant-rate streams drive the boundary and how each
member reacts to them. Each channel carries a uniform mark; member ``m``
applies the channel's effect at pattern ``p`` iff ``mark < thr[m, c, p]``.
With one channel per mechanism transition and thresholds in {0, 1} this is
the plain per-transition construction. Coupled ensembles use thresholds in
between (see :mod:`tasep_lab.coupling`).
"""
from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np
from numba import njit

from . import _kernel as K
from .core import (
    HOLE,
    LABEL_DTYPE,
    BoundaryMechanism,
    Configuration,
    InvalidParamsError,
    ModelParams,
    apply_boundary_transition,
    apply_bulk_jump,
    concrete_mechanism,
    pattern_from_bits,
)
from .harris import MASK64, MergedClocks, StreamId, StreamKind, StreamRng, key_of, uniform_at

_U64 = np.uint64
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class WindowOverflowError(RuntimeError):
    """A particle tried to leave a fixed window whose right edge is closed."""


class InvalidHorizonError(ValueError):
    pass


def fnv1a_update(h: int, data: bytes) -> int:
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & MASK64
    return h


def event_record(kind: int, index: int, time: float) -> bytes:
    """Bytes hashed for one applied event: kind tag, index, raw time bits."""
    bits = struct.unpack("<Q", struct.pack("<d", time))[0]
    return struct.pack("<BqQ", kind, index, bits)


# ---------------------------------------------------------------------------
# layouts


@dataclass(frozen=True)
class Channel:
    kind: StreamKind
    index: int
    rate: float

    @property
    def rank(self) -> int:
        return StreamId(self.kind, self.index).rank


@dataclass(frozen=True)
class Layout:
    """Boundary channels shared by all members of a run.

    ``thr`` and ``tgt`` have shape (members, channels, 2**R) and drive
    occupancy members; ``mthr`` (members, channels) gates class members.
    """

    R: int
    channels: tuple[Channel, ...]
    thr: np.ndarray
    tgt: np.ndarray
    mthr: np.ndarray


def lift_mechanism(mech: BoundaryMechanism, R: int) -> BoundaryMechanism:
    """The same dynamics written on patterns of ``R >= mech.range`` sites."""
    if R < mech.range:
        raise InvalidParamsError("cannot lower the range of a mechanism")
    if R == mech.range:
        return mech
    extra = R - mech.range
    trans = []
    for t in mech.transitions:
        for e in range(1 << extra):
            tail = pattern_from_bits(e, extra)
            trans.append((t.source + tail, t.target + tail, t.rate))
    return BoundaryMechanism(R, tuple(trans))


def transition_layout(mech: BoundaryMechanism) -> Layout:
    """One stream per transition, firing iff the pattern matches exactly."""
    R = mech.range
    C = len(mech.transitions)
    thr = np.zeros((1, C, 1 << R))
    tgt = np.tile(np.arange(1 << R, dtype=np.int64), (1, C, 1))
    for c, t in enumerate(mech.transitions):
        thr[0, c, t.source_bits] = 1.0
        tgt[0, c, t.source_bits] = t.target_bits
    channels = tuple(Channel(StreamKind.BOUNDARY, c, t.rate) for c, t in enumerate(mech.transitions))
    return Layout(R, channels, thr, tgt, np.zeros((1, C)))


def class_layout(lam: float, eps: float, num_classes: int, members: int = 1) -> Layout:
    """Class-entry streams: class 1 at rate lam, classes 2..K at rate eps."""
    rates = [lam] + [eps] * (num_classes - 1)
    channels = tuple(Channel(StreamKind.CLASS_ENTRY, j + 1, float(r)) for j, r in enumerate(rates))
    C = len(channels)
    R = 2
    tgt = np.tile(np.arange(1 << R, dtype=np.int64), (members, C, 1))
    return Layout(R, channels, np.zeros((members, C, 1 << R)), tgt, np.ones((members, C)))


# ---------------------------------------------------------------------------
# run descriptions


@dataclass(frozen=True)
class Bernoulli:
    """Independent occupation of sites ``first_site..L`` with the given density."""

    density: float
    first_site: int = 1
    label: int = 1

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise InvalidParamsError("Bernoulli density must lie in [0, 1]")


Initial = Configuration | Bernoulli | Sequence | None


@dataclass(frozen=True)
class Member:
    """One configuration evolving in a (possibly shared) run.

    ``initial`` may be a configuration, a Bernoulli product, or a sequence of
    these which are overlaid in order (later entries win on their support).
    """

    kind: str = "occupancy"  # occupancy | multiclass | twin
    initial: Initial = None
    num_classes: int = 1
    label: str = ""

    @property
    def kind_code(self) -> int:
        return {"occupancy": K.KIND_OCC, "multiclass": K.KIND_MULTI, "twin": K.KIND_TWIN}[self.kind]


@dataclass(frozen=True)
class RunSpec:
    """A single-member run.

    ``window=None`` selects the lazily grown half-line, which needs an
    initial state of finite support. With a fixed window the particle on the
    last site leaves at rate ``1 - reservoir_density`` (0 when unspecified);
    ``allow_exit=False`` turns such an attempt into :class:`WindowOverflowError`.
    With ``num_classes > 1`` the boundary is driven by class-entry streams.
    """

    params: ModelParams
    horizon: float
    seed: int = 0
    initial: Initial = None
    window: int | None = None
    slack: int = 64
    allow_exit: bool = True
    mechanism: BoundaryMechanism | None = None
    log_sites: int = 0

    def __post_init__(self):
        if not self.horizon > 0:
            raise InvalidHorizonError(f"horizon must be > 0, got {self.horizon}")
        if self.window is None:
            if self.params.reservoir_density is not None:
                raise InvalidParamsError("a right reservoir needs a fixed window")
            if _has_bernoulli(self.initial):
                raise InvalidParamsError("Bernoulli initial states need a fixed window")
        elif self.window < 1:
            raise InvalidParamsError("window must be >= 1")
        if self.slack < 1:
            raise InvalidParamsError("slack must be >= 1")

    @property
    def exit_probability(self) -> float | None:
        if self.window is None or not self.allow_exit:
            return None
        rho = self.params.reservoir_density
        return 1.0 - (0.0 if rho is None else rho)

    def layout(self) -> Layout:
        p = self.params
        if p.num_classes > 1:
            if self.mechanism is not None:
                raise InvalidParamsError("class-entry runs use the built-in class streams")
            return class_layout(p.lam, p.eps, p.num_classes)
        return transition_layout(self.mechanism or concrete_mechanism(p.lam, p.eps))

    def member(self) -> Member:
        kind = "multiclass" if self.params.num_classes > 1 else "occupancy"
        return Member(kind, self.initial, self.params.num_classes)


def _has_bernoulli(initial) -> bool:
    if isinstance(initial, Bernoulli):
        return True
    if isinstance(initial, (list, tuple)):
        return any(isinstance(i, Bernoulli) for i in initial)
    return False


def _parts(initial) -> list:
    if initial is None:
        return []
    if isinstance(initial, (Configuration, Bernoulli)):
        return [initial]
    return list(initial)


def _support(initial) -> int:
    out = 0
    for part in _parts(initial):
        if isinstance(part, Configuration):
            out = max(out, part.rightmost_occupied or 0)
    return out


# ---------------------------------------------------------------------------
# statistics


@dataclass
class TrajectoryStats:
    """Counters and time integrals of one member over ``[0, horizon]``.

    ``entries_total`` counts particles created on empty sites and
    ``entries_by_class[j]`` counts class-``j`` particles written at the
    boundary. In class mode a class-1 entry on top of a lower-class particle
    replaces it, so it shows up in ``entries_by_class`` and in
    ``destroyed_by_class`` but not in ``entries_total``.
    """

    horizon: float
    entries_total: int
    entries_by_class: dict[int, int]
    exits_right: int
    occupation_time_site2_by_class: dict[int, float]
    time_site2_class1_and_site1_empty: float
    pattern_occupation: dict[tuple[int, ...], float]
    event_log_digest: int
    removals: int = 0
    destroyed_by_class: dict[int, int] = field(default_factory=dict)
    events_applied: int = 0
    initial_particles: int = 0
    final_particles: int = 0
    channel_pattern_counts: np.ndarray | None = None
    site_occupation: np.ndarray | None = None

    @property
    def time_site2_empty(self) -> float:
        return self.occupation_time_site2_by_class.get(HOLE, 0.0)


class TagState(IntEnum):
    ALIVE = K.TAG_ALIVE
    DIED = K.TAG_DIED
    REACHED = K.TAG_REACHED
    UNCERTAIN = K.TAG_UNCERTAIN  # met the region influenced by the truncation
    EXITED = K.TAG_EXITED


@dataclass(frozen=True)
class TagResult:
    state: TagState
    position: int
    max_position: int
    death_time: float | None
    reach_time: float | None
    mid_time: float | None
    time: float


# ---------------------------------------------------------------------------
# the simulation object


class Simulation:
    """Resumable multi-member run over one Harris system.

    Members share every bulk clock, every boundary channel, the exit marks
    and the initial-state variates.
    """

    def __init__(
        self,
        members: Sequence[Member],
        layout: Layout,
        seed: int,
        window: int | None = None,
        exit_probability: float | None = None,
        slack: int = 64,
        log_sites: int = 0,
        track_density: bool = False,
        order_check: bool = False,
        twin: tuple[int, int, int] | None = None,
        tag: tuple[int, int, int, int] | None = None,
        track_front: bool = False,
        path_cadence: float | None = None,
    ):
        self.members = tuple(members)
        self.layout = layout
        self.seed = int(seed) & MASK64
        self.window = window
        M = len(self.members)
        if M < 1:
            raise ValueError("need at least one member")
        if layout.thr.shape[0] != M or layout.mthr.shape[0] != M:
            raise ValueError("layout does not match the number of members")
        R = layout.R
        C = len(layout.channels)
        if window is not None:
            if window < max(R, 2):
                raise InvalidParamsError(f"window {window} shorter than the boundary range")
            if any(_support(m.initial) > window for m in self.members):
                raise InvalidParamsError("initial configuration does not fit in the window")
            cap = window
        else:
            if any(_has_bernoulli(m.initial) for m in self.members):
                raise InvalidParamsError("Bernoulli initial states need a fixed window")
            cap = max(64, max(_support(m.initial) for m in self.members) + slack, R + 2)
        self.kmax = max([1] + [m.num_classes for m in self.members])

        ip = np.zeros(K.N_IP, np.int64)
        fp = np.zeros(K.N_FP, np.float64)
        ip[K.IP_M] = M
        ip[K.IP_L] = 0 if window is None else window
        ip[K.IP_CAP] = cap
        ip[K.IP_R] = R
        ip[K.IP_C] = C
        ip[K.IP_SEED] = np.int64(np.uint64(self.seed).view(np.int64))
        ip[K.IP_EXIT_KEY] = key_of(self.seed, StreamKind.RESERVOIR, 0).view(np.int64)
        ip[K.IP_CLOSED_END] = 1 if (window is not None and exit_probability is None) else 0
        fp[K.FP_EXIT_P] = 0.0 if exit_probability is None else float(exit_probability)
        ip[K.IP_DENSITY] = int(track_density)
        ip[K.IP_ORDER_CHECK] = int(order_check)
        ip[K.IP_KMAX] = self.kmax
        ip[K.IP_LOG_SITES] = log_sites
        ip[K.IP_TWIN] = -1
        ip[K.IP_TAG_M] = -1
        if twin is not None:
            ip[K.IP_TWIN], ip[K.IP_TWIN_REF], ip[K.IP_TWIN_CUT] = twin
        ip[K.IP_FRONT] = (0 if window is None else window) + 1
        ip[K.IP_TRACK_FRONT] = int(track_front and window is not None)
        fp[K.FP_TAG_DEATH] = -1.0
        fp[K.FP_TAG_REACH] = -1.0
        fp[K.FP_TAG_MID] = -1.0
        if tag is not None:
            tm, pos, xfar, xmid = tag
            ip[K.IP_TAG_M] = tm
            ip[K.IP_TAG_POS] = pos
            ip[K.IP_TAG_MAX] = pos
            ip[K.IP_TAG_XFAR] = xfar
            ip[K.IP_TAG_XMID] = xmid
        if path_cadence is not None:
            if not path_cadence > 0:
                raise ValueError("path cadence must be > 0")
            ip[K.IP_PATH_ON] = 1
            fp[K.FP_PATH_DT] = path_cadence
            fp[K.FP_PATH_NEXT] = 0.0
        self.ip, self.fp = ip, fp
        self.kinds = np.array([m.kind_code for m in self.members], np.int64)
        self.Ks = np.array([m.num_classes for m in self.members], np.int64)

        self._alloc_sites(cap)
        self._init_state()

        self.ch_rate = np.array([ch.rate for ch in layout.channels], np.float64)
        self.ch_rank = np.array([ch.rank for ch in layout.channels], np.int64)
        self.ch_kind = np.array([int(ch.kind) for ch in layout.channels], np.int64)
        self.ch_class = np.array([ch.index for ch in layout.channels], np.int64)
        self.ch_key = np.array(
            [key_of(self.seed, ch.kind, ch.index) for ch in layout.channels],
            np.uint64,
        )
        self.ch_mkey = np.array(
            [
                key_of(self.seed, StreamKind.MARK, (int(ch.kind) << 32) | ch.index)
                for ch in layout.channels
            ],
            np.uint64,
        )
        self.ch_n = np.zeros(C, np.int64)
        self.ch_mn = np.zeros(C, np.int64)
        self.ch_next = np.full(C, np.inf)
        self.thr = np.ascontiguousarray(layout.thr, np.float64)
        self.tgt = np.ascontiguousarray(layout.tgt, np.int64)
        self.mthr = np.ascontiguousarray(layout.mthr, np.float64)

        P = 1 << R
        self.cnt = np.zeros((M, K.N_CNT), np.int64)
        self.ccount = np.zeros((M, 2, self.kmax + 2), np.int64)
        self.acc = np.zeros((M, P + self.kmax + 3, 2), np.float64)
        self.chpat = np.zeros((M, C, P), np.int64)
        self.digest = np.full(M, _U64(FNV_OFFSET), np.uint64)
        self.log_t = np.zeros(1024 if log_sites > 0 else 1, np.float64)
        self.log_i = np.zeros((self.log_t.size, 2), np.int64)
        self.dlog_f = np.zeros((max(64, 4 * M), 2), np.float64)
        self.dlog_i = np.zeros((self.dlog_f.shape[0], 2), np.int64)
        self.path = np.zeros((1024 if path_cadence is not None else 1, 2), np.float64)

        cap_heap = cap + C + 2
        self.ht = np.zeros(cap_heap, np.float64)
        self.hr = np.zeros(cap_heap, np.int64)
        self.hs = np.zeros(cap_heap, np.int64)
        K.prime_clocks(
            0.0, self.ip, self.occ, self.bkey, self.bn, self.bnext, self.bstate,
            self.ch_rate, self.ch_rank, self.ch_key, self.ch_n, self.ch_next,
            self.ht, self.hr, self.hs,
        )

    # -- allocation ---------------------------------------------------------

    def _alloc_sites(self, cap: int) -> None:
        M = len(self.members)
        self.labels = np.full((M, cap + 2), HOLE, LABEL_DTYPE)
        self.birth = np.zeros((M, cap + 2), np.float64)
        self.occ = np.zeros(cap + 2, np.int64)
        self.bkey = np.zeros(cap + 2, np.uint64)
        self.bn = np.zeros(cap + 2, np.int64)
        self.bnext = np.zeros(cap + 2, np.float64)
        self.bstate = np.zeros(cap + 2, np.int8)
        self.site_acc = np.zeros((M, cap + 2), np.float64)
        self.site_last = np.zeros((M, cap + 2), np.float64)

    def _init_state(self) -> None:
        cap = int(self.ip[K.IP_CAP])
        init_key = key_of(self.seed, StreamKind.INIT, 0)
        draws = None
        for m, member in enumerate(self.members):
            for part in _parts(member.initial):
                if isinstance(part, Configuration):
                    n = min(part.window_len, cap)
                    sub = part.labels[:n]
                    mask = sub != HOLE
                    self.labels[m, 1 : n + 1][mask] = sub[mask]
                else:
                    if draws is None:
                        draws = _init_uniforms(init_key, cap)
                    lo = part.first_site
                    hit = draws[lo - 1 : cap] < part.density
                    row = self.labels[m, lo : cap + 1]
                    row[hit] = part.label
            bad = self.labels[m, 1 : cap + 1]
            bad = bad[bad != HOLE]
            if bad.size and (bad.min() < 1 or bad.max() > max(member.num_classes, 1)):
                raise InvalidParamsError(f"member {m} has labels outside 1..{member.num_classes}")
        occupied = self.labels[:, 1 : cap + 1] != HOLE
        self.occ[1 : cap + 1] = occupied.sum(axis=0)
        self.initial_particles = occupied.sum(axis=1).astype(np.int64)

    def _grow(self) -> None:
        old = int(self.ip[K.IP_CAP])
        new = 2 * old
        saved = {
            name: getattr(self, name)
            for name in ("labels", "birth", "occ", "bkey", "bn", "bnext", "bstate", "site_acc", "site_last")
        }
        self._alloc_sites(new)
        for name, arr in saved.items():
            getattr(self, name)[..., : old + 2] = arr
        t = self.fp[K.FP_T]
        self.site_last[:, old + 2 :] = t
        self.labels[:, old + 1 :] = HOLE
        self.ip[K.IP_CAP] = new
        n = int(self.ip[K.IP_NHEAP])
        size = new + len(self.layout.channels) + 2
        for name in ("ht", "hr", "hs"):
            arr = getattr(self, name)
            grown = np.zeros(size, arr.dtype)
            grown[:n] = arr[:n]
            setattr(self, name, grown)

    def _grow_buffers(self) -> None:
        if self.ip[K.IP_LOG_N] >= self.log_t.shape[0]:
            self.log_t = np.concatenate([self.log_t, np.zeros_like(self.log_t)])
            self.log_i = np.concatenate([self.log_i, np.zeros_like(self.log_i)])
        if self.ip[K.IP_DLOG_N] + len(self.members) > self.dlog_f.shape[0]:
            self.dlog_f = np.concatenate([self.dlog_f, np.zeros_like(self.dlog_f)])
            self.dlog_i = np.concatenate([self.dlog_i, np.zeros_like(self.dlog_i)])
        if self.ip[K.IP_PATH_N] >= self.path.shape[0]:
            self.path = np.concatenate([self.path, np.zeros_like(self.path)])

    # -- running ------------------------------------------------------------

    @property
    def time(self) -> float:
        return float(self.fp[K.FP_T])

    @property
    def capacity(self) -> int:
        return int(self.ip[K.IP_CAP])

    def advance(self, t_end: float) -> str:
        """Run until ``t_end``. Returns ``"done"`` or ``"stopped"`` (tag resolved)."""
        if t_end < self.time:
            raise ValueError(f"cannot go back in time ({t_end} < {self.time})")
        while True:
            status = K.advance(
                float(t_end), self.ip, self.fp, self.kinds, self.Ks, self.labels, self.birth,
                self.occ, self.bkey, self.bn, self.bnext, self.bstate, self.ch_rate, self.ch_rank,
                self.ch_kind, self.ch_class, self.ch_key, self.ch_mkey, self.ch_n, self.ch_mn,
                self.ch_next, self.thr, self.tgt, self.mthr, self.ht, self.hr, self.hs, self.cnt,
                self.ccount, self.acc, self.chpat, self.digest, self.site_acc, self.site_last,
                self.log_t, self.log_i, self.dlog_f, self.dlog_i, self.path,
            )
            if status == K.ST_DONE:
                return "done"
            if status == K.ST_STOPPED:
                return "stopped"
            if status == K.ST_GROW:
                self._grow()
            elif status == K.ST_BUFFER:
                self._grow_buffers()
            elif status == K.ST_OVERFLOW:
                raise WindowOverflowError(
                    f"a particle reached the closed right edge of the window (L={self.window}) "
                    f"at t={self.time:.6g}"
                )
            else:  # pragma: no cover
                raise RuntimeError(f"unknown kernel status {status}")

    # -- readouts -----------------------------------------------------------

    def configuration(self, m: int = 0) -> Configuration:
        cap = self.capacity
        if self.window is not None:
            return Configuration(self.labels[m, 1 : cap + 1])
        occupied = np.flatnonzero(self.labels[m, 1 : cap + 1] != HOLE)
        n = max(1, int(occupied[-1]) + 1 if occupied.size else 1)
        return Configuration(self.labels[m, 1 : n + 1])

    def occupation_times(self, m: int = 0) -> np.ndarray:
        """Total time each site 1..capacity has been occupied so far."""
        if not self.ip[K.IP_DENSITY]:
            raise RuntimeError("density tracking was not enabled")
        cap = self.capacity
        out = self.site_acc[m, 1 : cap + 1].copy()
        occupied = self.labels[m, 1 : cap + 1] != HOLE
        out[occupied] += self.time - self.site_last[m, 1 : cap + 1][occupied]
        return out

    def stats(self, m: int = 0) -> TrajectoryStats:
        R = self.layout.R
        P = 1 << R
        kmax = self.kmax
        acc = self.acc[m, :, 0]
        site2 = {j: float(acc[P + j]) for j in range(1, kmax + 1)}
        site2[HOLE] = float(acc[P + kmax + 1])
        cap = self.capacity
        final = int(np.count_nonzero(self.labels[m, 1 : cap + 1] != HOLE))
        return TrajectoryStats(
            horizon=self.time,
            entries_total=int(self.cnt[m, K.C_ENTRIES]),
            entries_by_class={j: int(self.ccount[m, 0, j]) for j in range(1, kmax + 1)},
            exits_right=int(self.cnt[m, K.C_EXITS]),
            occupation_time_site2_by_class=site2,
            time_site2_class1_and_site1_empty=float(acc[P + kmax + 2]),
            pattern_occupation={pattern_from_bits(p, R): float(acc[p]) for p in range(P)},
            event_log_digest=int(self.digest[m]),
            removals=int(self.cnt[m, K.C_REMOVALS]),
            destroyed_by_class={j: int(self.ccount[m, 1, j]) for j in range(1, kmax + 1)},
            events_applied=int(self.cnt[m, K.C_APPLIED]),
            initial_particles=int(self.initial_particles[m]),
            final_particles=final,
            channel_pattern_counts=self.chpat[m].copy(),
            site_occupation=self.occupation_times(m) if self.ip[K.IP_DENSITY] else None,
        )

    def event_log(self) -> tuple[np.ndarray, np.ndarray]:
        """Applied events of member 0 at sites <= log_sites: (times, [kind, index])."""
        n = int(self.ip[K.IP_LOG_N])
        return self.log_t[:n].copy(), self.log_i[:n].copy()

    def destructions(self) -> list[tuple[int, int, float, float]]:
        """(member, class, birth time, death time) of every overwritten particle."""
        n = int(self.ip[K.IP_DLOG_N])
        return [
            (int(self.dlog_i[i, 0]), int(self.dlog_i[i, 1]), float(self.dlog_f[i, 0]), float(self.dlog_f[i, 1]))
            for i in range(n)
        ]

    def tag(self) -> TagResult:
        def opt(v):
            return None if v < 0 else float(v)

        return TagResult(
            state=TagState(int(self.ip[K.IP_TAG_STATE])),
            position=int(self.ip[K.IP_TAG_POS]),
            max_position=int(self.ip[K.IP_TAG_MAX]),
            death_time=opt(self.fp[K.FP_TAG_DEATH]),
            reach_time=opt(self.fp[K.FP_TAG_REACH]),
            mid_time=opt(self.fp[K.FP_TAG_MID]),
            time=self.time,
        )

    def path_samples(self) -> np.ndarray:
        return self.path[: int(self.ip[K.IP_PATH_N])].copy()

    @property
    def order_violations(self) -> int:
        return int(self.ip[K.IP_ORDER_VIOL])

    def first_order_violation(self) -> tuple[float, int, int] | None:
        """(time, site, lower member index) of the first violation, if any."""
        if not self.ip[K.IP_ORDER_VIOL]:
            return None
        return float(self.fp[K.FP_ORDER_T]), int(self.ip[K.IP_ORDER_SITE]), int(self.ip[K.IP_ORDER_MEMBER])

    @property
    def projection_mismatches(self) -> int:
        return int(self.ip[K.IP_PROJ_VIOL])

    def first_projection_mismatch(self) -> tuple[float, int] | None:
        if not self.ip[K.IP_PROJ_VIOL]:
            return None
        return float(self.fp[K.FP_PROJ_T]), int(self.ip[K.IP_PROJ_SITE])

    @property
    def front(self) -> int:
        """Leftmost site whose state may depend on the missing sites beyond the window."""
        return int(self.ip[K.IP_FRONT])

    @property
    def events_processed(self) -> int:
        return int(self.ip[K.IP_EVENTS])


@njit(cache=True)
def _init_uniforms(key, n):
    out = np.empty(n, np.float64)
    for i in range(n):
        out[i] = uniform_at(key, np.uint64(i))
    return out


# ---------------------------------------------------------------------------
# public entry points


def simulation_for(spec: RunSpec, **kwargs) -> Simulation:
    return Simulation(
        [spec.member()],
        spec.layout(),
        spec.seed,
        window=spec.window,
        exit_probability=spec.exit_probability,
        slack=spec.slack,
        log_sites=spec.log_sites,
        **kwargs,
    )


def evolve(spec: RunSpec) -> tuple[Configuration, TrajectoryStats]:
    """Evolve one member up to ``spec.horizon``; returns final state and stats."""
    sim = simulation_for(spec)
    sim.advance(spec.horizon)
    return sim.configuration(), sim.stats()


def warm_start(
    params: ModelParams, burn_in: float, seed: int, window: int | None = None
) -> Configuration:
    """State reached from the empty configuration after ``burn_in``."""
    if burn_in < 0:
        raise InvalidHorizonError("burn_in must be >= 0")
    if burn_in == 0:
        return Configuration.empty(window or 1)
    config, _ = evolve(RunSpec(params, burn_in, seed, window=window))
    return config


def validate_truncation(spec: RunSpec, observable_window: int, factor: int = 2) -> bool:
    """Do runs on ``L`` and ``factor * L`` agree on sites ``1..observable_window``?

    Compares the logs of applied events (time, stream) restricted to the
    observable sites. A lazily grown spec is compared against a fixed window
    of ``factor`` times its final reach.
    """
    if factor < 2:
        raise ValueError("factor must be >= 2")
    if observable_window < 1:
        raise ValueError("observable_window must be >= 1")
    if spec.window is None:
        lazy = simulation_for(dataclasses.replace(spec, log_sites=observable_window))
        lazy.advance(spec.horizon)
        reach = max(lazy.capacity, observable_window, 2)
        big = dataclasses.replace(spec, window=factor * reach, log_sites=observable_window, allow_exit=False)
        other = simulation_for(big)
        try:
            other.advance(spec.horizon)
        except WindowOverflowError:
            return False
        a, b = lazy.event_log(), other.event_log()
    else:
        logs = []
        for L in (spec.window, factor * spec.window):
            sim = simulation_for(dataclasses.replace(spec, window=L, log_sites=observable_window))
            try:
                sim.advance(spec.horizon)
            except WindowOverflowError:
                return False
            logs.append(sim.event_log())
        a, b = logs
    return bool(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]))


# ---------------------------------------------------------------------------
# slow reference implementation


def reference_evolve(spec: RunSpec) -> tuple[Configuration, int, int]:
    """Pure-Python sweep of the same Harris system on a fixed window.

    Every bulk clock of the window is materialized up front and events are
    applied through the functions of :mod:`tasep_lab.core` and
    :mod:`tasep_lab.multiclass`. Returns (final configuration, digest,
    entries). Only meant for cross-checking the compiled kernel.
    """
    from .multiclass import apply_class_entry

    if spec.window is None:
        raise ValueError("the reference sweep needs a fixed window")
    L = spec.window
    p = spec.params
    member = spec.member()
    config = _reference_initial(member, L, spec.seed)
    layout = spec.layout()
    clocks = MergedClocks(spec.seed)
    for x in range(1, L + 1):
        clocks.activate(StreamId.bulk(x), 1.0)
    by_stream = {}
    for c, ch in enumerate(layout.channels):
        if ch.rate > 0:
            sid = StreamId(ch.kind, ch.index)
            clocks.activate(sid, ch.rate)
            by_stream[sid] = c
    marks = {
        c: StreamRng(spec.seed, StreamId(StreamKind.MARK, (int(ch.kind) << 32) | ch.index))
        for c, ch in enumerate(layout.channels)
    }
    exit_rng = StreamRng(spec.seed, StreamId(StreamKind.RESERVOIR, 0))
    exit_p = spec.exit_probability
    mech = None if p.num_classes > 1 else (spec.mechanism or concrete_mechanism(p.lam, p.eps))
    digest = FNV_OFFSET
    entries = 0
    while True:
        ev = clocks.peek()
        if ev is None or ev.time > spec.horizon:
            break
        clocks.next_event()
        s = ev.stream
        before = config
        if s.kind == StreamKind.BULK:
            x = s.index
            if x == L:
                if config.label(L) == HOLE:
                    continue
                if exit_p is None:
                    raise WindowOverflowError("closed right edge reached")
                u = exit_rng.uniform()
                if u < exit_p:
                    labels = config.labels.copy()
                    labels[L - 1] = HOLE
                    config = Configuration(labels)
            else:
                config = apply_bulk_jump(config, x)
        else:
            c = by_stream[s]
            marks[c].uniform()
            if mech is not None:
                config = apply_boundary_transition(config, mech, c)
            else:
                config = apply_class_entry(config, s.index, p.num_classes)
        if config is not before and not np.array_equal(config.labels, before.labels):
            digest = fnv1a_update(digest, event_record(int(s.kind), s.index, ev.time))
            if s.kind != StreamKind.BULK:
                entries += config.particle_count - before.particle_count
    return config, digest, entries


def _reference_initial(member: Member, L: int, seed: int) -> Configuration:
    labels = np.full(L, HOLE, LABEL_DTYPE)
    key = key_of(seed, StreamKind.INIT, 0)
    for part in _parts(member.initial):
        if isinstance(part, Configuration):
            n = min(part.window_len, L)
            mask = part.labels[:n] != HOLE
            labels[:n][mask] = part.labels[:n][mask]
        else:
            for x in range(part.first_site, L + 1):
                if uniform_at(key, _U64(x - 1)) < part.density:
                    labels[x - 1] = part.label
    return Configuration(labels)


def digest_of_log(records: Sequence[tuple[int, int, float]]) -> int:
    h = FNV_OFFSET
    for kind, index, t in records:
        h = fnv1a_update(h, event_record(kind, index, t))
    return h
