"""Several configurations driven by one Harris system.

Bulk clocks, exit marks and initial-state variates are shared verbatim. The
boundary is shared through *nested* channels: transitions of all members are
grouped by their effect on sites 1..R (which sites are created, which are
cleared), each group gets one stream with the largest rate ``D`` any member
uses for it, and every arrival carries a uniform mark. A member whose rate
for that effect at its current pattern is ``d`` applies it iff
``mark < d / D``. Each member then sees exactly its own Poisson rates, and a
member with larger rates accepts every arrival a smaller one accepts, which
is what makes ordered members stay ordered.

Giving each transition its own stream instead would not be monotone: a
TASEP(lam) member at pattern 00 and a model member at 01 would use
different streams for the same entry at site 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import BoundaryMechanism, Configuration, ModelParams, concrete_mechanism, leq
from .engine import Layout, Channel, Member, Simulation, TrajectoryStats, lift_mechanism
from .harris import StreamId, StreamKind, StreamRng, sample_exponential


def nested_layout(mechanisms: Sequence[BoundaryMechanism]) -> Layout:
    """Effect-grouped marked channels shared by all ``mechanisms``."""
    R = max(m.range for m in mechanisms)
    lifted = [lift_mechanism(m, R) for m in mechanisms]
    P = 1 << R
    effects: dict[tuple[int, int], dict[tuple[int, int], tuple[int, float]]] = {}
    for mi, mech in enumerate(lifted):
        for t in mech.transitions:
            p, q = t.source_bits, t.target_bits
            eff = (q & ~p, p & ~q)
            effects.setdefault(eff, {})[(mi, p)] = (q, t.rate)
    keys = sorted(effects)
    M, C = len(lifted), len(keys)
    thr = np.zeros((M, C, P))
    tgt = np.tile(np.arange(P, dtype=np.int64), (M, C, 1))
    channels = []
    for c, eff in enumerate(keys):
        table = effects[eff]
        D = max(rate for _, rate in table.values())
        for (mi, p), (q, rate) in table.items():
            tgt[mi, c, p] = q
            if D > 0:
                thr[mi, c, p] = rate / D
        channels.append(Channel(StreamKind.BOUNDARY, c, float(D)))
    return Layout(R, tuple(channels), thr, tgt, np.zeros((M, C)))


@dataclass(frozen=True)
class EnsembleMember:
    label: str
    params: ModelParams
    initial: Configuration | None = None
    mechanism: BoundaryMechanism | None = None

    @property
    def boundary(self) -> BoundaryMechanism:
        return self.mechanism or concrete_mechanism(self.params.lam, self.params.eps)


@dataclass(frozen=True)
class CoupledEnsemble:
    """Members listed from lowest to highest; ``window=None`` is the half-line."""

    members: tuple[EnsembleMember, ...]
    shared_seed: int = 0
    window: int | None = None
    reservoir_density: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "members",
            tuple(m if isinstance(m, EnsembleMember) else EnsembleMember(*m) for m in self.members),
        )
        if not self.members:
            raise ValueError("an ensemble needs at least one member")

    def layout(self) -> Layout:
        return nested_layout([m.boundary for m in self.members])

    def simulation(self, seed: int | None = None, **kwargs) -> Simulation:
        exit_p = None
        if self.window is not None:
            exit_p = 1.0 - (self.reservoir_density or 0.0)
        return Simulation(
            [Member("occupancy", m.initial) for m in self.members],
            self.layout(),
            self.shared_seed if seed is None else seed,
            window=self.window,
            exit_probability=exit_p,
            **kwargs,
        )


def sandwich(lam: float, eps: float, seed: int = 0, window: int | None = None) -> CoupledEnsemble:
    """TASEP(lam) <= model(lam, eps) <= TASEP(lam + eps), all from empty."""
    return CoupledEnsemble(
        (
            EnsembleMember(f"tasep({lam:g})", ModelParams(lam)),
            EnsembleMember(f"model({lam:g},{eps:g})", ModelParams(lam, eps)),
            EnsembleMember(f"tasep({lam + eps:g})", ModelParams(lam + eps)),
        ),
        seed,
        window,
    )


def coupled_evolve(ensemble: CoupledEnsemble, horizon: float) -> list[tuple[Configuration, TrajectoryStats]]:
    sim = ensemble.simulation()
    sim.advance(horizon)
    return [(sim.configuration(m), sim.stats(m)) for m in range(len(ensemble.members))]


@dataclass
class AttractivityReport:
    seeds: int
    violations: int
    initially_ordered: bool
    events: int
    first_violation: dict | None = None
    per_seed: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_attractivity(ensemble: CoupledEnsemble, horizon: float, seeds: int) -> AttractivityReport:
    """Count sitewise order violations between consecutive members.

    Seeds ``shared_seed, shared_seed + 1, ...`` are used. Violations are
    checked on the sites touched by every event.
    """
    members = ensemble.members
    ordered = True
    for a, b in zip(members, members[1:]):
        ca = a.initial or Configuration.empty(1)
        cb = b.initial or Configuration.empty(1)
        ordered &= leq(ca, cb)
    report = AttractivityReport(seeds, 0, ordered, 0)
    for i in range(seeds):
        seed = ensemble.shared_seed + i
        sim = ensemble.simulation(seed, order_check=True)
        sim.advance(horizon)
        n = sim.order_violations
        report.per_seed.append(n)
        report.violations += n
        report.events += sim.events_processed
        if n and report.first_violation is None:
            t, site, m = sim.first_order_violation()
            report.first_violation = {
                "seed": seed,
                "time": t,
                "site": site,
                "lower": members[m].label,
                "upper": members[m + 1].label,
            }
    return report


def thinned_arrivals(seed: int, rate_high: float, rate_low: float, horizon: float) -> tuple[np.ndarray, np.ndarray]:
    """Arrivals of a rate-``rate_high`` stream and the marked subset kept at ``rate_low``."""
    if not 0 <= rate_low <= rate_high:
        raise ValueError("need 0 <= rate_low <= rate_high")
    clock = StreamRng(seed, StreamId(StreamKind.BOUNDARY, 0))
    marks = StreamRng(seed, StreamId(StreamKind.MARK, 0))
    times, kept = [], []
    t = 0.0
    while True:
        t += sample_exponential(clock, rate_high)
        if t > horizon:
            break
        times.append(t)
        if marks.uniform() < rate_low / rate_high:
            kept.append(t)
    return np.array(times), np.array(kept)
