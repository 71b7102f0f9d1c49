"""Monte Carlo estimators over independent replicas.

Every estimator is a pure function of its arguments: replica ``i`` runs on
seed ``master ^ (i * 0x9E3779B97F4A7C15)`` and results are reduced in index
order, so the thread count never changes a single bit of the output.

Confidence intervals use the spread between replicas. Within-run batch
means are reported as a diagnostic in ``details`` only.

Currents and profiles are measured on a finite lattice of ``window`` sites
whose last particle leaves at rate 1. Below density 1/2 the right edge does
not block, and its influence on the entry current decays exponentially in
the window length. Pass ``window=None`` for the exact half-line; this is
much slower since the work then grows with the square of the time.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Sequence

import numpy as np

from .core import (
    BoundaryMechanism,
    Configuration,
    InvalidParamsError,
    ModelParams,
    check_rates,
    concrete_mechanism,
)
from .coupling import EnsembleMember, CoupledEnsemble
from .engine import Bernoulli, Member, Simulation, TagState, class_layout, transition_layout
from .harris import MASK64

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEFAULT_WINDOW = 128


def replica_seed(master: int, index: int) -> int:
    return (int(master) ^ (int(index) * GOLDEN_GAMMA)) & MASK64


def default_threads() -> int:
    env = os.environ.get("TASEP_LAB_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("TASEP_LAB_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def run_replicas(fn: Callable[[int, int], Any], replicas: int, seed: int, threads: int | None = None) -> list:
    """``[fn(i, seed_i) for i in range(replicas)]``, possibly on a thread pool."""
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValueError("threads must be >= 1")
    seeds = [replica_seed(seed, i) for i in range(replicas)]
    if threads == 1 or replicas == 1:
        return [fn(i, s) for i, s in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=min(threads, replicas)) as pool:
        return list(pool.map(fn, range(replicas), seeds))


@dataclass(frozen=True)
class BatchSpec:
    burn_in: float
    horizon: float
    batches: int


@dataclass
class EstimateWithCI:
    point: float
    std_error: float
    replicas: int
    batch_spec: BatchSpec | None = None
    details: dict = field(default_factory=dict)
    warning: str | None = None

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return self.point - z * self.std_error, self.point + z * self.std_error

    def contains(self, value: float, z: float = 3.0) -> bool:
        lo, hi = self.interval(z)
        return lo <= value <= hi


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _batch_means_se(batch_values: np.ndarray) -> float:
    """SE of the grand mean from per-replica batch means (diagnostic)."""
    b = np.asarray(batch_values)
    if b.ndim != 2 or b.shape[1] < 2:
        return math.nan
    within = b.var(axis=1, ddof=1) / b.shape[1]
    return float(math.sqrt(within.sum()) / b.shape[0])


def _check_run(burn_in: float, horizon: float, replicas: int) -> None:
    if burn_in < 0:
        raise InvalidParamsError("burn_in must be >= 0")
    if not horizon > 0:
        raise InvalidParamsError("horizon must be > 0")
    if replicas < 2:
        raise InvalidParamsError("need at least 2 replicas for a standard error")


def _exit_probability(params: ModelParams, window: int | None) -> float | None:
    if window is None:
        return None
    return params.exit_probability if params.reservoir_density is not None else 1.0


def _occupancy_sim(params: ModelParams, seed: int, window: int | None, mechanism=None, **kw) -> Simulation:
    mech = mechanism or concrete_mechanism(params.lam, params.eps)
    return Simulation(
        [Member("occupancy")],
        transition_layout(mech),
        seed,
        window=window,
        exit_probability=_exit_probability(params, window),
        **kw,
    )


# ---------------------------------------------------------------------------
# currents


def estimate_current(
    params: ModelParams,
    burn_in: float,
    horizon: float,
    replicas: int,
    seed: int,
    threads: int | None = None,
    window: int | None = DEFAULT_WINDOW,
    batches: int = 10,
) -> EstimateWithCI:
    """Entries per unit time after ``burn_in``, starting from the empty lattice."""
    _check_run(burn_in, horizon, replicas)

    def one(i, s):
        sim = _occupancy_sim(params, s, window)
        sim.advance(burn_in)
        marks = [sim.stats().entries_total]
        for k in range(1, batches + 1):
            sim.advance(burn_in + horizon * k / batches)
            marks.append(sim.stats().entries_total)
        marks = np.array(marks, dtype=np.float64)
        return (marks[-1] - marks[0]) / horizon, np.diff(marks) / (horizon / batches)

    out = run_replicas(one, replicas, seed, threads)
    values = np.array([v for v, _ in out])
    point, se = _mean_se(values)
    return EstimateWithCI(
        point,
        se,
        replicas,
        BatchSpec(burn_in, horizon, batches),
        {
            "per_replica": values.tolist(),
            "batch_means_se": _batch_means_se(np.array([b for _, b in out])),
            "window": window,
        },
    )


def estimate_class_rates(
    lam: float,
    eps: float,
    num_classes: int,
    horizon: float,
    replicas: int,
    seed: int,
    burn_in: float = 0.0,
    threads: int | None = None,
    window: int | None = DEFAULT_WINDOW,
) -> dict[int, EstimateWithCI]:
    """Class-resolved entry counts per unit time in the class process."""
    _check_run(burn_in, horizon, replicas)
    check_rates(lam, eps)

    def one(i, s):
        sim = Simulation(
            [Member("multiclass", None, num_classes)],
            class_layout(lam, eps, num_classes),
            s,
            window=window,
            exit_probability=None if window is None else 1.0,
        )
        sim.advance(burn_in)
        a = sim.stats().entries_by_class
        sim.advance(burn_in + horizon)
        b = sim.stats().entries_by_class
        return [(b[j] - a[j]) for j in range(1, num_classes + 1)]

    counts = np.array(run_replicas(one, replicas, seed, threads), dtype=np.float64)
    out = {}
    for j in range(1, num_classes + 1):
        point, se = _mean_se(counts[:, j - 1] / horizon)
        out[j] = EstimateWithCI(
            point, se, replicas, BatchSpec(burn_in, horizon, 1), {"counts": counts[:, j - 1].tolist()}
        )
    return out


def _pattern_matches(code: int, pattern: Sequence[int | None]) -> bool:
    return all(v is None or ((code >> i) & 1) == v for i, v in enumerate(pattern))


def estimate_event_rate(
    mechanism: BoundaryMechanism,
    transition: int | tuple[Sequence[int], Sequence[int]],
    pattern: Sequence[int | None],
    window: int,
    burn_in: float,
    horizon: float,
    seed: int,
    replicas: int = 10,
    reservoir_density: float = 0.0,
    threads: int | None = None,
) -> EstimateWithCI:
    """Rings of one transition's clock that find sites 1.. in ``pattern``, per unit time.

    ``pattern`` lists required occupancies of sites 1, 2, ...; ``None`` leaves
    a site free. The second estimate of the same limit, clock rate times the
    fraction of time spent in ``pattern``, is returned in ``details``.
    """
    _check_run(burn_in, horizon, replicas)
    R = mechanism.range
    ti = transition if isinstance(transition, int) else mechanism.index_of(*transition)
    tr = mechanism.transitions[ti]
    pattern = tuple(pattern)
    if len(pattern) > R:
        raise InvalidParamsError(f"pattern longer than the mechanism range {R}")
    if all(v is not None for v in pattern) and len(pattern) == R and pattern == tr.target:
        raise InvalidParamsError("the observed pattern must differ from the transition's target")
    codes = [p for p in range(1 << R) if _pattern_matches(p, pattern)]
    params_exit = 1.0 - reservoir_density

    def one(i, s):
        sim = Simulation(
            [Member("occupancy")],
            transition_layout(mechanism),
            s,
            window=window,
            exit_probability=params_exit if params_exit > 0 else None,
        )
        sim.advance(burn_in)
        a = sim.stats()
        sim.advance(burn_in + horizon)
        b = sim.stats()
        counted = sum(int(b.channel_pattern_counts[ti, p] - a.channel_pattern_counts[ti, p]) for p in codes)
        occ = sum(
            b.pattern_occupation[k] - a.pattern_occupation[k]
            for k in b.pattern_occupation
            if _pattern_matches(sum(v << n for n, v in enumerate(k)), pattern)
        )
        return counted / horizon, tr.rate * occ / horizon

    out = np.array(run_replicas(one, replicas, seed, threads))
    point, se = _mean_se(out[:, 0])
    p2, se2 = _mean_se(out[:, 1])
    return EstimateWithCI(
        point,
        se,
        replicas,
        BatchSpec(burn_in, horizon, 1),
        {"occupation_estimate": p2, "occupation_std_error": se2},
    )


# ---------------------------------------------------------------------------
# survival of a second-class particle


@dataclass(frozen=True)
class SurvivalRecord:
    entry_time: float
    death_time: float | None
    max_position: int
    classification: str  # survived | died | censored
    mid_time: float | None = None
    reach_time: float | None = None
    path: np.ndarray | None = None
    window: int = 0


@dataclass
class SurvivalEstimate(EstimateWithCI):
    survived: int = 0
    died: int = 0
    censored: int = 0
    speed: EstimateWithCI | None = None
    records: list[SurvivalRecord] = field(default_factory=list)

    @property
    def censored_fraction(self) -> float:
        return self.censored / max(1, self.survived + self.died + self.censored)

    @property
    def unreliable(self) -> bool:
        return self.censored_fraction > 0.05


def default_t_max(lam: float, x_far: int) -> float:
    if lam >= 0.5:
        return 5e3
    return max(5e3, 20.0 * x_far / (1.0 - 2.0 * lam))


def survival_run(
    lam: float,
    seed: int,
    x_far: int = 200,
    t_max: float | None = None,
    epsilon_probe: float = 0.0,
    window: int | None = None,
    path_cadence: float | None = None,
) -> SurvivalRecord:
    """One tagged second-class particle started on site 1.

    Site 2 holds a first-class particle and sites 3, 4, ... are occupied by
    first-class particles with probability ``lam``. First-class particles
    enter at rate ``lam`` and destroy the tagged particle if it sits on
    site 1. The lattice is truncated at ``window`` sites; a run in which the
    tagged particle meets the region influenced by the truncation is
    repeated on a window twice as long.
    """
    t_max = default_t_max(lam, x_far) if t_max is None else t_max
    L = window or (2 * x_far + 100)
    x_mid = max(1, x_far // 2)
    initial = [Bernoulli(lam, first_site=3), Configuration.from_labels([2, 1])]
    while True:
        sim = Simulation(
            [Member("multiclass", initial, 2)],
            class_layout(lam, epsilon_probe, 2),
            seed,
            window=L,
            exit_probability=1.0 - lam,
            tag=(0, 1, x_far, x_mid),
            track_front=True,
            path_cadence=path_cadence,
        )
        sim.advance(t_max)
        tag = sim.tag()
        if tag.state == TagState.UNCERTAIN:
            L *= 2
            continue
        break
    if tag.state == TagState.DIED:
        cls = "died"
    elif tag.state == TagState.REACHED:
        cls = "survived"
    else:
        cls = "censored"
    return SurvivalRecord(
        entry_time=0.0,
        death_time=tag.death_time,
        max_position=tag.max_position,
        classification=cls,
        mid_time=tag.mid_time,
        reach_time=tag.reach_time,
        path=sim.path_samples() if path_cadence is not None else None,
        window=L,
    )


def estimate_survival(
    lam: float,
    epsilon_probe: float = 0.0,
    x_far: int = 200,
    t_max: float | None = None,
    replicas: int = 200,
    seed: int = 0,
    threads: int | None = None,
    path_cadence: float | None = None,
) -> SurvivalEstimate:
    """Fraction of tagged second-class particles reaching ``x_far`` alive.

    Censored runs are excluded from the ratio; more than 5% of them flags the
    estimate as unreliable. The survivors' speed is measured between
    ``x_far // 2`` and ``x_far`` as a ratio of summed distances and times.
    """
    if not 0.0 <= lam <= 0.5:
        raise InvalidParamsError("lam must lie in [0, 1/2]")
    if epsilon_probe < 0:
        raise InvalidParamsError("epsilon_probe must be >= 0")
    if x_far < 10:
        raise InvalidParamsError("x_far must be >= 10")
    if t_max is not None and not t_max > 0:
        raise InvalidParamsError("t_max must be > 0")
    if replicas < 2:
        raise InvalidParamsError("need at least 2 replicas")
    t_max = default_t_max(lam, x_far) if t_max is None else float(t_max)

    records = run_replicas(
        lambda i, s: survival_run(lam, s, x_far, t_max, epsilon_probe, path_cadence=path_cadence),
        replicas,
        seed,
        threads,
    )
    survived = sum(r.classification == "survived" for r in records)
    died = sum(r.classification == "died" for r in records)
    censored = len(records) - survived - died
    n = survived + died
    if n:
        p = survived / n
        se = math.sqrt(p * (1 - p) / n) if n > 1 else math.nan
    else:
        p, se = math.nan, math.nan

    speed = None
    surv = [r for r in records if r.classification == "survived" and r.mid_time is not None]
    if surv:
        dx = np.full(len(surv), float(x_far - max(1, x_far // 2)))
        dt = np.array([r.reach_time - r.mid_time for r in surv])
        v = dx.sum() / dt.sum()
        vse = math.nan
        if len(surv) > 1:
            resid = dx - v * dt
            vse = float(math.sqrt(np.sum(resid**2) / (len(surv) - 1) / len(surv)) / dt.mean())
        speed = EstimateWithCI(float(v), vse, len(surv), None, {"x_mid": x_far // 2, "x_far": x_far})

    est = SurvivalEstimate(
        point=float(p),
        std_error=float(se),
        replicas=replicas,
        batch_spec=BatchSpec(0.0, t_max, 1),
        details={"x_far": x_far, "t_max": t_max, "lam": lam},
        survived=survived,
        died=died,
        censored=censored,
        speed=speed,
        records=records,
    )
    if est.unreliable:
        est.warning = (
            f"censored fraction {est.censored_fraction:.3f} exceeds 0.05; raise t_max or lower x_far"
        )
    return est


# ---------------------------------------------------------------------------
# first-order coefficient


@dataclass
class FirstOrderResult:
    slope: EstimateWithCI
    per_eps: list[EstimateWithCI]
    currents: list[EstimateWithCI]
    eps_grid: tuple[float, ...]


def _wls_intercept(x: np.ndarray, y: np.ndarray, se: np.ndarray) -> tuple[float, float, float]:
    """Weighted least squares of y on (1, x); returns intercept, its SE, slope."""
    w = 1.0 / se**2
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(A)
    beta = cov @ (X.T @ (w * y))
    return float(beta[0]), float(math.sqrt(cov[0, 0])), float(beta[1])


def estimate_first_order(
    lam: float,
    eps_grid: Sequence[float],
    burn_in: float,
    horizon: float,
    replicas: int,
    seed: int,
    threads: int | None = None,
    window: int | None = DEFAULT_WINDOW,
) -> FirstOrderResult:
    """Derivative in ``eps`` at 0 of the entry current.

    For each ``eps`` a model member runs coupled to a TASEP(lam) member;
    ``(N(eps) - N(0)) / (eps * horizon)`` is averaged over replicas and the
    weighted least-squares line through these points is read at ``eps = 0``.
    Every ``eps`` uses its own block of replica seeds.
    """
    eps_grid = tuple(float(e) for e in eps_grid)
    if len(eps_grid) < 3:
        raise InvalidParamsError("eps_grid needs at least 3 points")
    for e in eps_grid:
        if not 0.0 < e < 0.5 - lam:
            raise InvalidParamsError(f"eps={e} outside (0, 1/2 - lam)")
    _check_run(burn_in, horizon, replicas)

    per_eps, currents, negatives = [], [], 0
    for k, eps in enumerate(eps_grid):
        ens = CoupledEnsemble(
            (EnsembleMember("tasep", ModelParams(lam)), EnsembleMember("model", ModelParams(lam, eps))),
            0,
            window,
        )

        def one(i, s, ens=ens):
            sim = ens.simulation(s)
            sim.advance(burn_in)
            a0, a1 = sim.stats(0).entries_total, sim.stats(1).entries_total
            sim.advance(burn_in + horizon)
            b0, b1 = sim.stats(0).entries_total, sim.stats(1).entries_total
            return (b1 - a1) - (b0 - a0), (b1 - a1)

        block = replica_seed(seed, (k + 1) * 0x100000)
        out = np.array(run_replicas(one, replicas, block, threads), dtype=np.float64)
        negatives += int(np.sum(out[:, 0] < 0))
        y = out[:, 0] / (eps * horizon)
        m, s = _mean_se(y)
        per_eps.append(EstimateWithCI(m, s, replicas, BatchSpec(burn_in, horizon, 1), {"eps": eps}))
        cm, cs = _mean_se(out[:, 1] / horizon)
        currents.append(EstimateWithCI(cm, cs, replicas, BatchSpec(burn_in, horizon, 1), {"eps": eps}))

    x = np.array(eps_grid)
    yv = np.array([e.point for e in per_eps])
    sv = np.array([e.std_error for e in per_eps])
    if np.any(~(sv > 0)):
        sv = np.where(sv > 0, sv, np.nanmax(np.append(sv, 1e-12)))
    icpt, ise, quad = _wls_intercept(x, yv, sv)
    slope = EstimateWithCI(
        icpt,
        ise,
        replicas,
        BatchSpec(burn_in, horizon, 1),
        {"curvature": quad, "negative_differences": negatives, "eps_grid": list(eps_grid)},
    )
    return FirstOrderResult(slope, per_eps, currents, eps_grid)


# ---------------------------------------------------------------------------
# densities


class DensityRoot(NamedTuple):
    rho: float
    at_boundary: bool


def rho_from_current(j: float) -> DensityRoot:
    """Root of ``rho * (1 - rho) = j`` in [0, 1/2]."""
    if not 0.0 <= j <= 0.25:
        raise InvalidParamsError(f"current {j} outside [0, 1/4]")
    rho = (1.0 - math.sqrt(1.0 - 4.0 * j)) / 2.0
    return DensityRoot(rho, j == 0.25)


@dataclass
class DensityProfile:
    sites: np.ndarray
    point: np.ndarray
    std_error: np.ndarray
    replicas: int
    batch_spec: BatchSpec

    def __len__(self):
        return len(self.sites)

    def __getitem__(self, k: int) -> EstimateWithCI:
        return EstimateWithCI(float(self.point[k]), float(self.std_error[k]), self.replicas, self.batch_spec)


def density_profile(
    params: ModelParams,
    burn_in: float,
    horizon: float,
    sites: Sequence[int],
    replicas: int,
    seed: int,
    threads: int | None = None,
    window: int | None = DEFAULT_WINDOW,
) -> DensityProfile:
    """Time-averaged occupation of ``sites`` over ``[burn_in, burn_in + horizon]``."""
    _check_run(burn_in, horizon, replicas)
    sites = np.asarray(list(sites), dtype=np.int64)
    if sites.size == 0 or sites.min() < 1:
        raise InvalidParamsError("sites must be a non-empty set of positive integers")
    if window is not None and sites.max() > window:
        raise InvalidParamsError("requested sites lie beyond the window")

    def one(i, s):
        sim = _occupancy_sim(params, s, window, track_density=True)
        sim.advance(burn_in)
        a = sim.occupation_times()
        sim.advance(burn_in + horizon)
        b = sim.occupation_times()
        n = max(len(a), sites.max())
        a = np.pad(a, (0, n - len(a)))
        b = np.pad(b, (0, n - len(b)))
        return (b - a)[sites - 1] / horizon

    vals = np.array(run_replicas(one, replicas, seed, threads))
    point = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(replicas)
    return DensityProfile(sites, point, se, replicas, BatchSpec(burn_in, horizon, 1))
