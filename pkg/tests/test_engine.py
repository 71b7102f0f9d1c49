import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tasep_lab.core import BoundaryMechanism, Configuration, InvalidParamsError, ModelParams, Transition
from tasep_lab.engine import (
    Bernoulli,
    InvalidHorizonError,
    RunSpec,
    WindowOverflowError,
    digest_of_log,
    evolve,
    reference_evolve,
    simulation_for,
    validate_truncation,
    warm_start,
)


def test_no_entry_stream_stays_empty():
    cfg, st_ = evolve(RunSpec(ModelParams(0.0, 0.0), 500.0, seed=1))
    assert st_.entries_total == 0
    assert cfg.particle_count == 0
    assert st_.pattern_occupation[(0, 0)] == 500.0


def test_invalid_horizon():
    with pytest.raises(InvalidHorizonError):
        RunSpec(ModelParams(0.1), 0.0)
    with pytest.raises(InvalidParamsError):
        RunSpec(ModelParams(0.1), 10.0, initial=Bernoulli(0.2))
    with pytest.raises(InvalidParamsError):
        RunSpec(ModelParams(0.1, reservoir_density=0.0), 10.0)


def test_free_particle_speed():
    spec = RunSpec(ModelParams(0.0), 1000.0, seed=3, initial=Configuration.from_labels([1]))
    cfg, _ = evolve(spec)
    assert abs(cfg.rightmost_occupied / 1000.0 - 1.0) < 0.1


def test_current_on_half_line():
    _, s = evolve(RunSpec(ModelParams(0.3), 2e4, seed=2024))
    assert abs(s.entries_total / 2e4 - 0.21) < 0.01


@pytest.mark.parametrize(
    "params,window,initial",
    [
        (ModelParams(0.3, 0.1), 30, None),
        (ModelParams(0.25, 0.1, num_classes=3), 30, None),
        (ModelParams(0.3, 0.0, reservoir_density=0.3), 12, None),
        (ModelParams(0.2, 0.05), 40, Bernoulli(0.3, first_site=3)),
        (ModelParams(0.3, 0.15, num_classes=2), 25, [Bernoulli(0.3, 3), Configuration.from_labels([2, 1])]),
    ],
)
@pytest.mark.parametrize("seed", [0, 5, 2**63 + 17])
def test_kernel_matches_reference(params, window, initial, seed):
    spec = RunSpec(params, 150.0, seed=seed, window=window, initial=initial)
    cfg, s = evolve(spec)
    ref_cfg, ref_digest, ref_entries = reference_evolve(spec)
    assert cfg == ref_cfg
    assert s.event_log_digest == ref_digest
    assert s.entries_total == ref_entries


def test_kernel_matches_reference_range_three():
    mech = BoundaryMechanism(
        3,
        (
            Transition((0, 0, 0), (1, 0, 0), 0.3),
            Transition((0, 1, 1), (1, 1, 1), 0.4),
            Transition((1, 1, 1), (1, 0, 1), 0.2),
            Transition((0, 0, 1), (1, 1, 1), 0.1),
        ),
    )
    spec = RunSpec(ModelParams(0.0), 200.0, seed=9, window=20, mechanism=mech)
    cfg, s = evolve(spec)
    ref_cfg, ref_digest, _ = reference_evolve(spec)
    assert cfg == ref_cfg and s.event_log_digest == ref_digest
    assert s.removals > 0


def test_lazy_matches_fixed_window():
    lazy = RunSpec(ModelParams(0.3, 0.1), 300.0, seed=4)
    fixed = RunSpec(ModelParams(0.3, 0.1), 300.0, seed=4, window=600, allow_exit=False)
    a_cfg, a = evolve(lazy)
    b_cfg, b = evolve(fixed)
    assert a.event_log_digest == b.event_log_digest
    assert a_cfg == b_cfg


def test_closed_window_overflows():
    with pytest.raises(WindowOverflowError):
        evolve(RunSpec(ModelParams(0.3), 200.0, seed=1, window=5, allow_exit=False))


def test_mass_balance_and_time_partition():
    for spec in (
        RunSpec(ModelParams(0.3, 0.1), 3000.0, seed=8, window=50),
        RunSpec(ModelParams(0.2, 0.05), 3000.0, seed=8, window=60, initial=Bernoulli(0.4)),
        RunSpec(ModelParams(0.3, 0.1), 2000.0, seed=8),
    ):
        cfg, s = evolve(spec)
        assert s.entries_total - s.exits_right - s.removals == cfg.particle_count - s.initial_particles
        total = math.fsum(s.pattern_occupation.values())
        assert abs(total - spec.horizon) <= 1e-9 * spec.horizon
        assert abs(math.fsum(s.occupation_time_site2_by_class.values()) - spec.horizon) <= 1e-9 * spec.horizon
        assert 0 <= s.time_site2_class1_and_site1_empty <= spec.horizon
        assert s.entries_total == sum(s.entries_by_class.values())


def test_class_counters():
    spec = RunSpec(ModelParams(0.25, 0.2, num_classes=3), 5000.0, seed=1, window=100)
    sim = simulation_for(spec)
    sim.advance(spec.horizon)
    s = sim.stats()
    cfg = sim.configuration()
    gross = sum(s.entries_by_class.values())
    destroyed = sum(s.destroyed_by_class.values())
    # every class write either fills a hole or overwrites a particle
    assert gross == s.entries_total + destroyed
    assert s.entries_total - s.exits_right == cfg.particle_count
    log = sim.destructions()
    assert len(log) == destroyed
    assert all(c >= 2 for _, c, _, _ in log)
    assert all(b <= d for _, _, b, d in log)
    # T~ counts time with site 2 of class 1 and site 1 not of class 1
    assert s.time_site2_class1_and_site1_empty <= s.occupation_time_site2_by_class[1]


def test_determinism_and_seed_sensitivity():
    spec = RunSpec(ModelParams(0.2, 0.05), 1000.0, seed=77)
    assert evolve(spec)[1].event_log_digest == evolve(spec)[1].event_log_digest
    other = RunSpec(ModelParams(0.2, 0.05), 1000.0, seed=78)
    assert evolve(spec)[1].event_log_digest != evolve(other)[1].event_log_digest


def test_resume_is_seamless():
    spec = RunSpec(ModelParams(0.3, 0.1), 800.0, seed=5)
    sim = simulation_for(spec)
    for t in np.linspace(0, 800, 17)[1:]:
        sim.advance(float(t))
    assert sim.stats().event_log_digest == evolve(spec)[1].event_log_digest


def test_digest_of_empty_log():
    assert digest_of_log([]) == 0xCBF29CE484222325


def test_validate_truncation_examples():
    lazy = RunSpec(ModelParams(0.3), 300.0, seed=2)
    assert validate_truncation(lazy, 10)
    spec = RunSpec(ModelParams(0.3), 1e3, seed=2, window=20_000, initial=Bernoulli(0.3))
    assert validate_truncation(spec, 10)
    tiny = RunSpec(ModelParams(0.3), 1e3, seed=2, window=5, initial=Bernoulli(0.3))
    assert not validate_truncation(tiny, 5)


def test_warm_start():
    assert warm_start(ModelParams(0.3), 0.0, 1).particle_count == 0
    with pytest.raises(InvalidHorizonError):
        warm_start(ModelParams(0.3), -1.0, 1)
    dens = []
    for s in range(200):
        cfg = warm_start(ModelParams(0.3), 1e4, s, window=128)
        dens.append(cfg.occupancy()[2:50].mean())
    assert abs(np.mean(dens) - 0.30) < 0.02


def test_monotone_in_lambda_with_nested_entries():
    from tasep_lab.coupling import CoupledEnsemble, EnsembleMember, check_attractivity

    ens = CoupledEnsemble(
        (EnsembleMember("a", ModelParams(0.1)), EnsembleMember("b", ModelParams(0.2)), EnsembleMember("c", ModelParams(0.35))),
        shared_seed=10,
    )
    rep = check_attractivity(ens, 500.0, 10)
    assert rep.violations == 0 and rep.events > 0


def test_lazy_window_grows():
    sim = simulation_for(RunSpec(ModelParams(0.3), 400.0, seed=1))
    start = sim.capacity
    sim.advance(400.0)
    assert sim.capacity > start
    assert sim.configuration().rightmost_occupied <= sim.capacity


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**64 - 1), st.floats(0.0, 0.3), st.floats(0.0, 0.19))
def test_reference_agreement_property(seed, lam, eps):
    spec = RunSpec(ModelParams(lam, eps), 60.0, seed=seed, window=15)
    cfg, s = evolve(spec)
    ref_cfg, ref_digest, _ = reference_evolve(spec)
    assert cfg == ref_cfg and s.event_log_digest == ref_digest
