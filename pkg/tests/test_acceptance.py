"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v -s``. The whole suite
takes several minutes on one core.
"""
import json
import math

import numpy as np
import pytest

from tasep_lab.cli import run
from tasep_lab.core import ModelParams, concrete_mechanism
from tasep_lab.coupling import check_attractivity, sandwich
from tasep_lab.estimators import (
    density_profile,
    estimate_class_rates,
    estimate_current,
    estimate_first_order,
    estimate_survival,
)
from tasep_lab.multiclass import projection_report
from tasep_lab.oracle import FiniteModelSpec, build_generator, exact_entry_current, stationary_distribution


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")

    return emit


def test_criterion_1_zero_eps_current(report):
    lines, ok = [], True
    for lam in (0.1, 0.2, 0.3, 0.4):
        e = estimate_current(ModelParams(lam), 5e3, 2e4, 50, seed=1000 + int(lam * 10))
        exact = lam * (1 - lam)
        good = abs(e.point - exact) <= 3 * e.std_error and e.std_error <= 0.005
        ok &= good
        lines.append(f"lam={lam} j={e.point:.5f}+-{e.std_error:.5f} vs {exact:.4f}")
    report(1, "zero-eps current", ok, "; ".join(lines))
    assert ok


def test_criterion_2_oracle_equivalence(report):
    lines, ok = [], True
    for L in (2, 3, 4):
        for lam in (0.1, 0.3):
            for eps in (0.0, 0.05):
                spec = FiniteModelSpec(L, concrete_mechanism(lam, eps))
                Q = build_generator(spec)
                pi = stationary_distribution(Q)
                residual = float(np.max(np.abs(pi @ Q)))
                exact = exact_entry_current(pi, spec.mechanism, tol=1e-10)
                e = estimate_current(ModelParams(lam, eps), 1e3, 2e4, 20, seed=7 * L, window=L)
                good = abs(e.point - exact) <= 3 * e.std_error and residual <= 1e-10
                ok &= good
                if not good:
                    lines.append(f"L={L} lam={lam} eps={eps}: {e.point:.5f}+-{e.std_error:.5f} vs {exact:.5f}")
    report(2, "oracle equivalence", ok, "; ".join(lines) or "12 grid points within 3 SE, flux balance <= 1e-10")
    assert ok


def test_criterion_3_survival(report):
    p0 = estimate_survival(0.0, replicas=200, seed=30)
    p_half = estimate_survival(0.5, x_far=200, t_max=5e3, replicas=400, seed=31)
    grid = {lam: estimate_survival(lam, replicas=1000, seed=32 + int(100 * lam)) for lam in (0.1, 0.2, 0.3, 0.4)}
    lams = sorted(grid)
    monotone = all(
        grid[b].point <= grid[a].point + 3 * math.hypot(grid[a].std_error, grid[b].std_error)
        for a, b in zip(lams, lams[1:])
    )
    s25 = estimate_survival(0.25, replicas=1000, seed=33)
    speed_ok = s25.speed is not None and abs(s25.speed.point - 0.5) <= 0.05
    reliable = not any(e.unreliable for e in (p0, p_half, s25, *grid.values()))
    ok = p0.point == 1.0 and p_half.point <= 0.02 and monotone and speed_ok and reliable
    detail = (
        f"p(0)={p0.point}, p(0.5)={p_half.point:.4f}, "
        + ", ".join(f"p({l})={grid[l].point:.3f}+-{grid[l].std_error:.3f}" for l in lams)
        + f", speed(0.25)={s25.speed.point:.4f}"
    )
    report(3, "survival endpoints and shape", ok, detail)
    assert ok


def test_criterion_4_first_order_law(report):
    lam = 0.25
    r = estimate_first_order(lam, [0.01, 0.02, 0.04], 2e3, 2e4, 200, seed=40)
    p = estimate_survival(lam, replicas=2000, seed=41)
    product = lam * (1 - lam) * p.point
    product_se = lam * (1 - lam) * p.std_error
    tol = 3 * math.hypot(r.slope.std_error, product_se) + 0.15 * product
    ok = abs(r.slope.point - product) <= tol and not p.unreliable
    detail = (
        f"slope={r.slope.point:.5f}+-{r.slope.std_error:.5f}, "
        f"lam(1-lam)p={product:.5f}+-{product_se:.5f}, tol={tol:.5f}, "
        f"negative differences={r.slope.details['negative_differences']}"
    )
    report(4, "first-order law", ok, detail)
    assert ok


def test_criterion_5_class_layering(report):
    lam, t, lines, ok = 0.25, 2e4, [], True
    for eps in (0.02, 0.05):
        rates = estimate_class_rates(lam, eps, 3, t, 20, seed=50 + int(eps * 100))
        r2, r3 = rates[2].point, rates[3].point
        good = r2 <= 1.1 * eps * lam * (1 - lam) and r3 / r2 <= 10 * eps
        ok &= good
        lines.append(f"eps={eps}: rate2={r2:.6f} (cap {1.1 * eps * lam * (1 - lam):.6f}), n3/n2={r3 / r2:.4f} (cap {10 * eps})")
    report(5, "class layering", ok, "; ".join(lines))
    assert ok


def test_criterion_6_projection_identity(report):
    reps = [projection_report(0.25, 0.05, 3, 1e3, s) for s in range(100)]
    failing = [s for s, r in enumerate(reps) if not r.holds]
    ok = not failing
    report(6, "projection identity", ok, f"{100 - len(failing)}/100 seeds exact, {sum(r.events for r in reps)} events")
    assert ok


def test_criterion_7_attractivity(report):
    rep = check_attractivity(sandwich(0.25, 0.05, seed=0), 1e3, 100)
    ok = rep.violations == 0 and rep.initially_ordered
    report(7, "attractivity", ok, f"{rep.violations} violations over {rep.seeds} seeds, {rep.events} events")
    assert ok


def test_criterion_8_density_sandwich(report):
    prof = density_profile(ModelParams(0.25, 0.05), 5e3, 2e4, range(3, 51), 50, seed=80)
    lo = prof.point >= 0.25 - 3 * prof.std_error
    hi = prof.point <= 0.30 + 3 * prof.std_error
    ok = bool(np.all(lo & hi))
    detail = f"density in [{prof.point.min():.4f}, {prof.point.max():.4f}], max SE {prof.std_error.max():.4f}"
    report(8, "density sandwich", ok, detail)
    assert ok


def test_criterion_9_determinism(report, tmp_path):
    cfg = {"lambda": 0.25, "eps_grid": [0.01, 0.02, 0.04], "burn_in": 200, "horizon": 2000, "replicas": 16}
    assert run("first-order", cfg, seed=90, threads=1, out=tmp_path / "a") == 0
    manifest = json.loads((tmp_path / "a" / "first-order.manifest.json").read_text())
    assert run("first-order", manifest["config"], threads=1, out=tmp_path / "b") == 0
    assert run("first-order", cfg, seed=90, threads=8, out=tmp_path / "c") == 0
    a, b, c = ((tmp_path / d / "first-order.csv").read_bytes() for d in "abc")
    ok = a == b == c
    report(9, "determinism and thread invariance", ok, "manifest rerun and threads=8 byte-identical" if ok else "outputs differ")
    assert ok
